"""Time the compiled simplex kernel against the pure-Python fallback.

Both kernels solve the same composite check-loss programs; the script
reports the median wall time per solve, the speedup, and the largest
objective gap between the two backends.

    python3 benchmarks/bench_kernel.py --sizes 50x4x9 100x8x19 --repeat 3
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time

import numpy as np

from cqrkit import lp


def _problem(n: int, p: int, K: int, seed: int) -> lp.LpProblem:
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[: min(3, p)] = (3.0, 1.5, 2.0)[: min(3, p)]
    y = X @ beta + rng.standard_t(3, n)
    X = X - X.mean(axis=0)
    taus = np.arange(1, K + 1) / (K + 1)
    return lp.build_cqr_lp(X, y, taus)


def _time(prob: lp.LpProblem, method: str, repeat: int) -> tuple[float, lp.LpSolution]:
    times = []
    sol = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        sol = lp.solve(prob, method=method)
        times.append(time.perf_counter() - t0)
    return statistics.median(times), sol


def _parse_size(text: str) -> tuple[int, int, int]:
    try:
        n, p, K = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like NxPxK, got {text!r}") from None
    return n, p, K


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", nargs="+", type=_parse_size, default=[(50, 4, 9), (100, 8, 19), (200, 8, 19)])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if lp.BACKEND != "cython":
        print("compiled kernel is not available; build the package first", file=sys.stderr)
        return 1

    header = f"{'n':>5} {'p':>3} {'K':>3} {'cython [s]':>11} {'python [s]':>11} {'speedup':>8} {'iters':>7} {'|dobj|':>9}"
    print(header)
    print("-" * len(header))
    for n, p, K in args.sizes:
        prob = _problem(n, p, K, args.seed)
        tc, sc = _time(prob, "cython", args.repeat)
        tp, sp = _time(prob, "python", args.repeat)
        gap = abs(sc.value - sp.value)
        print(f"{n:>5} {p:>3} {K:>3} {tc:>11.4f} {tp:>11.4f} {tp / tc:>8.1f} {sc.iterations:>7} {gap:>9.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
