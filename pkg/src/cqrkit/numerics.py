"""Shared numerical primitives: check loss, Cholesky factorization,
Gauss-Legendre quadrature on the unit interval, and seeded sampling."""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = [
    "NotPositiveDefiniteError",
    "IntegrationError",
    "check_loss",
    "cholesky",
    "solve_spd",
    "quadrature_unit_interval",
    "make_rng",
    "spawn_rng",
    "sample_mvnormal",
]

DEFAULT_NODES = 512
PANEL_NODES = 32
ENDPOINT_EPS = 1e-10


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


class IntegrationError(ArithmeticError):
    pass


def check_loss(t, tau):
    """Quantile check function ``tau * t_+ + (1 - tau) * t_-``.

    Works elementwise on arrays; ``tau`` may broadcast against ``t``.
    """
    tau_arr = np.asarray(tau, dtype=float)
    if np.any((tau_arr <= 0.0) | (tau_arr >= 1.0)):
        raise ValueError(f"tau must lie in (0, 1), got {tau!r}")
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 0.0, tau_arr * t, (tau_arr - 1.0) * t)
    return float(out) if out.ndim == 0 else out


def cholesky(a) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == a``.

    Raises
    ------
    NotPositiveDefiniteError
        If ``a`` is not symmetric positive definite.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12 * scale):
        raise NotPositiveDefiniteError("not positive definite: matrix is not symmetric")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("not positive definite") from exc


def solve_spd(a, b) -> np.ndarray:
    """Solve ``a x = b`` for symmetric positive definite ``a`` via Cholesky."""
    from scipy.linalg import solve_triangular

    low = cholesky(a)
    z = solve_triangular(low, np.asarray(b, dtype=float), lower=True)
    return solve_triangular(low.T, z, lower=False)


def _panel_sums(g, a: np.ndarray, b: np.ndarray, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    u = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    vals = np.asarray(g(u), dtype=float)
    if vals.shape != u.shape:
        vals = np.broadcast_to(vals, u.shape)
    if not np.all(np.isfinite(vals)):
        bad = u[~np.isfinite(vals)][0]
        raise IntegrationError(f"integrand is not finite at u={bad!r}")
    return half * (vals.reshape(a.size, -1) @ w)


def quadrature_unit_interval(
    g,
    nodes: int = DEFAULT_NODES,
    eps: float = ENDPOINT_EPS,
    rtol: float = 1e-13,
    max_panels: int = 1 << 14,
) -> float:
    """Composite Gauss-Legendre estimate of the integral of ``g`` over (0, 1).

    The interval is truncated to ``(eps, 1 - eps)`` and split into equal
    panels of 32 nodes (``nodes`` in total). A panel whose value disagrees
    with the sum over its two halves by more than ``rtol`` times the
    running total is bisected again, which resolves narrow interior
    features such as the spike of a tight mixture component. ``g`` must
    accept a numpy array.
    """
    if nodes < 16:
        raise ValueError("nodes must be at least 16")
    per = min(PANEL_NODES, nodes)
    x, w = leggauss(per)
    edges = np.linspace(eps, 1.0 - eps, max(1, nodes // per) + 1)
    a, b = edges[:-1], edges[1:]
    coarse = _panel_sums(g, a, b, x, w)
    done = 0.0
    while a.size:
        m = 0.5 * (a + b)
        fine = _panel_sums(g, np.concatenate([a, m]), np.concatenate([m, b]), x, w)
        fine = fine[: a.size] + fine[a.size :]
        total = done + float(np.sum(fine))
        ok = np.abs(fine - coarse) <= rtol * max(abs(total), 1e-300)
        if a.size * 2 > max_panels:
            ok[:] = True
        done += float(np.sum(fine[ok]))
        bad = ~ok
        a, b, m = a[bad], b[bad], m[bad]
        # children of a rejected panel become the next generation
        coarse = np.concatenate([_panel_sums(g, a, m, x, w), _panel_sums(g, m, b, x, w)]) if a.size else coarse[:0]
        a, b = np.concatenate([a, m]), np.concatenate([m, b])
    return done


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; ``seed`` may be an int or a sequence of ints."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def spawn_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent stream for the child identified by ``keys``.

    Derived from the root seed alone, so replication ``i`` draws the same
    numbers whether it runs first, last, or in another process.
    """
    return make_rng([int(seed), *map(int, keys)])


def sample_mvnormal(rng: np.random.Generator, mean, cov, n: int) -> np.ndarray:
    """``n`` rows drawn from N(mean, cov) as ``mean + L z``."""
    low = cholesky(cov)
    dim = low.shape[0]
    mean = np.broadcast_to(np.asarray(mean, dtype=float), (dim,))
    z = rng.standard_normal((n, dim))
    return mean + z @ low.T
