"""Standard-form linear programs and their simplex solvers.

Two solvers live here:

* :func:`solve_dense` is a textbook revised primal simplex with Bland's
  rule and an explicit two-phase start. It handles any ``min c.x`` with
  ``A x = rhs, x >= 0`` that fits in memory as a dense matrix.
* check-loss problems produced by :func:`build_cqr_lp` carry their
  structure, and :func:`solve` routes them to a kernel that never forms
  ``A`` (compiled with Cython when available, numpy otherwise).
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _simplex_py

try:
    if os.environ.get("CQRKIT_PURE_PYTHON"):
        raise ImportError("pure-Python kernel requested")
    from ._simplex import check_loss_simplex as _compiled_kernel
except ImportError:  # pragma: no cover - depends on the build
    _compiled_kernel = None

BACKEND = "cython" if _compiled_kernel is not None else "python"

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-8
OPT_TOL = 1e-9

__all__ = [
    "BACKEND",
    "CheckLossStructure",
    "LpError",
    "LpProblem",
    "LpSolution",
    "Status",
    "build_cqr_lp",
    "kernel",
    "solve",
    "solve_dense",
]


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"
    NUMERICAL = "numerical_failure"


_KERNEL_STATUS = {
    _simplex_py.OPTIMAL: Status.OPTIMAL,
    _simplex_py.UNBOUNDED: Status.UNBOUNDED,
    _simplex_py.ITERATION_LIMIT: Status.ITERATION_LIMIT,
    _simplex_py.SINGULAR: Status.NUMERICAL,
}


class LpError(RuntimeError):
    """Raised by callers that need an optimal solution and did not get one."""

    def __init__(self, status, message=""):
        self.status = Status(status)
        super().__init__(message or f"LP solve ended with status {self.status.value}")


def kernel(backend: str = "auto"):
    """The check-loss kernel for ``backend`` in {"auto", "cython", "python"}."""
    if backend == "python":
        return _simplex_py.check_loss_simplex
    if backend == "cython":
        if _compiled_kernel is None:
            raise ImportError("compiled kernel cqrkit._simplex is not built")
        return _compiled_kernel
    if backend != "auto":
        raise ValueError(f"unknown backend {backend!r}")
    return _compiled_kernel or _simplex_py.check_loss_simplex


@dataclass(frozen=True)
class CheckLossStructure:
    """The data behind a composite check-loss LP.

    Row ``r = k * n + i`` pairs observation ``i`` with level ``taus[k]``.
    Columns are ``u+ (m) | u- (m) | t+ (P) | t- (P)`` where
    ``t = (b_1..b_K, beta_1..beta_p)``, ``m = n K`` and ``P = K + p``.
    """

    X: np.ndarray
    y: np.ndarray
    taus: np.ndarray
    penalty: np.ndarray  # per-slope weights, length p

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def K(self) -> int:
        return self.taus.size

    @property
    def m(self) -> int:
        return self.n * self.K

    @property
    def n_params(self) -> int:
        return self.K + self.p

    @property
    def param_costs(self) -> np.ndarray:
        return np.concatenate([np.zeros(self.K), self.penalty])

    def design(self) -> np.ndarray:
        """Dense m x P matrix mapping ``t`` to fitted values."""
        n, K = self.n, self.K
        D = np.zeros((self.m, self.n_params))
        for k in range(K):
            D[k * n : (k + 1) * n, k] = 1.0
            D[k * n : (k + 1) * n, K:] = self.X
        return D

    def unpack(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(intercepts, slopes) from a full LP variable vector."""
        m, P, K = self.m, self.n_params, self.K
        t = x[2 * m : 2 * m + P] - x[2 * m + P : 2 * m + 2 * P]
        return t[:K], t[K:]

    def objective(self, intercepts, beta) -> float:
        """Composite check loss plus weighted l1 penalty, evaluated directly."""
        r = self.y[None, :] - np.asarray(intercepts)[:, None] - (self.X @ beta)[None, :]
        tau = self.taus[:, None]
        loss = np.where(r >= 0.0, tau * r, (tau - 1.0) * r).sum()
        return float(loss + self.penalty @ np.abs(beta))


@dataclass
class LpProblem:
    """``min c.x  s.t.  A x = rhs,  x >= 0``.

    ``c`` and ``A`` may be materialized lazily from ``structure``.
    """

    _c: np.ndarray | None = None
    _A: np.ndarray | None = None
    rhs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    structure: CheckLossStructure | None = None

    def __post_init__(self):
        self.rhs = np.asarray(self.rhs, dtype=float)
        if self._c is not None:
            self._c = np.asarray(self._c, dtype=float)
        if self._A is not None:
            self._A = np.atleast_2d(np.asarray(self._A, dtype=float))
            if self._A.shape != (self.rhs.size, self._c.size):
                raise ValueError(
                    f"A has shape {self._A.shape}; expected ({self.rhs.size}, {self._c.size})"
                )
            if not (np.all(np.isfinite(self._A)) and np.all(np.isfinite(self._c)) and np.all(np.isfinite(self.rhs))):
                raise ValueError("LP data must be finite")

    @classmethod
    def from_arrays(cls, c, A, rhs) -> "LpProblem":
        return cls(np.asarray(c, dtype=float), np.asarray(A, dtype=float), np.asarray(rhs, dtype=float))

    @cached_property
    def c(self) -> np.ndarray:
        if self._c is not None:
            return self._c
        s = self.structure
        tau = np.repeat(s.taus, s.n)
        w = s.param_costs
        return np.concatenate([tau, 1.0 - tau, w, w])

    @cached_property
    def A(self) -> np.ndarray:
        if self._A is not None:
            return self._A
        D = self.structure.design()
        eye = np.eye(self.structure.m)
        return np.hstack([eye, -eye, D, -D])

    @property
    def n_vars(self) -> int:
        if self._c is not None:
            return self._c.size
        s = self.structure
        return 2 * s.m + 2 * s.n_params

    @property
    def n_constraints(self) -> int:
        return self.rhs.size


@dataclass
class LpSolution:
    status: Status
    value: float
    x: np.ndarray
    basis: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    iterations: int
    backend: str = "dense"

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


def build_cqr_lp(X, y, taus, penalty_weights=None) -> LpProblem:
    """LP for the composite check loss of ``(X, y)`` at levels ``taus``.

    With ``penalty_weights`` (one per column of ``X``) each slope also pays
    ``w_j |beta_j|``, split over ``beta+_j`` and ``beta-_j``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim == 1:
        X = X.reshape(-1, 1) if X.size else np.zeros((y.size, 0))
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    n, p = X.shape
    if n != y.size:
        raise ValueError(f"X has {n} rows but y has {y.size} entries")
    if n < 1 or taus.size < 1:
        raise ValueError("need at least one observation and one quantile level")
    if np.any((taus <= 0) | (taus >= 1)):
        raise ValueError("quantile levels must lie in (0, 1)")
    if penalty_weights is None:
        pen = np.zeros(p)
    else:
        pen = np.asarray(penalty_weights, dtype=float).ravel()
        if pen.size != p:
            raise ValueError(f"expected {p} penalty weights, got {pen.size}")
        if np.any(pen < 0) or not np.all(np.isfinite(pen)):
            raise ValueError("penalty weights must be finite and nonnegative")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    structure = CheckLossStructure(np.ascontiguousarray(X), y.copy(), taus.copy(), pen)
    return LpProblem(rhs=np.tile(y, taus.size), structure=structure)


# ---------------------------------------------------------------------------
# structured path


def _solve_structured(prob: LpProblem, max_iterations: int, backend: str, bland: bool) -> LpSolution:
    s = prob.structure
    run = kernel(backend)
    status, it, theta, resid, duals, rows, cols, signs = run(
        s.X, s.y, s.taus, s.param_costs, max_iter=max_iterations, bland=bland,
        tol_opt=OPT_TOL, tol_piv=PIVOT_TOL,
    )
    m, P = s.m, s.n_params
    interp = np.zeros(m, dtype=bool)
    interp[rows] = True
    x = np.concatenate([
        np.where(interp, 0.0, np.maximum(resid, 0.0)),
        np.where(interp, 0.0, np.maximum(-resid, 0.0)),
        np.maximum(theta, 0.0),
        np.maximum(-theta, 0.0),
    ])
    # D^T pi without forming D
    pi2 = duals.reshape(s.K, s.n)
    dpi = np.concatenate([pi2.sum(axis=1), s.X.T @ pi2.sum(axis=0)])
    tau = np.repeat(s.taus, s.n)
    w = s.param_costs
    rc = np.concatenate([tau - duals, 1.0 - tau + duals, w - dpi, w + dpi])
    slack_rows = np.nonzero(~interp)[0]
    slack_var = np.where(resid[slack_rows] >= 0.0, slack_rows, m + slack_rows)
    param_var = np.where(signs > 0, 2 * m + cols, 2 * m + P + cols)
    basis = np.sort(np.concatenate([slack_var, param_var]).astype(np.intp))
    value = s.objective(theta[: s.K], theta[s.K :])
    return LpSolution(
        status=_KERNEL_STATUS[status],
        value=value,
        x=x,
        basis=basis,
        duals=duals,
        reduced_costs=rc,
        iterations=it,
        backend=BACKEND if backend == "auto" else backend,
    )


# ---------------------------------------------------------------------------
# dense path


def _bland_simplex(A, b, c, basis, binv, allowed, max_iter, it0):
    """Phase loop shared by both phases. Mutates ``basis``/``binv`` in place."""
    it = it0
    since_refactor = 0
    while True:
        xb = binv @ b
        pi = c[basis] @ binv
        rc = c - pi @ A
        cand = np.nonzero(allowed & (rc < -OPT_TOL))[0]
        cand = cand[~np.isin(cand, basis)]
        if cand.size == 0:
            return Status.OPTIMAL, it
        if it >= max_iter:
            return Status.ITERATION_LIMIT, it
        q = int(cand[0])
        d = binv @ A[:, q]
        rows = np.nonzero(d > PIVOT_TOL)[0]
        if rows.size == 0:
            return Status.UNBOUNDED, it
        ratios = np.maximum(xb[rows], 0.0) / d[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * (1.0 + best)]
        leave = int(ties[np.argmin(basis[ties])])
        it += 1
        # eta update of the explicit inverse
        piv = d[leave]
        row = binv[leave] / piv
        binv -= np.outer(d, row)
        binv[leave] = row
        basis[leave] = q
        since_refactor += 1
        if since_refactor >= 50:
            binv[:] = np.linalg.inv(A[:, basis])
            since_refactor = 0


def solve_dense(prob: LpProblem, max_iterations: int = 50_000) -> LpSolution:
    """Two-phase revised primal simplex with Bland's smallest-index rule."""
    A = np.array(prob.A, dtype=float)
    c = np.asarray(prob.c, dtype=float)
    b = np.array(prob.rhs, dtype=float)
    M, N = A.shape
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    # crash basis: a unit column per row where one exists, else an artificial
    basis = np.full(M, -1, dtype=np.intp)
    for j in range(N):
        col = A[:, j]
        nz = np.nonzero(col)[0]
        if nz.size == 1 and col[nz[0]] == 1.0 and basis[nz[0]] < 0:
            basis[nz[0]] = j
    art_rows = np.nonzero(basis < 0)[0]
    n_art = art_rows.size
    A1 = np.hstack([A, np.zeros((M, n_art))])
    A1[art_rows, N + np.arange(n_art)] = 1.0
    basis[art_rows] = N + np.arange(n_art)
    binv = np.linalg.inv(A1[:, basis])
    allowed = np.ones(N + n_art, dtype=bool)
    it = 0
    if n_art:
        c1 = np.concatenate([np.zeros(N), np.ones(n_art)])
        status, it = _bland_simplex(A1, b, c1, basis, binv, allowed, max_iterations, 0)
        if status is Status.ITERATION_LIMIT:
            return _dense_result(Status.ITERATION_LIMIT, A1, b, np.concatenate([c, np.zeros(n_art)]), basis, binv, N, it, flip)
        xb = binv @ b
        infeas = float(np.sum(xb[basis >= N]))
        if infeas > FEAS_TOL * (1.0 + np.abs(b).max(initial=0.0)):
            return _dense_result(Status.INFEASIBLE, A1, b, np.concatenate([c, np.zeros(n_art)]), basis, binv, N, it, flip)
        # pivot zero-level artificials out; drop rows where that is impossible
        keep = np.ones(M, dtype=bool)
        for i in np.nonzero(basis >= N)[0]:
            row = binv[i] @ A1[:, :N]
            row[np.isin(np.arange(N), basis)] = 0.0
            js = np.nonzero(np.abs(row) > PIVOT_TOL)[0]
            if js.size:
                q = int(js[0])
                d = binv @ A1[:, q]
                r = binv[i] / d[i]
                binv -= np.outer(d, r)
                binv[i] = r
                basis[i] = q
            else:
                keep[i] = False
        if not keep.all():
            A1, b = A1[keep], b[keep]
            flip = flip[keep]
            basis = basis[keep]
            binv = np.linalg.inv(A1[:, basis])
        allowed[N:] = False
    c2 = np.concatenate([c, np.zeros(n_art)])
    status, it = _bland_simplex(A1, b, c2, basis, binv, allowed, max_iterations, it)
    return _dense_result(status, A1, b, c2, basis, binv, N, it, flip)


def _dense_result(status, A, b, c, basis, binv, N, it, flip):
    x = np.zeros(A.shape[1])
    x[basis] = binv @ b
    x = np.where(np.abs(x) < 1e-13, 0.0, x)
    pi = c[basis] @ binv
    rc = (c - pi @ A)[:N]
    duals = np.where(flip, -pi, pi)
    return LpSolution(
        status=status,
        value=float(c[:N] @ x[:N]),
        x=x[:N],
        basis=np.sort(basis[basis < N]),
        duals=duals,
        reduced_costs=rc,
        iterations=it,
        backend="dense",
    )


def solve(prob: LpProblem, max_iterations: int = 100_000, method: str = "auto", bland: bool = False) -> LpSolution:
    """Solve ``prob`` to an optimal basic solution.

    ``method`` is "auto" (structured kernel for check-loss problems, dense
    simplex otherwise), "dense", "cython" or "python". ``bland=True`` makes
    the structured kernel price with Bland's rule throughout.
    """
    if method == "dense" or (method == "auto" and prob.structure is None):
        return solve_dense(prob, max_iterations)
    if prob.structure is None:
        raise ValueError(f"method {method!r} needs a check-loss problem from build_cqr_lp")
    return _solve_structured(prob, max_iterations, method, bland)
