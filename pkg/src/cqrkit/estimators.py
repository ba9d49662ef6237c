"""Linear regression estimators built on the check-loss LP.

All estimators work on centered predictors. A :class:`Dataset` keeps its raw
design together with the column means used for centering, and every
:class:`FitResult` remembers those means so that :func:`predict` and the
validation step of :func:`fit_acqr` apply the training centering to new rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import lp
from .distributions import ErrorDistribution
from .numerics import NotPositiveDefiniteError, check_loss, cholesky, solve_spd

WEIGHT_FLOOR = 1e-12
LEVEL_TOL = 1e-12
RANK_TOL = 1e-12

__all__ = [
    "Dataset",
    "EstimationError",
    "FitResult",
    "LinearModelSpec",
    "QuantileGrid",
    "RankDeficiencyError",
    "composite_check_loss",
    "default_lambda_grid",
    "fit_acqr",
    "fit_cqr",
    "fit_ols",
    "fit_oracle",
    "fit_qr",
    "predict",
    "zero_threshold",
]


class EstimationError(RuntimeError):
    """An estimator could not produce a fit (LP failure, bad inputs)."""


class RankDeficiencyError(np.linalg.LinAlgError):
    """The least-squares normal equations are singular."""


@dataclass(frozen=True)
class QuantileGrid:
    """Strictly increasing quantile levels in (0, 1)."""

    levels: tuple

    def __post_init__(self):
        lv = np.atleast_1d(np.asarray(self.levels, dtype=float))
        if lv.ndim != 1 or lv.size == 0:
            raise ValueError("a quantile grid needs at least one level")
        if not np.all(np.isfinite(lv)) or lv[0] <= 0.0 or lv[-1] >= 1.0:
            raise ValueError("quantile levels must lie in (0, 1)")
        if np.any(np.diff(lv) <= 0.0):
            raise ValueError("quantile levels must be strictly increasing")
        object.__setattr__(self, "levels", tuple(float(t) for t in lv))

    @classmethod
    def equally_spaced(cls, K: int = 19) -> "QuantileGrid":
        """Levels ``k / (K + 1)`` for ``k = 1..K``."""
        if int(K) != K or K < 1:
            raise ValueError(f"K must be a positive integer, got {K!r}")
        K = int(K)
        return cls(tuple(k / (K + 1) for k in range(1, K + 1)))

    @classmethod
    def single(cls, tau: float) -> "QuantileGrid":
        return cls((float(tau),))

    @property
    def K(self) -> int:
        return len(self.levels)

    def as_array(self) -> np.ndarray:
        return np.array(self.levels)

    def index(self, tau: float) -> int:
        """Position of ``tau`` in the grid; ``ValueError`` if absent."""
        lv = self.as_array()
        hit = np.nonzero(np.abs(lv - float(tau)) <= LEVEL_TOL)[0]
        if hit.size == 0:
            raise ValueError(f"tau={tau!r} is not one of the fitted levels")
        return int(hit[0])


@dataclass(frozen=True)
class Dataset:
    """A response with its raw design.

    ``center`` defaults to the column means of ``X``; pass the training
    means explicitly to center validation or test data consistently.
    """

    X: np.ndarray
    y: np.ndarray
    names: tuple | None = None
    center: np.ndarray | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else np.zeros((y.size, 0))
        if X.ndim != 2 or X.shape[0] != y.size:
            raise ValueError(f"X has shape {X.shape} but y has {y.size} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("data must be finite")
        names = self.names
        if names is None:
            names = tuple(f"x{j + 1}" for j in range(X.shape[1]))
        elif len(names) != X.shape[1]:
            raise ValueError(f"{len(names)} column names for {X.shape[1]} columns")
        center = X.mean(axis=0) if self.center is None else np.asarray(self.center, dtype=float)
        if center.shape != (X.shape[1],):
            raise ValueError("center must have one entry per column")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "names", tuple(names))
        object.__setattr__(self, "center", center)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def Xc(self) -> np.ndarray:
        """The centered design."""
        return self.X - self.center

    def restrict(self, columns: Sequence[int]) -> "Dataset":
        cols = list(columns)
        return Dataset(self.X[:, cols], self.y, tuple(self.names[j] for j in cols), self.center[cols])

    def recentered(self, center) -> "Dataset":
        return Dataset(self.X, self.y, self.names, center)


@dataclass(frozen=True)
class LinearModelSpec:
    """Generative truth ``y = x beta* + eps`` with ``x ~ N(0, sigma_x)``."""

    beta_star: np.ndarray
    sigma_x: np.ndarray
    error: ErrorDistribution

    def __post_init__(self):
        beta = np.asarray(self.beta_star, dtype=float).ravel()
        sig = np.atleast_2d(np.asarray(self.sigma_x, dtype=float))
        if sig.shape != (beta.size, beta.size):
            raise ValueError(f"sigma_x has shape {sig.shape}; expected ({beta.size}, {beta.size})")
        cholesky(sig)  # raises if not symmetric positive definite
        object.__setattr__(self, "beta_star", beta)
        object.__setattr__(self, "sigma_x", sig)

    @classmethod
    def ar1(cls, beta_star, error: ErrorDistribution, rho: float = 0.5) -> "LinearModelSpec":
        """Design covariance ``rho ** |i - j|``."""
        p = np.asarray(beta_star).size
        idx = np.arange(p)
        return cls(beta_star, rho ** np.abs(idx[:, None] - idx[None, :]), error)

    @property
    def p(self) -> int:
        return self.beta_star.size

    @property
    def support(self) -> tuple:
        """Zero-based indices of the nonzero coefficients."""
        return tuple(int(j) for j in np.flatnonzero(self.beta_star))

    @property
    def q(self) -> int:
        return len(self.support)


@dataclass
class FitResult:
    method: str
    beta_hat: np.ndarray
    intercepts: np.ndarray
    objective: float
    levels: tuple | None = None
    center: np.ndarray | None = None
    names: tuple | None = None
    lam: float | None = None
    selected_support: tuple = field(default=())
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.beta_hat = np.asarray(self.beta_hat, dtype=float)
        self.intercepts = np.atleast_1d(np.asarray(self.intercepts, dtype=float))
        if self.center is None:
            self.center = np.zeros(self.beta_hat.size)
        if self.names is None:
            self.names = tuple(f"x{j + 1}" for j in range(self.beta_hat.size))
        thr = zero_threshold(self.beta_hat)
        self.selected_support = tuple(int(j) for j in np.flatnonzero(np.abs(self.beta_hat) > thr))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "beta": {name: float(b) for name, b in zip(self.names, self.beta_hat)},
            "intercepts": [float(b) for b in self.intercepts],
            "levels": None if self.levels is None else list(self.levels),
            "selected": [self.names[j] for j in self.selected_support],
            "objective": float(self.objective),
            "lambda": None if self.lam is None else float(self.lam),
        }


def zero_threshold(beta) -> float:
    """Magnitude at or below which a coefficient counts as zero."""
    beta = np.asarray(beta, dtype=float)
    return 1e-8 * max(1.0, float(np.max(np.abs(beta), initial=0.0)))


def default_lambda_grid(n: int, size: int = 30) -> np.ndarray:
    """``size`` log-spaced values over ``[1e-2, 1e3] * sqrt(n)``."""
    return np.logspace(-2.0, 3.0, size) * np.sqrt(n)


def composite_check_loss(Xc, y, intercepts, beta, levels) -> float:
    """Sum over levels and rows of the check loss of ``y - b_k - Xc beta``."""
    fit = np.asarray(Xc) @ np.asarray(beta)
    total = 0.0
    for b, tau in zip(intercepts, levels):
        total += float(np.sum(check_loss(y - b - fit, tau)))
    return total


# ---------------------------------------------------------------------------


def fit_ols(data: Dataset) -> FitResult:
    """Least squares with an intercept on centered predictors."""
    Xc, y = data.Xc, data.y
    if data.n <= data.p:
        raise RankDeficiencyError(f"least squares needs n > p (n={data.n}, p={data.p})")
    ybar = float(y.mean())
    if data.p:
        gram = Xc.T @ Xc
        try:
            L = cholesky(gram)
        except NotPositiveDefiniteError as exc:
            raise RankDeficiencyError("normal equations are singular") from exc
        # roundoff can leave a tiny positive pivot for a collinear design
        if np.min(np.diag(L)) ** 2 <= RANK_TOL * np.max(np.diag(gram)):
            raise RankDeficiencyError("normal equations are numerically singular")
        beta = solve_spd(gram, Xc.T @ (y - ybar))
    else:
        beta = np.zeros(0)
    resid = y - ybar - Xc @ beta
    return FitResult(
        method="ols",
        beta_hat=beta,
        intercepts=np.array([ybar]),
        objective=float(resid @ resid),
        center=data.center,
        names=data.names,
    )


def _solve_check_loss(data: Dataset, grid: QuantileGrid, penalty=None, method: str = "auto"):
    prob = lp.build_cqr_lp(data.Xc, data.y, grid.as_array(), penalty)
    sol = lp.solve(prob, method=method)
    if not sol.ok:
        raise EstimationError(f"check-loss LP ended with status {sol.status.value}")
    b, beta = prob.structure.unpack(sol.x)
    return b, beta, sol


def fit_cqr(data: Dataset, grid: QuantileGrid, method: str = "auto") -> FitResult:
    """Composite quantile regression: K intercepts, one shared slope vector.

    ``method`` selects the LP solver (see :func:`cqrkit.lp.solve`).
    """
    b, beta, sol = _solve_check_loss(data, grid, method=method)
    return FitResult(
        method="cqr",
        beta_hat=beta,
        intercepts=b,
        objective=sol.value,
        levels=grid.levels,
        center=data.center,
        names=data.names,
        details={"iterations": sol.iterations, "backend": sol.backend},
    )


def fit_qr(data: Dataset, tau: float, method: str = "auto") -> FitResult:
    """Quantile regression at the single level ``tau``."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau!r}")
    fit = fit_cqr(data, QuantileGrid.single(tau), method=method)
    fit.method = "qr"
    return fit


def fit_acqr(
    train: Dataset,
    validation: Dataset,
    grid: QuantileGrid,
    lambda_grid=None,
    weight_exponent: float = 2.0,
    weight_floor: float = WEIGHT_FLOOR,
    method: str = "auto",
) -> FitResult:
    """Adaptive-lasso penalized CQR with lambda picked on validation data.

    Parameters
    ----------
    train, validation : Dataset
        The validation rows are centered with the training means.
    grid : QuantileGrid
    lambda_grid : array_like, optional
        Candidate penalty levels; defaults to :func:`default_lambda_grid`.
    weight_exponent : float
        Weights are ``1 / (|pilot_j| ** weight_exponent + weight_floor)``.
    weight_floor : float
        Keeps weights finite when a pilot coefficient is exactly zero.

    Returns
    -------
    FitResult
        The fit minimizing composite check loss on the validation set. On
        exact ties the largest such lambda wins. ``details["path"]`` lists
        ``(lambda, validation_loss)`` for each solved candidate.
    """
    if validation.p != train.p:
        raise ValueError("training and validation designs have different widths")
    lams = default_lambda_grid(train.n) if lambda_grid is None else np.atleast_1d(np.asarray(lambda_grid, dtype=float))
    if lams.size == 0:
        raise ValueError("lambda_grid is empty")
    if np.any(lams < 0) or not np.all(np.isfinite(lams)):
        raise ValueError("lambda values must be finite and nonnegative")
    pilot = fit_cqr(train, grid, method=method)
    weights = 1.0 / (np.abs(pilot.beta_hat) ** weight_exponent + weight_floor)
    Xv = validation.X - train.center
    best = None
    path = []
    for lam in lams:
        try:
            b, beta, sol = _solve_check_loss(train, grid, lam * weights, method=method)
        except EstimationError:
            path.append((float(lam), None))
            continue
        loss = composite_check_loss(Xv, validation.y, b, beta, grid.levels)
        path.append((float(lam), loss))
        if best is None or loss < best[0] or (loss == best[0] and lam >= best[1]):
            best = (loss, float(lam), b, beta, sol)
    if best is None:
        raise EstimationError("every penalized LP failed")
    loss, lam, b, beta, sol = best
    return FitResult(
        method="acqr",
        beta_hat=beta,
        intercepts=b,
        objective=sol.value,
        levels=grid.levels,
        center=train.center,
        names=train.names,
        lam=lam,
        details={"validation_loss": loss, "weights": weights, "path": path, "pilot": pilot.beta_hat},
    )


def fit_oracle(data: Dataset, support: Sequence[int], method: str = "cqr", grid: QuantileGrid | None = None) -> FitResult:
    """Fit on the columns in ``support`` only; other coefficients are zero."""
    cols = sorted({int(j) for j in support})
    if not cols:
        raise ValueError("oracle support must be nonempty")
    if cols[0] < 0 or cols[-1] >= data.p:
        raise ValueError(f"support indices must lie in [0, {data.p})")
    sub = data.restrict(cols)
    if method == "ls":
        inner = fit_ols(sub)
    elif method == "cqr":
        inner = fit_cqr(sub, grid or QuantileGrid.equally_spaced())
    else:
        raise ValueError(f"oracle method must be 'ls' or 'cqr', got {method!r}")
    beta = np.zeros(data.p)
    beta[cols] = inner.beta_hat
    return FitResult(
        method=f"{method}_oracle",
        beta_hat=beta,
        intercepts=inner.intercepts,
        objective=inner.objective,
        levels=inner.levels,
        center=data.center,
        names=data.names,
        details={"support": tuple(cols)},
    )


def predict(fit: FitResult, X_new, tau: float | None = None) -> np.ndarray:
    """Fitted ``tau``-quantile (or mean, for least squares) at new rows."""
    X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
    if fit.beta_hat.size == 0 and X_new.shape[1] != 0:
        X_new = X_new.reshape(-1, 0) if X_new.size == 0 else X_new
    if X_new.shape[1] != fit.beta_hat.size:
        raise ValueError(f"X_new has {X_new.shape[1]} columns; the fit has {fit.beta_hat.size}")
    if fit.levels is None:
        if tau is not None:
            raise ValueError(f"tau={tau!r} is not one of the fitted levels (least-squares fit)")
        k = 0
    elif tau is None:
        if len(fit.levels) != 1:
            raise ValueError("tau is required for a fit with several quantile levels")
        k = 0
    else:
        k = QuantileGrid(fit.levels).index(tau)
    return (X_new - fit.center) @ fit.beta_hat + fit.intercepts[k]
