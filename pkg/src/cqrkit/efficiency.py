"""Asymptotic efficiency of composite quantile regression against least squares.

With equally spaced levels and ``K -> inf`` the relative efficiency tends to
``delta(f) = 12 sigma^2 (E f(eps))^2``; :func:`delta_limit` computes it from a
distribution and :func:`delta_closed_form` from the analytic expressions
for the parametric families. The two routes are independent and are
cross-checked by :func:`delta_curve`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .distributions import ErrorDistribution
from .estimators import QuantileGrid
from .numerics import solve_spd

__all__ = [
    "AsymptoticCovariance",
    "CURVE_FAMILIES",
    "DegenerateDensityError",
    "EfficiencyReport",
    "InfiniteVarianceError",
    "are_finite_k",
    "asymptotic_cov_cqr",
    "convergence_ratio",
    "cqr_variance_factor",
    "delta_closed_form",
    "delta_curve",
    "delta_limit",
    "efficiency_report",
    "level_covariance_sum",
    "ratio_curve",
    "universal_lower_bound",
]


class InfiniteVarianceError(ValueError):
    """The error law has no finite variance, so least squares has no ARE."""


class DegenerateDensityError(ValueError):
    """The error density vanishes at one of the required quantiles."""


@dataclass(frozen=True)
class AsymptoticCovariance:
    matrix: np.ndarray
    factor: float


def _as_grid(grid) -> QuantileGrid:
    if isinstance(grid, QuantileGrid):
        return grid
    if isinstance(grid, (int, np.integer)):
        return QuantileGrid.equally_spaced(int(grid))
    return QuantileGrid(tuple(grid))


def _finite_variance(error: ErrorDistribution) -> float:
    if not error.has_finite_variance:
        raise InfiniteVarianceError(f"{error!r} has infinite variance")
    return error.variance()


def level_covariance_sum(grid) -> float:
    """``sum_{k,k'} min(tau_k, tau_k') (1 - max(tau_k, tau_k'))``."""
    t = _as_grid(grid).as_array()
    lo = np.minimum.outer(t, t)
    hi = np.maximum.outer(t, t)
    return float(np.sum(lo * (1.0 - hi)))


def cqr_variance_factor(grid, error: ErrorDistribution) -> float:
    """Scalar ``s`` such that the limiting covariance of CQR is ``s C^-1``."""
    g = _as_grid(grid)
    dens = np.atleast_1d(error.pdf(error.quantile(g.as_array())))
    if np.any(~(dens > 0.0)):
        raise DegenerateDensityError("density vanishes at a required quantile")
    return level_covariance_sum(g) / float(np.sum(dens)) ** 2


def asymptotic_cov_cqr(grid, error: ErrorDistribution, C, support=None) -> AsymptoticCovariance:
    """``factor * C^-1``; pass ``support`` to get the oracle block ``C_AA^-1``."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if support is not None:
        idx = list(support)
        C = C[np.ix_(idx, idx)]
    factor = cqr_variance_factor(grid, error)
    cinv = solve_spd(C, np.eye(C.shape[0]))
    cinv = 0.5 * (cinv + cinv.T)
    return AsymptoticCovariance(factor * cinv, factor)


def are_finite_k(grid, error: ErrorDistribution) -> float:
    """Relative efficiency of CQR on ``grid`` against least squares."""
    return _finite_variance(error) / cqr_variance_factor(grid, error)


def delta_limit(error: ErrorDistribution, method: str = "auto") -> float:
    """``12 sigma^2 (E f(eps))^2``.

    ``method`` is forwarded to :meth:`ErrorDistribution.mean_density`:
    "quadrature" integrates ``f(F^-1(u))`` numerically, "closed" and
    "auto" use the analytic mean density.
    """
    var = _finite_variance(error)
    return 12.0 * var * error.mean_density(method) ** 2


def _delta_t(v: float) -> float:
    if not v > 2:
        raise ValueError(f"the t closed form needs v > 2, got {v!r}")
    lg = special.gammaln
    ratio1 = math.exp(lg((v + 1) / 2) - lg(v / 2))
    ratio2 = math.exp(lg(v + 0.5) - lg(v + 1))
    return 12.0 / math.pi / (v - 2.0) * ratio1**4 * ratio2**2


def _delta_normal_mixture(r: float) -> float:
    if not 0 < r < 1:
        raise ValueError(f"the normal-mixture closed form needs 0 < r < 1, got {r!r}")
    inner = (1 - r) ** 2 + 1 / r + 2 * math.sqrt(2) * r * (1 - r) / math.sqrt(1 + r**6)
    return 3.0 / math.pi * inner**2 * (1 - r + r**7)


def _delta_double_gamma_mixture(a: float) -> float:
    if not a >= 0:
        raise ValueError(f"the double-gamma closed form needs alpha >= 0, got {a!r}")
    e = math.exp(-a)
    lg = special.gammaln
    g = math.exp(lg(2 * a + 1) - (a + 1) * math.log(4.0) - 2 * lg(a + 1))
    var = 2 * e + (1 - e) * (a + 1) * (a + 2)
    dens = e * e / 4 + e * (1 - e) / 2 ** (a + 1) + (1 - e) ** 2 * g
    return 12.0 * var * dens**2


_CLOSED = {
    "normal": lambda p: 3.0 / math.pi,
    "double_exponential": lambda p: 1.5,
    "logistic": lambda p: math.pi**2 / 9.0,
    "student_t": lambda p: _delta_t(p["v"]),
    "normal_mixture": lambda p: _delta_normal_mixture(p["r"]),
    "double_gamma_mixture": lambda p: _delta_double_gamma_mixture(p["alpha"]),
}


def delta_closed_form(error: ErrorDistribution) -> float:
    """Analytic ``delta`` for the named families.

    The value does not depend on ``error.scale`` or on a normal mean/variance.
    """
    if error.kind == "student_t" and error.params["v"] <= 2:
        raise InfiniteVarianceError(f"t with v={error.params['v']:g} has infinite variance")
    if error.kind not in _CLOSED:
        raise InfiniteVarianceError(f"no finite delta for {error.kind}")
    return _CLOSED[error.kind](error.params)


def universal_lower_bound() -> float:
    """``6 / (e pi)``; every finite-variance density has a larger ``delta``."""
    return 6.0 / (math.e * math.pi)


CURVE_FAMILIES = {
    "student_t": ("v", lambda v: ErrorDistribution.student_t(v)),
    "normal_mixture": ("r", lambda r: ErrorDistribution.normal_mixture(r)),
    "double_gamma_mixture": ("alpha", lambda a: ErrorDistribution.double_gamma_mixture(a)),
}
_FAMILY_ALIASES = {"t": "student_t", "mixnormal": "normal_mixture", "double_gamma": "double_gamma_mixture", "doublegamma": "double_gamma_mixture"}


def delta_curve(family: str, params, check: bool = True, rtol: float = 1e-4) -> np.ndarray:
    """Rows ``(parameter, delta)`` for a one-parameter family.

    With ``check`` each closed-form value is compared with the quadrature
    route and an ``ArithmeticError`` is raised if they differ by more than
    ``rtol`` relative.
    """
    family = _FAMILY_ALIASES.get(family, family)
    if family not in CURVE_FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {sorted(CURVE_FAMILIES)}")
    _, make = CURVE_FAMILIES[family]
    params = np.atleast_1d(np.asarray(params, dtype=float))
    if params.size == 0:
        raise ValueError("parameter grid is empty")
    rows = []
    for theta in params:
        err = make(float(theta))
        d = delta_closed_form(err)
        if check:
            dq = delta_limit(err, "quadrature")
            if not abs(dq - d) <= rtol * abs(d):
                raise ArithmeticError(f"{family}({theta:g}): closed form {d!r} vs quadrature {dq!r}")
        rows.append((float(theta), d))
    return np.array(rows)


def convergence_ratio(K: int, error: ErrorDistribution) -> float:
    """ARE with ``K`` equally spaced levels divided by its ``K -> inf`` limit."""
    return are_finite_k(QuantileGrid.equally_spaced(K), error) / delta_limit(error)


def ratio_curve(error: ErrorDistribution, Ks) -> np.ndarray:
    """Rows ``(K, convergence_ratio(K, error))``."""
    Ks = [int(k) for k in np.atleast_1d(Ks)]
    if not Ks or min(Ks) < 1:
        raise ValueError("K values must be positive integers")
    return np.array([(k, convergence_ratio(k, error)) for k in Ks], dtype=float)


@dataclass(frozen=True)
class EfficiencyReport:
    distribution: dict
    K: int
    are_finite: float | None
    delta_limit: float | None
    convergence_ratio: float | None
    lower_bound: float
    note: str | None = None

    def to_dict(self) -> dict:
        return {
            "distribution": self.distribution,
            "K": self.K,
            "are_finite": self.are_finite,
            "delta_limit": self.delta_limit,
            "convergence_ratio": self.convergence_ratio,
            "lower_bound": self.lower_bound,
            "note": self.note,
        }


def efficiency_report(error: ErrorDistribution, K: int = 19) -> EfficiencyReport:
    if not error.has_finite_variance:
        return EfficiencyReport(error.to_dict(), K, None, None, None, universal_lower_bound(), "infinite variance")
    are = are_finite_k(QuantileGrid.equally_spaced(K), error)
    delta = delta_limit(error)
    return EfficiencyReport(error.to_dict(), K, are, delta, are / delta, universal_lower_bound())
