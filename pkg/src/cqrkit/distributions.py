"""Error laws for the linear model: density, cdf, quantile, variance,
sampling and the mean density ``E f(eps)``.

Each law is described by a *standard* member (``eps*``) plus a positive
``scale``; the observable error is ``scale * eps*``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import special

from .numerics import quadrature_unit_interval

__all__ = ["ErrorDistribution", "INFINITE", "InfiniteVariance", "KINDS", "bisect_quantile"]

_SQRT2PI = math.sqrt(2.0 * math.pi)


class InfiniteVariance:
    """Marker returned by :meth:`ErrorDistribution.variance` for laws
    without a second moment."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INFINITE"

    def __reduce__(self):
        return (InfiniteVariance, ())


INFINITE = InfiniteVariance()


def bisect_quantile(cdf: Callable[[np.ndarray], np.ndarray], u, tol: float = 1e-12) -> np.ndarray:
    """Invert an increasing ``cdf`` by vectorized bisection.

    The bracket starts at [-1, 1] and doubles until it contains every target.
    """
    u = np.asarray(u, dtype=float)
    lo = np.full(u.shape, -1.0)
    hi = np.full(u.shape, 1.0)
    for _ in range(2000):
        grow = cdf(lo) > u
        if not grow.any():
            break
        lo = np.where(grow, 2.0 * lo, lo)
    for _ in range(2000):
        grow = cdf(hi) < u
        if not grow.any():
            break
        hi = np.where(grow, 2.0 * hi, hi)
    while True:
        width = hi - lo
        if np.all(width <= tol * np.maximum(1.0, np.abs(lo))):
            break
        mid = 0.5 * (lo + hi)
        stuck = (mid == lo) | (mid == hi)
        if stuck.all():
            break
        below = cdf(mid) < u
        lo = np.where(below & ~stuck, mid, lo)
        hi = np.where(~below & ~stuck, mid, hi)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# standard laws (scale 1)


class _Law:
    name: str = ""
    symmetric = True

    def __init__(self, **params):
        self.params = params

    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def ppf(self, u):
        return bisect_quantile(self.cdf, u)

    def variance(self):
        raise NotImplementedError

    def sample(self, rng, n):
        raise NotImplementedError

    def mean_density(self):
        """Closed form of ``integral f^2``, or None."""
        return None


class _Normal(_Law):
    name = "normal"

    def __init__(self, mu=0.0, var=1.0):
        if not var > 0:
            raise ValueError("normal variance must be positive")
        super().__init__(mu=float(mu), var=float(var))
        self.sd = math.sqrt(var)
        self.symmetric = mu == 0

    def pdf(self, x):
        z = (x - self.params["mu"]) / self.sd
        return np.exp(-0.5 * z * z) / (_SQRT2PI * self.sd)

    def cdf(self, x):
        return special.ndtr((x - self.params["mu"]) / self.sd)

    def ppf(self, u):
        return self.params["mu"] + self.sd * special.ndtri(u)

    def variance(self):
        return self.params["var"]

    def sample(self, rng, n):
        return self.params["mu"] + self.sd * rng.standard_normal(n)

    def mean_density(self):
        return 1.0 / (2.0 * math.sqrt(math.pi) * self.sd)


class _DoubleExponential(_Law):
    name = "double_exponential"

    def pdf(self, x):
        return 0.5 * np.exp(-np.abs(x))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        tail = 0.5 * np.exp(-np.abs(x))
        return np.where(x < 0, tail, 1.0 - tail)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u < 0.5, np.log(2.0 * u), -np.log(2.0 * (1.0 - u)))

    def variance(self):
        return 2.0

    def sample(self, rng, n):
        return rng.laplace(0.0, 1.0, n)

    def mean_density(self):
        return 0.25


class _Logistic(_Law):
    name = "logistic"

    def pdf(self, x):
        a = np.exp(-np.abs(x))
        return a / (1.0 + a) ** 2

    def cdf(self, x):
        return special.expit(x)

    def ppf(self, u):
        return special.logit(u)

    def variance(self):
        return math.pi**2 / 3.0

    def sample(self, rng, n):
        return rng.logistic(0.0, 1.0, n)

    def mean_density(self):
        return 1.0 / 6.0


class _StudentT(_Law):
    name = "student_t"

    def __init__(self, v=3.0):
        if not v >= 1:
            raise ValueError("student_t requires v >= 1")
        super().__init__(v=float(v))
        v = float(v)
        self.v = v
        self._logc = special.gammaln((v + 1) / 2) - special.gammaln(v / 2) - 0.5 * math.log(v * math.pi)

    def pdf(self, x):
        v = self.v
        return np.exp(self._logc - 0.5 * (v + 1) * np.log1p(np.asarray(x, dtype=float) ** 2 / v))

    def cdf(self, x):
        return special.stdtr(self.v, x)

    def ppf(self, u):
        return special.stdtrit(self.v, u)

    def variance(self):
        return self.v / (self.v - 2.0) if self.v > 2 else INFINITE

    def sample(self, rng, n):
        return rng.standard_t(self.v, n)

    def mean_density(self):
        # integral of f^2 = c^2 * sqrt(v pi) Gamma(v + 1/2) / Gamma(v + 1)
        v = self.v
        log_int = 0.5 * math.log(v * math.pi) + special.gammaln(v + 0.5) - special.gammaln(v + 1.0)
        return math.exp(2.0 * self._logc + log_int)


class _Cauchy(_Law):
    name = "cauchy"

    def pdf(self, x):
        return 1.0 / (math.pi * (1.0 + np.asarray(x, dtype=float) ** 2))

    def cdf(self, x):
        return 0.5 + np.arctan(x) / math.pi

    def ppf(self, u):
        return np.tan(math.pi * (np.asarray(u, dtype=float) - 0.5))

    def variance(self):
        return INFINITE

    def sample(self, rng, n):
        return rng.standard_cauchy(n)

    def mean_density(self):
        return 1.0 / (2.0 * math.pi)


class _NormalMixture(_Law):
    """(1 - r) N(0, 1) + r N(0, r^6)."""

    name = "normal_mixture"

    def __init__(self, r=0.5):
        if not 0 < r < 1:
            raise ValueError("normal_mixture requires 0 < r < 1")
        super().__init__(r=float(r))
        self.r = float(r)
        self.sd2 = self.r**3

    def pdf(self, x):
        r, s = self.r, self.sd2
        x = np.asarray(x, dtype=float)
        return (1 - r) * np.exp(-0.5 * x * x) / _SQRT2PI + r * np.exp(-0.5 * (x / s) ** 2) / (_SQRT2PI * s)

    def cdf(self, x):
        return (1 - self.r) * special.ndtr(x) + self.r * special.ndtr(np.asarray(x, dtype=float) / self.sd2)

    def variance(self):
        r = self.r
        return 1.0 - r + r**7

    def sample(self, rng, n):
        narrow = rng.random(n) < self.r
        z = rng.standard_normal(n)
        return np.where(narrow, self.sd2 * z, z)

    def mean_density(self):
        r, s = self.r, self.sd2
        norm_sq = 1.0 / (2.0 * math.sqrt(math.pi))
        cross = 1.0 / math.sqrt(2.0 * math.pi * (1.0 + s * s))
        return (1 - r) ** 2 * norm_sq + r * r * norm_sq / s + 2.0 * r * (1 - r) * cross


class _DoubleGammaMixture(_Law):
    """exp(-a) Laplace + (1 - exp(-a)) double-gamma(a).

    The double-gamma component has density |x|^a exp(-|x|) / (2 Gamma(a + 1)).
    """

    name = "double_gamma_mixture"

    def __init__(self, alpha=0.0):
        if not alpha >= 0:
            raise ValueError("double_gamma_mixture requires alpha >= 0")
        super().__init__(alpha=float(alpha))
        self.alpha = float(alpha)
        self.w0 = math.exp(-self.alpha)

    def pdf(self, x):
        a = self.alpha
        ax = np.abs(np.asarray(x, dtype=float))
        lap = 0.5 * np.exp(-ax)
        with np.errstate(divide="ignore"):
            log_dg = special.xlogy(a, ax) - ax - special.gammaln(a + 1.0) - math.log(2.0)
        return self.w0 * lap + (1.0 - self.w0) * np.exp(log_dg)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        lap_tail = 0.5 * np.exp(-ax)
        dg_tail = 0.5 * special.gammaincc(self.alpha + 1.0, ax)
        tail = self.w0 * lap_tail + (1.0 - self.w0) * dg_tail
        return np.where(x < 0, tail, 1.0 - tail)

    def variance(self):
        a = self.alpha
        return 2.0 * self.w0 + (1.0 - self.w0) * (a + 1.0) * (a + 2.0)

    def sample(self, rng, n):
        lap = rng.random(n) < self.w0
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        mag = np.where(lap, rng.standard_exponential(n), rng.standard_gamma(self.alpha + 1.0, n))
        return sign * mag

    def mean_density(self):
        a, w0 = self.alpha, self.w0
        w1 = 1.0 - w0
        dg_sq = math.exp(special.gammaln(2 * a + 1) - (a + 1) * math.log(4.0) - 2 * special.gammaln(a + 1))
        return w0 * w0 / 4.0 + w0 * w1 / 2.0 ** (a + 1) + w1 * w1 * dg_sq


KINDS: Mapping[str, type] = {
    law.name: law
    for law in (_Normal, _DoubleExponential, _Logistic, _StudentT, _Cauchy, _NormalMixture, _DoubleGammaMixture)
}

_ALIASES = {
    "laplace": "double_exponential",
    "t": "student_t",
    "mixnormal": "normal_mixture",
    "mixture_normal": "normal_mixture",
    "doublegamma": "double_gamma_mixture",
    "double_gamma": "double_gamma_mixture",
}


@dataclass(frozen=True)
class ErrorDistribution:
    """A named error law scaled by a positive multiplier.

    Examples
    --------
    >>> d = ErrorDistribution("normal", {"var": 3.0})
    >>> d.variance()
    3.0
    """

    kind: str
    params: Mapping[str, float] = field(default_factory=dict)
    scale: float = 1.0

    def __post_init__(self):
        kind = _ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise ValueError(f"unknown distribution kind {self.kind!r}; expected one of {sorted(KINDS)}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError("scale must be a positive finite number")
        params = {k: float(v) for k, v in dict(self.params).items()}
        law = KINDS[kind](**params)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", dict(law.params))
        object.__setattr__(self, "scale", float(self.scale))
        object.__setattr__(self, "_law", law)

    # dataclass(frozen) hashing would choke on the params dict
    def __hash__(self):
        return hash((self.kind, tuple(sorted(self.params.items())), self.scale))

    # -- constructors -------------------------------------------------------
    @classmethod
    def normal(cls, mu: float = 0.0, var: float = 1.0, scale: float = 1.0) -> "ErrorDistribution":
        return cls("normal", {"mu": mu, "var": var}, scale)

    @classmethod
    def double_exponential(cls, scale: float = 1.0) -> "ErrorDistribution":
        return cls("double_exponential", {}, scale)

    @classmethod
    def logistic(cls, scale: float = 1.0) -> "ErrorDistribution":
        return cls("logistic", {}, scale)

    @classmethod
    def student_t(cls, v: float, scale: float = 1.0) -> "ErrorDistribution":
        return cls("student_t", {"v": v}, scale)

    @classmethod
    def cauchy(cls, scale: float = 1.0) -> "ErrorDistribution":
        return cls("cauchy", {}, scale)

    @classmethod
    def normal_mixture(cls, r: float, scale: float = 1.0) -> "ErrorDistribution":
        return cls("normal_mixture", {"r": r}, scale)

    @classmethod
    def double_gamma_mixture(cls, alpha: float, scale: float = 1.0) -> "ErrorDistribution":
        return cls("double_gamma_mixture", {"alpha": alpha}, scale)

    # -- serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "scale": self.scale}

    @classmethod
    def from_dict(cls, record: Mapping) -> "ErrorDistribution":
        try:
            kind = record["kind"]
        except (KeyError, TypeError):
            raise ValueError("distribution record needs a 'kind' field") from None
        return cls(kind, dict(record.get("params") or {}), float(record.get("scale", 1.0)))

    def with_scale(self, scale: float) -> "ErrorDistribution":
        return ErrorDistribution(self.kind, self.params, scale)

    # -- law ----------------------------------------------------------------
    @property
    def has_finite_variance(self) -> bool:
        return self.variance() is not INFINITE

    def pdf(self, x):
        s = self.scale
        out = self._law.pdf(np.asarray(x, dtype=float) / s) / s
        return float(out) if np.ndim(out) == 0 else out

    def cdf(self, x):
        out = self._law.cdf(np.asarray(x, dtype=float) / self.scale)
        return float(out) if np.ndim(out) == 0 else out

    def quantile(self, u):
        """Value ``b`` with ``cdf(b) == u``; this is the population ``b*_tau``."""
        u_arr = np.asarray(u, dtype=float)
        if np.any((u_arr <= 0.0) | (u_arr >= 1.0)):
            raise ValueError(f"quantile level must lie in (0, 1), got {u!r}")
        out = self.scale * self._law.ppf(u_arr)
        return float(out) if np.ndim(out) == 0 else out

    def variance(self):
        v = self._law.variance()
        if v is INFINITE:
            return INFINITE
        return float(v) * self.scale**2

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be at least 1")
        return self.scale * np.asarray(self._law.sample(rng, int(n)), dtype=float)

    def mean_density(self, method: str = "auto") -> float:
        """``E f(eps)``, i.e. the integral of the squared density.

        ``method="quadrature"`` integrates ``f(F^-1(u))`` over (0, 1);
        ``"closed"`` uses the analytic expression; ``"auto"`` prefers the
        closed form.
        """
        if method not in ("auto", "closed", "quadrature"):
            raise ValueError(f"unknown method {method!r}")
        if method != "quadrature":
            closed = self._law.mean_density()
            if closed is not None:
                return closed / self.scale
            if method == "closed":
                raise ValueError(f"no closed form for {self.kind}")
        law = self._law
        return quadrature_unit_interval(lambda u: law.pdf(law.ppf(u))) / self.scale

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        tail = f", scale={self.scale:g}" if self.scale != 1.0 else ""
        return f"ErrorDistribution.{self.kind}({args}{tail})"
