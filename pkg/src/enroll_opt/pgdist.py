"""Poisson-gamma (negative binomial) primitives.

A site whose enrollment rate is ``Gamma(alpha, beta)`` (shape, rate) and which
has been active for ``t`` days enrolls a negative binomial number of patients
with size ``alpha`` and success probability ``beta / (beta + t)``.  Everything
in this module works with that parameterisation directly.

Probabilities are evaluated in log space (``gammaln``) and cumulative
probabilities through the regularized incomplete beta function, which keeps
both accurate when the shape parameter reaches the hundreds, as it does for
aggregated country processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError

__all__ = [
    "RatePrior",
    "PGParams",
    "DiscreteDist",
    "nb_cdf",
    "nb_sf",
    "pg_logpmf",
    "pg_pmf",
    "pg_pmf_vector",
    "pg_cdf",
    "pg_sf",
    "pg_quantile",
    "pg_truncated",
]


def _check_positive(name: str, value: float) -> None:
    if not (math.isfinite(value) and value > 0):
        raise DomainError(f"{name} must be finite and positive, got {value!r}")


@dataclass(frozen=True)
class RatePrior:
    """Gamma prior of a single site's enrollment rate (patients/day)."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        _check_positive("alpha", self.alpha)
        _check_positive("beta", self.beta)

    @classmethod
    def from_mean_cv(cls, mean: float, cv: float) -> "RatePrior":
        """Shape ``1/cv**2`` and rate ``shape/mean``."""
        _check_positive("mean", mean)
        _check_positive("cv", cv)
        alpha = 1.0 / cv**2
        return cls(alpha, alpha / mean)

    def mean(self) -> float:
        return self.alpha / self.beta

    def variance(self) -> float:
        return self.alpha / self.beta**2

    def cv(self) -> float:
        return 1.0 / math.sqrt(self.alpha)


@dataclass(frozen=True)
class PGParams:
    """Count of a PG process with exposure ``t`` and gamma rate ``(alpha, beta)``.

    ``t=1`` is the mixed-Poisson convention used for aggregated countries.
    """

    t: float
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t) and self.t >= 0):
            raise DomainError(f"exposure t must be finite and >= 0, got {self.t!r}")
        _check_positive("alpha", self.alpha)
        _check_positive("beta", self.beta)

    @property
    def prob(self) -> float:
        """Negative binomial success probability ``beta / (beta + t)``."""
        return self.beta / (self.beta + self.t)

    @property
    def qprob(self) -> float:
        return self.t / (self.beta + self.t)

    def mean(self) -> float:
        return self.alpha * self.t / self.beta

    def variance(self) -> float:
        m = self.mean()
        return m + self.alpha * self.t**2 / self.beta**2

    def shifted(self, by: int) -> "PGParams":
        return PGParams(self.t, self.alpha + by, self.beta)


def nb_cdf(k, size, p, q=None):
    """Vectorised ``P(NB(size, p) <= k)``; zero for ``k < 0``.

    ``q`` is ``1 - p`` and may be passed separately to avoid cancellation.
    Non-integer ``k`` is floored.
    """
    k = np.floor(np.asarray(k, dtype=float))
    size = np.asarray(size, dtype=float)
    p = np.asarray(p, dtype=float)
    kk = np.maximum(k, 0.0)
    out = special.betainc(size, kk + 1.0, p)
    # q == 0 (no exposure) gives a point mass at zero
    if q is not None:
        q = np.asarray(q, dtype=float)
        out = np.where(q <= 0.0, 1.0, out)
    out = np.where(k < 0, 0.0, out)
    return out[()] if out.ndim == 0 else out


def nb_sf(k, size, p, q):
    """Vectorised ``P(NB(size, p) > k)``; one for ``k < 0``."""
    k = np.floor(np.asarray(k, dtype=float))
    size = np.asarray(size, dtype=float)
    q = np.asarray(q, dtype=float)
    kk = np.maximum(k, 0.0)
    with np.errstate(invalid="ignore"):
        out = special.betainc(kk + 1.0, size, q)
    out = np.where(q <= 0.0, 0.0, out)
    out = np.where(k < 0, 1.0, out)
    return out[()] if out.ndim == 0 else out


_STIRLING_SHAPE = 1e3


def _stirling_tail(x):
    return 1.0 / (12.0 * x) - 1.0 / (360.0 * x**3) + 1.0 / (1260.0 * x**5)


def _log_rising(a: float, k):
    """``log Gamma(a+k) - log Gamma(a)``.

    For large ``a`` the two log-gammas are huge and nearly equal, so the
    difference is taken inside Stirling's series instead.
    """
    if a < _STIRLING_SHAPE:
        return special.gammaln(a + k) - special.gammaln(a)
    return (a - 0.5) * np.log1p(k / a) + k * np.log(a + k) - k + _stirling_tail(a + k) - _stirling_tail(a)


def pg_logpmf(params: PGParams, k):
    """Log-probability of ``k`` arrivals; ``-inf`` outside the support."""
    k = np.asarray(k, dtype=float)
    a, b, t = params.alpha, params.beta, params.t
    if t == 0:
        out = np.where(k == 0, 0.0, -np.inf)
        return out[()] if out.ndim == 0 else out
    log_p = -math.log1p(t / b)
    # b / t overflows for denormal t; the k = 0 term must stay finite
    log_q = -math.log1p(b / t) if b / t < math.inf else -math.inf
    kk = np.maximum(k, 0.0)
    with np.errstate(invalid="ignore"):
        out = (
            _log_rising(a, kk)
            - special.gammaln(kk + 1.0)
            + a * log_p
            + np.where(kk == 0, 0.0, kk * log_q)
        )
    out = np.where((k < 0) | (k != np.floor(k)), -np.inf, out)
    return out[()] if out.ndim == 0 else out


def pg_pmf(params: PGParams, k):
    """``Gamma(a+k) / (k! Gamma(a)) * t^k b^a / (b+t)^(a+k)``."""
    return np.exp(pg_logpmf(params, k))


def pg_pmf_vector(params: PGParams, kmax: int) -> np.ndarray:
    """pmf on ``0..kmax`` (inclusive)."""
    if kmax < 0:
        return np.zeros(0)
    return np.exp(pg_logpmf(params, np.arange(kmax + 1)))


def pg_cdf(params: PGParams, k):
    """``P(count <= k)``.  Negative ``k`` gives exactly 0."""
    return nb_cdf(k, params.alpha, params.prob, params.qprob)


def pg_sf(params: PGParams, k):
    """``P(count > k)`` computed without subtracting from one."""
    return nb_sf(k, params.alpha, params.prob, params.qprob)


def _smallest_k(pred, start: int = 0) -> int:
    """Smallest integer ``k >= start`` with monotone ``pred(k)`` true."""
    if pred(start):
        return start
    lo, hi = start, max(2 * start, start + 1)
    while not pred(hi):
        lo, hi = hi, 2 * hi
        if hi > 2**62:
            raise DomainError("quantile search diverged")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def pg_quantile(params: PGParams, q: float) -> int:
    """Smallest ``k`` with ``pg_cdf(k) >= q``."""
    if not (0.0 < q < 1.0):
        raise DomainError(f"quantile level must lie in (0, 1), got {q!r}")
    if params.t == 0:
        return 0
    return _smallest_k(lambda k: pg_cdf(params, k) >= q)


@dataclass(eq=False)
class DiscreteDist:
    """Finite pmf over patient counts ``0..len(pmf)-1``."""

    pmf: np.ndarray

    def __post_init__(self) -> None:
        self.pmf = np.asarray(self.pmf, dtype=float)
        if self.pmf.ndim != 1 or self.pmf.size == 0:
            raise DomainError("pmf must be a non-empty 1-d vector")
        if not np.all(np.isfinite(self.pmf)) or np.any(self.pmf < 0):
            raise DomainError("pmf entries must be finite and >= 0")

    @classmethod
    def point_mass(cls, k: int = 0) -> "DiscreteDist":
        pmf = np.zeros(k + 1)
        pmf[k] = 1.0
        return cls(pmf)

    def __len__(self) -> int:
        return self.pmf.size

    @property
    def support_max(self) -> int:
        return self.pmf.size - 1

    def total(self) -> float:
        return math.fsum(self.pmf)

    def mean(self) -> float:
        return float(np.dot(np.arange(self.pmf.size), self.pmf))

    def var(self) -> float:
        k = np.arange(self.pmf.size)
        m = self.mean()
        return float(np.dot((k - m) ** 2, self.pmf))

    def cdf(self, k) -> float:
        """``P(X <= k)``; 0 below the support, 1 above it."""
        k = int(math.floor(k))
        if k < 0:
            return 0.0
        if k >= self.support_max:
            return 1.0
        return float(min(1.0, np.sum(self.pmf[: k + 1])))

    def sf(self, k) -> float:
        """``P(X > k)`` summed from the upper tail."""
        k = int(math.floor(k))
        if k < 0:
            return 1.0
        return float(min(1.0, np.sum(self.pmf[k + 1 :])))

    def quantile(self, q: float) -> int:
        """Smallest ``k`` with ``cdf(k) >= q``."""
        if not (0.0 < q < 1.0):
            raise DomainError(f"quantile level must lie in (0, 1), got {q!r}")
        cum = np.cumsum(self.pmf)
        idx = int(np.searchsorted(cum, q * cum[-1], side="left"))
        return min(idx, self.support_max)


def tail_index(params: PGParams, tail_eps: float) -> int:
    """Smallest ``K`` with ``P(count > K) < tail_eps``."""
    if params.t == 0:
        return 0
    return _smallest_k(lambda k: pg_sf(params, k) < tail_eps)


def pg_truncated(params: PGParams, tail_eps: float = 1e-9) -> DiscreteDist:
    """pmf of the count truncated at ``K = tail_index``; ``pmf[K]`` holds ``P(count >= K)``."""
    K = tail_index(params, tail_eps)
    if K == 0:
        return DiscreteDist.point_mass(0)
    pmf = pg_pmf_vector(params, K)
    pmf[K] = pg_sf(params, K - 1)
    return DiscreteDist(pmf)
