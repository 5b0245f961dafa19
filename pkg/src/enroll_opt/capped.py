"""Enrollment truncated at a cap, at site and country level.

A capped process equals ``min(count, L)``.  Its first two moments have closed
forms in terms of cdfs of the same PG law with the gamma shape raised by one
and by two, e.g. for a site with exposure ``t``::

    E[min(N, L)]   = (a t / b) P(PG(t, a+1, b) <= L-2) + L P(N >= L)
    E[min(N, L)^2] = (a (a+1) t^2 / b^2) P(PG(t, a+2, b) <= L-3)
                     + (a t / b) P(PG(t, a+1, b) <= L-2) + L^2 P(N >= L)

A cdf evaluated at a negative argument is 0, which makes ``L = 0, 1, 2`` fall
out of the same expressions.  Country-level versions substitute the
aggregated law: ``a t / b -> E`` and ``a (a+1) t^2 / b^2 -> E^2 + S2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DomainError
from .model import (
    CountryPlan,
    RateMoments,
    SitePlan,
    rate_pmf_vector,
    country_rate_moments,
    rate_cdf,
    rate_sf,
)
from .pgdist import DiscreteDist, PGParams, pg_cdf, pg_pmf_vector, pg_sf

__all__ = [
    "CappedDist",
    "capped_dist",
    "capped_site_dist",
    "capped_mean",
    "capped_second_moment",
    "capped_rate_dist",
    "capped_rate_moments",
    "capped_country_dist",
    "capped_country_mean_var",
    "time_to_cap_cdf",
    "AsymptoticReport",
    "asymptotic_suite",
]


@dataclass(eq=False)
class CappedDist:
    """pmf on ``0..cap``; ``pmf[cap]`` is the probability the cap was hit."""

    pmf: np.ndarray
    cap: int

    def __post_init__(self) -> None:
        self.pmf = np.asarray(self.pmf, dtype=float)
        if self.pmf.size != self.cap + 1:
            raise DomainError("capped pmf must have length cap + 1")

    def mean(self) -> float:
        return math.fsum(np.arange(self.cap + 1) * self.pmf)

    def second_moment(self) -> float:
        k = np.arange(self.cap + 1, dtype=float)
        return math.fsum(k * k * self.pmf)

    def to_discrete(self) -> DiscreteDist:
        return DiscreteDist(self.pmf)


def _check_cap(L: int) -> None:
    if L < 0:
        raise DomainError(f"cap must be >= 0, got {L}")


def capped_dist(params: PGParams, L: int) -> CappedDist:
    """Distribution of ``min(PG count, L)``."""
    _check_cap(L)
    if L == 0:
        return CappedDist(np.ones(1), 0)
    pmf = np.empty(L + 1)
    pmf[:L] = pg_pmf_vector(params, L - 1)
    pmf[L] = pg_sf(params, L - 1)
    return CappedDist(pmf, L)


def capped_site_dist(site: SitePlan, t: float, L: int) -> CappedDist:
    return capped_dist(site.params(t), L)


def capped_mean(params: PGParams, L: int) -> float:
    _check_cap(L)
    if L == 0:
        return 0.0
    m = params.mean()
    return float(m * pg_cdf(params.shifted(1), L - 2) + L * pg_sf(params, L - 1))


def capped_second_moment(params: PGParams, L: int) -> float:
    _check_cap(L)
    if L == 0:
        return 0.0
    a, b, t = params.alpha, params.beta, params.t
    m = a * t / b
    m2 = a * (a + 1.0) * t * t / (b * b)
    return float(
        m2 * pg_cdf(params.shifted(2), L - 3)
        + m * pg_cdf(params.shifted(1), L - 2)
        + L * L * pg_sf(params, L - 1)
    )


def capped_rate_moments(E, S2, L):
    """Mean and variance of ``min(count, L)`` for rate moments ``(E, S2)``.

    Vectorised over all three arguments.  The variance is clamped at zero
    where cancellation near full saturation makes it slightly negative.
    """
    E = np.asarray(E, dtype=float)
    S2 = np.asarray(S2, dtype=float)
    L = np.asarray(L, dtype=float)
    if np.any(L < 0):
        raise DomainError("cap must be >= 0")
    hit = L * rate_sf(L - 1, E, S2)
    f1 = rate_cdf(L - 2, E, S2, shift=1)
    f2 = rate_cdf(L - 3, E, S2, shift=2)
    mean = E * f1 + hit
    second = (E * E + S2) * f2 + E * f1 + L * hit
    var = np.maximum(second - mean * mean, 0.0)
    mean = np.where(L == 0, 0.0, mean)
    var = np.where(L == 0, 0.0, var)
    if mean.ndim == 0:
        return float(mean), float(var)
    return mean, var


def capped_rate_dist(moments: RateMoments, L: int) -> CappedDist:
    """``min(count, L)`` under the count law of ``moments``."""
    _check_cap(L)
    if L == 0 or moments.E <= 0:
        pmf = np.zeros(L + 1)
        pmf[0] = 1.0
        return CappedDist(pmf, L)
    pmf = np.empty(L + 1)
    pmf[:L] = rate_pmf_vector(moments, L - 1)
    pmf[L] = rate_sf(L - 1, moments.E, moments.S2)
    return CappedDist(pmf, L)


def _require_cap(country: CountryPlan) -> int:
    if country.cap is None:
        raise DomainError(f"country {country.id} has no cap")
    return country.cap


def capped_country_dist(country: CountryPlan, t: float) -> CappedDist:
    return capped_rate_dist(country_rate_moments(country, t), _require_cap(country))


def capped_country_mean_var(country: CountryPlan, t: float) -> tuple[float, float]:
    m = country_rate_moments(country, t)
    return capped_rate_moments(m.E, m.S2, _require_cap(country))


def time_to_cap_cdf(country: CountryPlan, t: float) -> float:
    """``P(cap reached by day t)`` from the unrestricted aggregated law."""
    L = _require_cap(country)
    if L == 0:
        return 1.0
    m = country_rate_moments(country, t)
    return float(rate_sf(L - 1, m.E, m.S2))


@dataclass
class AsymptoticReport:
    cap: int
    t_grid: list[float]
    t_means: list[float]
    t_vars: list[float]
    site_multipliers: list[int]
    n_sites: list[int]
    n_means: list[float]
    n_vars: list[float]
    t_fixed: float
    notes: list[str] = field(default_factory=list)

    @property
    def t_gap(self) -> float:
        """Distance of the last mean on the time grid from the cap."""
        return self.cap - self.t_means[-1]

    @property
    def t_converged(self) -> bool:
        return _converges(self.cap, self.t_means, self.t_vars)

    @property
    def n_converged(self) -> bool:
        return _converges(self.cap, self.n_means, self.n_vars)


def _converges(cap: int, means: Sequence[float], vars_: Sequence[float]) -> bool:
    """Means nondecreasing toward ``cap`` and variances nonincreasing past their peak."""
    tol = 1e-12 * max(1.0, cap * cap)
    means = np.asarray(means)
    vars_ = np.asarray(vars_)
    if np.any(np.diff(means) < -tol) or np.any(means > cap + tol):
        return False
    knee = int(np.argmax(vars_))
    return bool(np.all(np.diff(vars_[knee:]) <= tol))


def asymptotic_suite(
    country: CountryPlan,
    t_grid: Sequence[float] = (1e2, 1e3, 1e4),
    site_multipliers: Sequence[int] = (1, 10, 100),
    t_fixed: float | None = None,
) -> AsymptoticReport:
    """Capped mean/variance along growing time and growing site count.

    The site-count sweep replicates the country's site list ``k`` times
    (same activation days and priors) and evaluates at ``t_fixed``, so the
    per-site exposure stays fixed while ``N_s`` grows.
    """
    L = _require_cap(country)
    if country.n_sites == 0:
        raise DomainError("asymptotic suite needs at least one site")
    if t_fixed is None:
        t_fixed = max(s.activation_day for s in country.sites) + 30.0
    t_means, t_vars = [], []
    for t in t_grid:
        m, v = capped_country_mean_var(country, t)
        t_means.append(m)
        t_vars.append(v)
    base = country_rate_moments(country, t_fixed)
    n_means, n_vars = [], []
    for k in site_multipliers:
        # replicating every site k times scales E and S2 by k
        m, v = capped_rate_moments(k * base.E, k * base.S2, L)
        n_means.append(m)
        n_vars.append(v)
    notes = []
    if L == 0:
        notes.append("cap 0: process is identically 0")
    return AsymptoticReport(
        cap=L,
        t_grid=list(map(float, t_grid)),
        t_means=t_means,
        t_vars=t_vars,
        site_multipliers=list(site_multipliers),
        n_sites=[k * country.n_sites for k in site_multipliers],
        n_means=n_means,
        n_vars=n_vars,
        t_fixed=float(t_fixed),
        notes=notes,
    )
