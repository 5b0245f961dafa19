"""Enrollment design types and unrestricted site/country modeling.

A country's count is a mixed Poisson variable whose cumulative rate is a sum
of independent scaled gamma variables.  That sum is approximated by a single
gamma with the same mean and variance, giving a PG(A, B) law for the count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy import special, stats

from .errors import DegenerateMomentsError, DomainError
from .pgdist import DiscreteDist, PGParams, RatePrior, _smallest_k, nb_cdf, nb_sf, pg_pmf_vector

__all__ = [
    "SitePlan",
    "CountryPlan",
    "StudyPlan",
    "RateMoments",
    "AggregatedPG",
    "exposure",
    "activation_grid",
    "country_rate_moments",
    "aggregate_pg",
    "rate_cdf",
    "rate_sf",
    "rate_dist",
    "rate_pmf_vector",
    "country_count_dist",
    "time_to_target_cdf",
]


def exposure(t: float, u: float) -> float:
    """Active enrollment time ``max(0, t - u)``."""
    return max(0.0, t - u)


def activation_grid(a: int, b: int, n_sites: int) -> list[int]:
    """Activation days ``a + round(i*(b-a)/N)`` for ``i = 1..N``.

    Rounding is half-to-even, as in R's ``round``.
    """
    if n_sites < 0:
        raise DomainError("n_sites must be >= 0")
    if b < a:
        raise DomainError(f"activation window [{a}, {b}] is reversed")
    i = np.arange(1, n_sites + 1)
    return [int(a + v) for v in np.round(i * (b - a) / n_sites)] if n_sites else []


@dataclass(frozen=True)
class SitePlan:
    id: str
    activation_day: int
    prior: RatePrior

    def __post_init__(self) -> None:
        if self.activation_day < 0:
            raise DomainError(f"site {self.id}: activation_day must be >= 0")

    def exposure(self, t: float) -> float:
        return exposure(t, self.activation_day)

    def params(self, t: float) -> PGParams:
        return PGParams(self.exposure(t), self.prior.alpha, self.prior.beta)


@dataclass(frozen=True)
class CountryPlan:
    id: str
    sites: tuple[SitePlan, ...] = ()
    cap: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "sites", tuple(self.sites))
        ids = [s.id for s in self.sites]
        if len(set(ids)) != len(ids):
            raise DomainError(f"country {self.id}: duplicate site ids")
        if self.cap is not None and self.cap < 0:
            raise DomainError(f"country {self.id}: cap must be >= 0")

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def with_cap(self, cap: Optional[int]) -> "CountryPlan":
        return CountryPlan(self.id, self.sites, cap)

    @cached_property
    def site_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Activation days, rate means and rate variances, one entry per site."""
        days = np.array([s.activation_day for s in self.sites], dtype=float)
        means = np.array([s.prior.mean() for s in self.sites], dtype=float)
        variances = np.array([s.prior.variance() for s in self.sites], dtype=float)
        return days, means, variances


@dataclass(frozen=True)
class StudyPlan:
    countries: tuple[CountryPlan, ...]
    target_n: int
    t_plan: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "countries", tuple(self.countries))
        ids = [c.id for c in self.countries]
        if len(set(ids)) != len(ids):
            raise DomainError("duplicate country ids")
        if self.target_n < 1:
            raise DomainError("target_n must be >= 1")
        if self.t_plan < 1:
            raise DomainError("t_plan must be >= 1")

    @property
    def caps(self) -> list[Optional[int]]:
        return [c.cap for c in self.countries]

    @property
    def all_capped(self) -> bool:
        return all(c.cap is not None for c in self.countries)

    def cap_total(self) -> Optional[int]:
        """Sum of caps if every country is capped, else ``None``."""
        if not self.all_capped:
            return None
        return sum(c.cap for c in self.countries)

    def replace_caps(self, caps: Sequence[Optional[int]]) -> "StudyPlan":
        countries = tuple(c.with_cap(L) for c, L in zip(self.countries, caps, strict=True))
        return StudyPlan(countries, self.target_n, self.t_plan)


@dataclass(frozen=True)
class RateMoments:
    """Mean ``E`` and variance ``S2`` of a cumulative enrollment rate."""

    E: float
    S2: float

    def __add__(self, other: "RateMoments") -> "RateMoments":
        return RateMoments(self.E + other.E, self.S2 + other.S2)

    def count_variance(self) -> float:
        """Variance of the mixed-Poisson count: ``E + S2``."""
        return self.E + self.S2


@dataclass(frozen=True)
class AggregatedPG:
    A: float
    B: float

    @property
    def params(self) -> PGParams:
        return PGParams(1.0, self.A, self.B)


def country_rate_moments(country: CountryPlan, t: float) -> RateMoments:
    if t < 0:
        raise DomainError("t must be >= 0")
    days, means, variances = country.site_arrays
    v = np.maximum(t - days, 0.0)
    return RateMoments(float(means @ v), float(variances @ (v * v)))


def aggregate_pg(moments: RateMoments) -> AggregatedPG:
    """Gamma law with the same mean and variance as the cumulative rate."""
    if not moments.S2 > 0:
        raise DegenerateMomentsError(
            f"cumulative-rate variance is {moments.S2!r}; use the Poisson/point-mass fallback"
        )
    return AggregatedPG(moments.E**2 / moments.S2, moments.E / moments.S2)


# The functions below act on the count law implied by rate moments (E, S2):
#   S2 > 0        -> PG(1, E^2/S2 + shift, E/S2)
#   S2 = 0, E > 0 -> Poisson(E)  (limit of the shifted PG as well)
#   E = 0         -> point mass at 0
# They are vectorised over E, S2 and k.


def _law_arrays(E, S2):
    E = np.asarray(E, dtype=float)
    S2 = np.asarray(S2, dtype=float)
    denom = E + S2
    with np.errstate(divide="ignore", invalid="ignore"):
        A = np.where(S2 > 0, E * E / np.where(S2 > 0, S2, 1.0), 1.0)
        p = np.where(denom > 0, E / np.where(denom > 0, denom, 1.0), 1.0)
        q = np.where(denom > 0, S2 / np.where(denom > 0, denom, 1.0), 0.0)
    return E, S2, A, p, q


def rate_cdf(k, E, S2, shift: int = 0):
    """``P(count <= k)`` for the count law of rate moments ``(E, S2)``.

    ``shift`` adds to the gamma shape; it is the ``alpha+1``/``alpha+2``
    law that appears in the capped-moment identities.
    """
    E, S2, A, p, q = _law_arrays(E, S2)
    k = np.asarray(k, dtype=float)
    pg = nb_cdf(k, A + shift, p, q)
    pois = np.where(k < 0, 0.0, special.pdtr(np.maximum(np.floor(k), 0.0), E))
    point = np.where(k < 0, 0.0, 1.0)
    out = np.where(S2 > 0, pg, np.where(E > 0, pois, point))
    return out[()] if np.ndim(out) == 0 else out


def rate_sf(k, E, S2, shift: int = 0):
    """``P(count > k)`` for the count law of rate moments ``(E, S2)``."""
    E, S2, A, p, q = _law_arrays(E, S2)
    k = np.asarray(k, dtype=float)
    pg = nb_sf(k, A + shift, p, q)
    pois = np.where(k < 0, 1.0, special.pdtrc(np.maximum(np.floor(k), 0.0), E))
    point = np.where(k < 0, 1.0, 0.0)
    out = np.where(S2 > 0, pg, np.where(E > 0, pois, point))
    return out[()] if np.ndim(out) == 0 else out


def rate_pmf_vector(moments: RateMoments, kmax: int) -> np.ndarray:
    k = np.arange(kmax + 1)
    if moments.S2 > 0:
        return pg_pmf_vector(aggregate_pg(moments).params, kmax)
    if moments.E > 0:
        return stats.poisson.pmf(k, moments.E)
    out = np.zeros(kmax + 1)
    out[0] = 1.0
    return out


def rate_tail_index(moments: RateMoments, tail_eps: float) -> int:
    if moments.E <= 0:
        return 0
    return _smallest_k(lambda k: rate_sf(k, moments.E, moments.S2) < tail_eps)


def rate_dist(moments: RateMoments, tail_eps: float = 1e-9) -> DiscreteDist:
    """Truncated count pmf; the last entry absorbs the tail beyond it."""
    K = rate_tail_index(moments, tail_eps)
    if K == 0:
        return DiscreteDist.point_mass(0)
    pmf = rate_pmf_vector(moments, K)
    pmf[K] = rate_sf(K - 1, moments.E, moments.S2)
    return DiscreteDist(pmf)


def country_count_dist(country: CountryPlan, t: float, tail_eps: float = 1e-9) -> DiscreteDist:
    """Unrestricted country count at day ``t`` under the aggregated PG law."""
    return rate_dist(country_rate_moments(country, t), tail_eps)


def time_to_target_cdf(country: CountryPlan, L: int, t: float) -> float:
    """``P(country reaches L patients by day t) = P(count(t) >= L)``."""
    if L < 1:
        raise DomainError("L must be >= 1")
    m = country_rate_moments(country, t)
    return float(rate_sf(L - 1, m.E, m.S2))
