"""Cost model, per-country kinetics and PoS evaluation for site allocations.

Every function that takes an allocation accepts either one vector of length
``S`` or a stack of them with shape ``(..., S)``; results broadcast over the
leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np
from scipy import special

from ..capped import capped_rate_moments
from ..errors import DomainError
from ..forecast import pos_from_moments
from ..model import RateMoments, activation_grid, rate_sf

__all__ = [
    "CostModel",
    "AllocationBounds",
    "CountryKinetics",
    "AllocationResult",
    "total_cost",
    "cost_breakdown",
    "expected_rate",
    "pos_unrestricted",
    "pos_capped",
    "pos_capped_convolution",
    "pos_grid",
    "check_feasibility",
]

PosMethod = Literal["pg", "normal"]


def _vec(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float).reshape(-1)
    if np.any(arr < 0) or np.any(~np.isfinite(arr)):
        raise DomainError(f"{name} entries must be finite and >= 0")
    return arr


@dataclass(frozen=True, eq=False)
class CostModel:
    site: np.ndarray
    patient: np.ndarray
    country: np.ndarray

    def __post_init__(self) -> None:
        site = _vec(self.site, "site cost")
        patient = _vec(self.patient, "patient cost")
        country = _vec(self.country, "country cost")
        if not site.size == patient.size == country.size:
            raise DomainError("cost vectors must have equal length")
        object.__setattr__(self, "site", site)
        object.__setattr__(self, "patient", patient)
        object.__setattr__(self, "country", country)

    @classmethod
    def uniform_site(cls, site: float, patient: Sequence[float], country=None) -> "CostModel":
        patient = np.asarray(patient, dtype=float)
        country = np.zeros_like(patient) if country is None else country
        return cls(np.full(patient.size, float(site)), patient, country)

    @property
    def dim(self) -> int:
        return self.site.size


@dataclass(frozen=True, eq=False)
class AllocationBounds:
    low: np.ndarray
    high: np.ndarray

    def __post_init__(self) -> None:
        low = np.asarray(self.low).reshape(-1)
        high = np.asarray(self.high).reshape(-1)
        if low.size != high.size:
            raise DomainError("bounds must have equal length")
        if not (np.all(low == np.round(low)) and np.all(high == np.round(high))):
            raise DomainError("bounds must be integers")
        low = low.astype(np.int64)
        high = high.astype(np.int64)
        bad = np.flatnonzero((low < 0) | (high < low))
        if bad.size:
            raise DomainError(f"need 0 <= low <= high; violated at index {int(bad[0])}")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)

    @property
    def dim(self) -> int:
        return self.low.size

    def size(self) -> int:
        """Number of integer allocations inside the box (Python int, no overflow)."""
        out = 1
        for lo, hi in zip(self.low, self.high):
            out *= int(hi - lo + 1)
        return out

    def contains(self, alloc) -> bool:
        a = np.asarray(alloc)
        return bool(np.all(a >= self.low) and np.all(a <= self.high))


def _uniform_exposure_moments(a: float, b: float, T: float) -> tuple[float, float]:
    """Mean and mean square of ``(T - u)^+`` for ``u`` uniform on ``[a, b]``."""
    if b == a:
        r = max(0.0, T - a)
        return r, r * r
    top = min(b, T)
    if top <= a:
        return 0.0, 0.0
    span = b - a
    R = ((T - a) ** 2 - (T - top) ** 2) / (2.0 * span)
    V = ((T - a) ** 3 - (T - top) ** 3) / (3.0 * span)
    return R, V


@dataclass(frozen=True)
class CountryKinetics:
    """Per-site rate law and activation window of one country.

    ``mean_exposure`` and ``mean_sq_exposure`` are the continuous-uniform
    averages of ``(T - u)^+`` and its square over the window.  They stay
    fixed during optimization so that the expected enrollment is linear in
    the site count; ``grid_moments`` gives the exact values for a concrete
    activation grid.
    """

    rate_mean: float
    rate_var: float
    window: tuple[int, int]
    t_plan: float
    mean_exposure: float = field(init=False)
    mean_sq_exposure: float = field(init=False)

    def __post_init__(self) -> None:
        a, b = self.window
        if not (self.rate_mean > 0 and self.rate_var >= 0):
            raise DomainError("rate_mean must be > 0 and rate_var >= 0")
        if a < 0 or b < a:
            raise DomainError(f"invalid activation window {self.window}")
        if self.t_plan <= 0:
            raise DomainError("t_plan must be > 0")
        R, V = _uniform_exposure_moments(a, b, self.t_plan)
        object.__setattr__(self, "window", (int(a), int(b)))
        object.__setattr__(self, "mean_exposure", R)
        object.__setattr__(self, "mean_sq_exposure", V)

    @classmethod
    def from_mean_cv(cls, rate_mean: float, cv: float, window, t_plan: float) -> "CountryKinetics":
        return cls(rate_mean, (cv * rate_mean) ** 2, tuple(window), t_plan)

    @property
    def alpha(self) -> float:
        return self.rate_mean**2 / self.rate_var if self.rate_var > 0 else np.inf

    @property
    def beta(self) -> float:
        return self.rate_mean / self.rate_var if self.rate_var > 0 else np.inf

    @property
    def patients_per_site(self) -> float:
        return self.rate_mean * self.mean_exposure

    def activation_days(self, n_sites: int) -> list[int]:
        return activation_grid(self.window[0], self.window[1], n_sites)

    def grid_moments(self, n_sites: int, t: Optional[float] = None) -> RateMoments:
        """Exact rate moments for ``n_sites`` sites on the activation grid."""
        t = self.t_plan if t is None else t
        v = np.maximum(t - np.asarray(self.activation_days(n_sites), dtype=float), 0.0)
        return RateMoments(float(self.rate_mean * v.sum()), float(self.rate_var * (v * v).sum()))


def _arrays(kin: Sequence[CountryKinetics]):
    m = np.array([k.rate_mean for k in kin])
    s2 = np.array([k.rate_var for k in kin])
    R = np.array([k.mean_exposure for k in kin])
    V = np.array([k.mean_sq_exposure for k in kin])
    return m * R, s2 * V


def expected_rate(alloc, kin: Sequence[CountryKinetics]) -> tuple[np.ndarray, np.ndarray]:
    """Linearized ``(E, S2)`` per allocation: ``sum N m R`` and ``sum N sigma^2 V``."""
    mu, sv = _arrays(kin)
    N = np.asarray(alloc, dtype=float)
    return N @ mu, N @ sv


def cost_breakdown(alloc, kin: Sequence[CountryKinetics], costs: CostModel) -> dict[str, np.ndarray]:
    mu, _ = _arrays(kin)
    N = np.asarray(alloc, dtype=float)
    return {
        "sites": N @ costs.site,
        "patients": N @ (costs.patient * mu),
        "countries": (N > 0) @ costs.country,
    }


def total_cost(alloc, kin: Sequence[CountryKinetics], costs: CostModel):
    parts = cost_breakdown(alloc, kin, costs)
    out = parts["sites"] + parts["patients"] + parts["countries"]
    return float(out) if np.ndim(out) == 0 else out


def _normal_sf(mean, var, n):
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (mean - n) / np.sqrt(var)
    # zero variance: the count is the mean itself
    out = np.where(var > 0, special.ndtr(z), (mean >= n).astype(float))
    return out


def _scalar(x):
    return float(x) if np.ndim(x) == 0 else x


def pos_unrestricted(alloc, kin: Sequence[CountryKinetics], n: int, method: PosMethod = "pg"):
    """``P(count(T) >= n)`` for uncapped countries under the linearized moments."""
    E, S2 = expected_rate(alloc, kin)
    if method == "pg":
        return _scalar(rate_sf(n - 1, E, S2))
    if method == "normal":
        return _scalar(_normal_sf(E, E + S2, n))
    raise DomainError(f"unknown PoS method {method!r}")


def _cap_array(caps, S: int) -> np.ndarray:
    if caps is None:
        return np.full(S, np.inf)
    if len(caps) != S:
        raise DomainError("caps must have one entry per country")
    return np.array([np.inf if c is None else float(c) for c in caps])


def capped_country_moments(alloc, kin: Sequence[CountryKinetics], caps) -> tuple[np.ndarray, np.ndarray]:
    """Per-country mean and variance of the (possibly capped) count, shape ``(..., S)``."""
    mu, sv = _arrays(kin)
    N = np.asarray(alloc, dtype=float)
    E = N * mu
    S2 = N * sv
    L = _cap_array(caps, len(kin))
    mean = E.copy()
    var = E + S2
    capped = np.isfinite(L)
    if np.any(capped):
        Lb = np.broadcast_to(L, E.shape)
        sel = np.broadcast_to(capped, E.shape)
        m_c, v_c = capped_rate_moments(E[sel], S2[sel], Lb[sel])
        mean[sel] = m_c
        var[sel] = v_c
    return mean, var


def pos_capped(alloc, kin: Sequence[CountryKinetics], caps, n: int):
    """Normal approximation to PoS with capped country moments."""
    mean, var = capped_country_moments(alloc, kin, caps)
    return _scalar(_normal_sf(mean.sum(axis=-1), var.sum(axis=-1), n))


def pos_capped_convolution(alloc, kin: Sequence[CountryKinetics], caps, n: int) -> float:
    """PoS from the exact convolution of per-country (capped) count laws."""
    mu, sv = _arrays(kin)
    N = np.asarray(alloc, dtype=float).reshape(-1)
    moments = [RateMoments(float(a), float(b)) for a, b in zip(N * mu, N * sv)]
    caps = [None] * len(kin) if caps is None else [None if c is None else int(c) for c in caps]
    return float(pos_from_moments(moments, caps, n))


def pos_grid(alloc, kin: Sequence[CountryKinetics], n: int, caps=None, t: Optional[float] = None) -> float:
    """PoS with exact activation-grid moments instead of the frozen averages."""
    moments = [k.grid_moments(int(N), t) for k, N in zip(kin, np.asarray(alloc).reshape(-1))]
    caps = [None] * len(kin) if caps is None else [None if c is None else int(c) for c in caps]
    return float(pos_from_moments(moments, caps, n))


def check_feasibility(
    bounds: AllocationBounds,
    kin: Sequence[CountryKinetics],
    n: int,
    P: float,
    method: Literal["pg", "normal", "capped"] = "pg",
    caps=None,
) -> bool:
    """True iff the upper-bound allocation reaches PoS ``P`` under ``method``."""
    if method == "capped":
        return bool(pos_capped(bounds.high, kin, caps, n) >= P)
    return bool(pos_unrestricted(bounds.high, kin, n, method) >= P)


@dataclass
class AllocationResult:
    allocation: np.ndarray
    total_cost: float
    pos_achieved: float
    method: str
    iterations: int
    cost_components: dict[str, float] = field(default_factory=dict)
    pos_checks: dict[str, float] = field(default_factory=dict)
    trace: list[float] = field(default_factory=list)

    @property
    def total_sites(self) -> int:
        return int(self.allocation.sum())

    def to_dict(self) -> dict:
        return {
            "allocation": [int(v) for v in self.allocation],
            "total_sites": self.total_sites,
            "total_cost": float(self.total_cost),
            "cost_components": {k: float(v) for k, v in self.cost_components.items()},
            "pos_achieved": float(self.pos_achieved),
            "pos_checks": {k: float(v) for k, v in self.pos_checks.items()},
            "method": self.method,
            "iterations": int(self.iterations),
        }
