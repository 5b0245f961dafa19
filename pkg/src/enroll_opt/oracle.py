"""Monte Carlo simulator of the full generative enrollment model.

Each replication draws a gamma rate per site, then a Poisson count per
country per day from the rates of the sites already active on that day.
Country totals are truncated at their caps.  Replications run in fixed-size
chunks, and each chunk gets its own child seed, so results do not depend on
how chunks are spread over workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._parallel import parallel_map
from .capped import capped_dist
from .errors import DomainError
from .model import StudyPlan
from .pgdist import PGParams

__all__ = ["SimConfig", "SimSummary", "simulate", "brute_capped_moments"]


@dataclass(frozen=True)
class SimConfig:
    replications: int = 10_000
    seed: int = 0
    horizon: Optional[int] = None
    chunk_size: int = 10_000

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise DomainError("replications must be >= 1")
        if self.chunk_size < 1:
            raise DomainError("chunk_size must be >= 1")
        if self.horizon is not None and self.horizon < 1:
            raise DomainError("horizon must be >= 1")


def _pad_add(acc: np.ndarray, new: np.ndarray) -> np.ndarray:
    """Sum two count arrays along the last axis, zero-padding the shorter."""
    width = max(acc.shape[-1], new.shape[-1])
    out = np.zeros(acc.shape[:-1] + (width,), dtype=np.int64)
    out[..., : acc.shape[-1]] += acc
    out[..., : new.shape[-1]] += new
    return out


def _hist_rows(values: np.ndarray, width: Optional[int] = None) -> np.ndarray:
    """Row-wise bincount of a non-negative integer matrix."""
    rows, _ = values.shape
    if width is None:
        width = int(values.max()) + 1 if values.size else 1
    flat = values + (np.arange(rows) * width)[:, None]
    return np.bincount(flat.ravel(), minlength=rows * width).reshape(rows, width)


def _quantile_from_counts(counts: np.ndarray, q: float) -> int:
    """Smallest index whose cumulative share reaches ``q``."""
    cum = np.cumsum(counts)
    return int(np.searchsorted(cum, q * cum[-1] * (1 - 1e-12), side="left"))


@dataclass
class SimSummary:
    """Pooled histograms of a simulation run.

    ``day_hist[d - 1, k]`` counts replications whose global total on day
    ``d`` equals ``k``.  Day histograms of first events (completion, cap
    hits) use index ``horizon + 1`` for "not by the horizon"; cap-0 countries
    hit on day 0.
    """

    replications: int
    horizon: int
    target_n: int
    t_plan: int
    country_ids: list[str]
    caps: list[Optional[int]]
    day_hist: np.ndarray
    completion_hist: np.ndarray
    cap_hit_hist: np.ndarray
    country_hist: np.ndarray
    notes: list[str] = field(default_factory=list)

    @property
    def days(self) -> np.ndarray:
        return np.arange(1, self.horizon + 1)

    def _check_day(self, day: int) -> None:
        if not 1 <= day <= self.horizon:
            raise DomainError(f"day {day} outside 1..{self.horizon}")

    def mean_by_day(self) -> np.ndarray:
        k = np.arange(self.day_hist.shape[1])
        return self.day_hist @ k / self.replications

    def var_by_day(self) -> np.ndarray:
        k = np.arange(self.day_hist.shape[1], dtype=float)
        m = self.mean_by_day()
        second = self.day_hist @ (k * k) / self.replications
        return np.maximum(second - m * m, 0.0)

    def mean_se_by_day(self) -> np.ndarray:
        return np.sqrt(self.var_by_day() / self.replications)

    def quantile_by_day(self, q: float) -> np.ndarray:
        return np.array([_quantile_from_counts(row, q) for row in self.day_hist])

    def cdf(self, day: int, k: int) -> tuple[float, float]:
        """Empirical ``P(total(day) <= k)`` and its binomial standard error."""
        self._check_day(day)
        row = self.day_hist[day - 1]
        p = float(row[: max(k + 1, 0)].sum()) / self.replications
        return p, math.sqrt(p * (1 - p) / self.replications)

    def pos_by_day(self) -> tuple[np.ndarray, np.ndarray]:
        p = self.day_hist[:, self.target_n :].sum(axis=1) / self.replications
        return p, np.sqrt(p * (1 - p) / self.replications)

    def pos(self, day: Optional[int] = None) -> tuple[float, float]:
        day = self.t_plan if day is None else day
        self._check_day(day)
        p, se = self.pos_by_day()
        return float(p[day - 1]), float(se[day - 1])

    def completion_quantile(self, q: float) -> Optional[int]:
        d = _quantile_from_counts(self.completion_hist, q)
        return None if d > self.horizon else d

    def country_index(self, country_id: str) -> int:
        return self.country_ids.index(country_id)

    def cap_hit_prob(self, country_id: str, day: int) -> tuple[float, float]:
        j = self.country_index(country_id)
        if self.caps[j] is None:
            raise DomainError(f"country {country_id} has no cap")
        p = float(self.cap_hit_hist[j, : day + 1].sum()) / self.replications
        return p, math.sqrt(p * (1 - p) / self.replications)

    def cap_hit_quantile(self, country_id: str, q: float) -> Optional[int]:
        j = self.country_index(country_id)
        if self.caps[j] is None:
            raise DomainError(f"country {country_id} has no cap")
        d = _quantile_from_counts(self.cap_hit_hist[j], q)
        return None if d > self.horizon else d

    def country_pmf(self, country_id: str) -> np.ndarray:
        """Empirical pmf of a country's (capped) total on day ``t_plan``."""
        row = self.country_hist[self.country_index(country_id)]
        return row / self.replications

    def rows(self) -> list[dict]:
        mean = self.mean_by_day()
        se = self.mean_se_by_day()
        lo = self.quantile_by_day(0.05)
        med = self.quantile_by_day(0.5)
        hi = self.quantile_by_day(0.95)
        pos, pos_se = self.pos_by_day()
        return [
            {
                "day": int(d),
                "mean": float(mean[i]),
                "mean_se": float(se[i]),
                "median": int(med[i]),
                "q05": int(lo[i]),
                "q95": int(hi[i]),
                "pos": float(pos[i]),
                "pos_se": float(pos_se[i]),
            }
            for i, d in enumerate(self.days)
        ]


def _site_arrays(plan: StudyPlan):
    alpha, beta, start, owner = [], [], [], []
    for j, c in enumerate(plan.countries):
        for s in c.sites:
            alpha.append(s.prior.alpha)
            beta.append(s.prior.beta)
            start.append(s.activation_day)
            owner.append(j)
    return (
        np.array(alpha, dtype=float),
        np.array(beta, dtype=float),
        np.array(start, dtype=np.int64),
        np.array(owner, dtype=np.int64),
    )


def _run_chunk(plan: StudyPlan, horizon: int, reps: int, seed_seq: np.random.SeedSequence):
    rng = np.random.default_rng(seed_seq)
    alpha, beta, start, owner = _site_arrays(plan)
    C = len(plan.countries)
    caps = np.array([np.iinfo(np.int64).max if L is None else L for L in plan.caps], dtype=np.int64)
    lam = rng.gamma(alpha, 1.0 / beta, size=(reps, alpha.size)) if alpha.size else np.zeros((reps, 0))
    member = np.zeros((alpha.size, C))
    member[np.arange(alpha.size), owner] = 1.0

    raw = np.zeros((reps, C), dtype=np.int64)
    totals = np.empty((horizon, reps), dtype=np.int64)
    done = np.full(reps, horizon + 1, dtype=np.int64)
    cap_day = np.full((C, reps), horizon + 1, dtype=np.int64)
    cap_day[caps == 0] = 0
    snapshot = np.zeros((reps, C), dtype=np.int64)
    rate = np.zeros((reps, C))
    active = np.zeros(alpha.size, dtype=bool)
    for d in range(1, horizon + 1):
        # a site contributes on day d when its exposure over (d-1, d] is positive
        now = start < d
        if np.any(now != active):
            active = now
            rate = lam @ (member * active[:, None])
        raw += rng.poisson(rate)
        capped = np.minimum(raw, caps)
        tot = capped.sum(axis=1)
        totals[d - 1] = tot
        done = np.where((done > horizon) & (tot >= plan.target_n), d, done)
        hit = (capped >= caps).T & (cap_day > horizon)
        cap_day[hit] = d
        if d == plan.t_plan:
            snapshot = capped.copy()
    return _hist_rows(totals), done, cap_day, snapshot


def simulate(plan: StudyPlan, cfg: SimConfig = SimConfig()) -> SimSummary:
    horizon = cfg.horizon if cfg.horizon is not None else plan.t_plan
    sizes = [cfg.chunk_size] * (cfg.replications // cfg.chunk_size)
    if cfg.replications % cfg.chunk_size:
        sizes.append(cfg.replications % cfg.chunk_size)
    seeds = [np.random.SeedSequence(cfg.seed, spawn_key=(i,)) for i in range(len(sizes))]
    results = parallel_map(lambda a: _run_chunk(plan, horizon, a[0], a[1]), list(zip(sizes, seeds)))

    C = len(plan.countries)
    day_hist = np.zeros((horizon, 1), dtype=np.int64)
    completion = np.zeros(horizon + 2, dtype=np.int64)
    cap_hist = np.zeros((C, horizon + 2), dtype=np.int64)
    country_hist = np.zeros((C, 1), dtype=np.int64)
    for hist, done, cap_day, snap in results:
        day_hist = _pad_add(day_hist, hist)
        completion += np.bincount(done, minlength=horizon + 2)
        if C:
            cap_hist += _hist_rows(cap_day, horizon + 2)
        if C:
            country_hist = _pad_add(country_hist, _hist_rows(snap.T))
    notes = []
    if plan.t_plan > horizon:
        notes.append("t_plan beyond horizon: country snapshot is empty")
    return SimSummary(
        replications=cfg.replications,
        horizon=horizon,
        target_n=plan.target_n,
        t_plan=plan.t_plan,
        country_ids=[c.id for c in plan.countries],
        caps=list(plan.caps),
        day_hist=day_hist,
        completion_hist=completion,
        cap_hit_hist=cap_hist,
        country_hist=country_hist,
        notes=notes,
    )


def brute_capped_moments(params: PGParams, L: int) -> tuple[float, float]:
    """Mean and second moment of ``min(count, L)`` by direct summation."""
    d = capped_dist(params, L)
    k = np.arange(L + 1, dtype=float)
    return math.fsum(k * d.pmf), math.fsum(k * k * d.pmf)
