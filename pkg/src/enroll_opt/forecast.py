"""Global enrollment forecasting with and without country caps.

Two ways of getting the global count ``n(t)``:

* ``"convolution"``: convolve per-country count distributions (capped ones
  truncated at the cap), giving an exact pmf up to the per-country
  aggregation.
* ``"normal"``: sum the per-country means and variances and use a normal law.
  Cheap, and adequate once there are ten or more countries.

The probability of completing enrollment by day ``t`` is ``P(n(t) >= n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np
from scipy import special

from ._parallel import parallel_map
from .capped import capped_rate_dist, capped_rate_moments, time_to_cap_cdf
from .errors import DomainError, UnreachableTargetError
from .model import CountryPlan, RateMoments, StudyPlan, rate_pmf_vector, country_rate_moments, rate_dist
from .pgdist import DiscreteDist

__all__ = [
    "DiscreteDist",
    "ForecastSeries",
    "CompletionSummary",
    "CountryCapImpact",
    "CapImpactReport",
    "convolve",
    "country_dist",
    "country_mean_var",
    "global_dist",
    "global_dist_from_moments",
    "global_mean_var",
    "pos",
    "pos_from_moments",
    "completion_time_quantile",
    "completion_summary",
    "forecast_series",
    "cap_impact_report",
]

Method = Literal["convolution", "normal"]
METHODS = ("convolution", "normal")

DIRECT_CONVOLVE_MAX = 64
MAX_DAY = 1_000_000
DEFAULT_TAIL_EPS = 1e-9


def _check_method(method: str) -> None:
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}; expected one of {METHODS}")


def convolve(a: DiscreteDist, b: DiscreteDist) -> DiscreteDist:
    """pmf of the sum of independent ``a`` and ``b``."""
    x, y = a.pmf, b.pmf
    n = x.size + y.size - 1
    if min(x.size, y.size) <= DIRECT_CONVOLVE_MAX:
        out = np.convolve(x, y)
    else:
        nfft = 1 << (n - 1).bit_length()
        out = np.fft.irfft(np.fft.rfft(x, nfft) * np.fft.rfft(y, nfft), nfft)[:n]
        np.clip(out, 0.0, None, out=out)
        total = out.sum()
        if total > 0:
            out /= total
    return DiscreteDist(out)


def _fold(dists: Sequence[DiscreteDist]) -> DiscreteDist:
    # pairwise reduction keeps FFT sizes balanced
    dists = list(dists)
    if not dists:
        return DiscreteDist.point_mass(0)
    while len(dists) > 1:
        nxt = [convolve(dists[i], dists[i + 1]) for i in range(0, len(dists) - 1, 2)]
        if len(dists) % 2:
            nxt.append(dists[-1])
        dists = nxt
    return dists[0]


def _moments_dist(m: RateMoments, cap: Optional[int], tail_eps: float) -> DiscreteDist:
    if cap is None:
        return rate_dist(m, tail_eps)
    return capped_rate_dist(m, cap).to_discrete()


def country_dist(country: CountryPlan, t: float, tail_eps: float = DEFAULT_TAIL_EPS) -> DiscreteDist:
    return _moments_dist(country_rate_moments(country, t), country.cap, tail_eps)


def country_mean_var(country: CountryPlan, t: float) -> tuple[float, float]:
    m = country_rate_moments(country, t)
    if country.cap is None:
        return m.E, m.count_variance()
    return capped_rate_moments(m.E, m.S2, country.cap)


def _conv_head(x: np.ndarray, y: np.ndarray, n: int) -> np.ndarray:
    """First ``n`` entries of ``x * y``; sub-probability vectors are not renormalized."""
    size = x.size + y.size - 1
    if min(x.size, y.size) <= DIRECT_CONVOLVE_MAX:
        return np.convolve(x, y)[:n]
    nfft = 1 << (size - 1).bit_length()
    out = np.fft.irfft(np.fft.rfft(x, nfft) * np.fft.rfft(y, nfft), nfft)[: min(n, size)]
    return np.clip(out, 0.0, None)


def _head(m: RateMoments, cap: Optional[int], n: int) -> np.ndarray:
    """Country pmf on ``0..n-1`` (shorter when the cap is below ``n``)."""
    if cap is not None and cap < n:
        return capped_rate_dist(m, cap).pmf
    return rate_pmf_vector(m, n - 1)


def _prob_below(moments: Sequence[RateMoments], caps: Sequence[Optional[int]], n: int) -> float:
    """``P(global count < n)``; only the mass below ``n`` has to be convolved."""
    heads = [_head(m, L, n) for m, L in zip(moments, caps, strict=True)]
    if not heads:
        return 1.0
    while len(heads) > 1:
        nxt = [_conv_head(heads[i], heads[i + 1], n) for i in range(0, len(heads) - 1, 2)]
        if len(heads) % 2:
            nxt.append(heads[-1])
        heads = nxt
    return min(1.0, math.fsum(heads[0][:n]))


def global_dist_from_moments(
    moments: Sequence[RateMoments],
    caps: Sequence[Optional[int]],
    tail_eps: float = DEFAULT_TAIL_EPS,
) -> DiscreteDist:
    return _fold([_moments_dist(m, L, tail_eps) for m, L in zip(moments, caps, strict=True)])


def global_dist(plan: StudyPlan, t: float, tail_eps: float = DEFAULT_TAIL_EPS) -> DiscreteDist:
    return _fold([country_dist(c, t, tail_eps) for c in plan.countries])


def global_mean_var(plan: StudyPlan, t: float) -> tuple[float, float]:
    mean = var = 0.0
    for c in plan.countries:
        m, v = country_mean_var(c, t)
        mean += m
        var += v
    return mean, var


def _normal_pos(mean: float, var: float, n: int) -> float:
    if var <= 0:
        # deterministic count
        return 1.0 if mean >= n else 0.0
    return float(special.ndtr((mean - n) / math.sqrt(var)))


def pos_from_moments(
    moments: Sequence[RateMoments],
    caps: Sequence[Optional[int]],
    n: int,
    method: Method = "convolution",
) -> float:
    _check_method(method)
    if method == "convolution":
        return max(0.0, 1.0 - _prob_below(moments, caps, n))
    mean = var = 0.0
    for m, L in zip(moments, caps, strict=True):
        if L is None:
            mean += m.E
            var += m.count_variance()
        else:
            cm, cv = capped_rate_moments(m.E, m.S2, L)
            mean += cm
            var += cv
    return _normal_pos(mean, var, n)


def pos(plan: StudyPlan, t: float, method: Method = "convolution") -> float:
    """Probability that ``plan.target_n`` patients are enrolled by day ``t``."""
    _check_method(method)
    if method == "convolution":
        moments = [country_rate_moments(c, t) for c in plan.countries]
        return max(0.0, 1.0 - _prob_below(moments, plan.caps, plan.target_n))
    mean, var = global_mean_var(plan, t)
    return _normal_pos(mean, var, plan.target_n)


def max_enrollment(plan: StudyPlan) -> float:
    """Limit of the global count as ``t -> inf`` (``inf`` if any uncapped country has sites)."""
    total = 0.0
    for c in plan.countries:
        if c.n_sites == 0:
            continue
        total += math.inf if c.cap is None else c.cap
    return total


def _first_day(pred, start: int = 0, limit: int = MAX_DAY) -> Optional[int]:
    """Smallest day ``>= start`` with monotone ``pred`` true, or ``None`` past ``limit``."""
    if pred(start):
        return start
    lo, hi = start, max(start + 1, 2 * start)
    while not pred(hi):
        lo, hi = hi, 2 * hi
        if lo >= limit:
            return None
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            lo = mid
    return hi


def completion_time_quantile(plan: StudyPlan, q: float, method: Method = "convolution") -> int:
    """First day ``t`` with ``pos(plan, t) >= q``."""
    _check_method(method)
    if not (0.0 < q < 1.0):
        raise DomainError(f"q must lie in (0, 1), got {q!r}")
    if max_enrollment(plan) < plan.target_n:
        raise UnreachableTargetError(
            f"caps allow at most {max_enrollment(plan):g} patients, target is {plan.target_n}"
        )
    day = _first_day(lambda t: pos(plan, t, method) >= q)
    if day is None:
        raise UnreachableTargetError(f"PoS does not reach {q} within {MAX_DAY} days")
    return day


@dataclass
class ForecastSeries:
    """Per-day predictive summary of the global count, days ``1..T_q``."""

    days: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    pos_by_day: np.ndarray
    q_level: float
    method: str
    horizon_q: float = 0.95

    def rows(self):
        for i in range(self.days.size):
            yield (
                int(self.days[i]),
                float(self.mean[i]),
                int(self.median[i]),
                int(self.lo[i]),
                int(self.hi[i]),
                float(self.pos_by_day[i]),
            )


def _normal_quantile(mean: float, var: float, q: float, upper: float) -> int:
    if var <= 0:
        k = math.ceil(mean - 1e-12)
    else:
        k = math.ceil(mean + special.ndtri(q) * math.sqrt(var) - 1e-12)
    return int(min(max(k, 0), upper))


def _day_summary(plan: StudyPlan, t: int, q_level: float, method: str):
    q_lo = (1.0 - q_level) / 2.0
    q_hi = 1.0 - q_lo
    mean, var = global_mean_var(plan, t)
    if method == "convolution":
        d = global_dist(plan, t)
        return mean, d.quantile(0.5), d.quantile(q_lo), d.quantile(q_hi), d.sf(plan.target_n - 1)
    upper = max_enrollment(plan)
    return (
        mean,
        _normal_quantile(mean, var, 0.5, upper),
        _normal_quantile(mean, var, q_lo, upper),
        _normal_quantile(mean, var, q_hi, upper),
        _normal_pos(mean, var, plan.target_n),
    )


def forecast_series(
    plan: StudyPlan,
    q_level: float = 0.9,
    method: Method = "convolution",
    horizon_q: float = 0.95,
    horizon: Optional[int] = None,
) -> ForecastSeries:
    """Mean, median, central ``q_level`` band and PoS on days ``1..T_horizon_q``."""
    _check_method(method)
    if not (0.5 <= q_level < 1.0):
        raise DomainError(f"q_level must lie in [0.5, 1), got {q_level!r}")
    if horizon is None:
        horizon = max(1, completion_time_quantile(plan, horizon_q, method))
    days = np.arange(1, horizon + 1)
    rows = parallel_map(lambda t: _day_summary(plan, int(t), q_level, method), days)
    mean, median, lo, hi, pos_ = (np.array(col) for col in zip(*rows))
    return ForecastSeries(
        days=days,
        mean=mean.astype(float),
        median=median.astype(int),
        lo=lo.astype(int),
        hi=hi.astype(int),
        pos_by_day=pos_.astype(float),
        q_level=q_level,
        method=method,
        horizon_q=horizon_q,
    )


@dataclass
class CompletionSummary:
    """Predictive mean and central interval of the completion day."""

    mean_day: float
    lo_day: int
    hi_day: int
    q_level: float
    pos_t_plan: float
    t_plan: int
    method: str


def completion_summary(
    plan: StudyPlan,
    q_level: float = 0.9,
    method: Method = "convolution",
    tail_q: float = 1.0 - 1e-4,
) -> CompletionSummary:
    """``E[tau] = sum_d P(tau > d)``, truncated at the ``tail_q`` quantile of ``tau``."""
    q_lo = (1.0 - q_level) / 2.0
    lo = completion_time_quantile(plan, q_lo, method)
    hi = completion_time_quantile(plan, 1.0 - q_lo, method)
    tail = completion_time_quantile(plan, tail_q, method)
    survival = parallel_map(lambda d: 1.0 - pos(plan, int(d), method), range(tail))
    return CompletionSummary(
        mean_day=float(math.fsum(survival)),
        lo_day=lo,
        hi_day=hi,
        q_level=q_level,
        pos_t_plan=pos(plan, plan.t_plan, method),
        t_plan=plan.t_plan,
        method=method,
    )


@dataclass
class CountryCapImpact:
    country_id: str
    cap: int
    prob_cap_by_t_plan: float
    cap_time_quantile: Optional[int]
    flagged: bool
    reasons: list[str] = field(default_factory=list)


@dataclass
class CapImpactReport:
    q: float
    t_plan: int
    pos_t_plan: float
    completion_quantile: Optional[int]
    countries: list[CountryCapImpact]
    method: str

    @property
    def flagged_ids(self) -> list[str]:
        return [c.country_id for c in self.countries if c.flagged]


def cap_time_quantile(country: CountryPlan, q: float) -> Optional[int]:
    """First day the cap is reached with probability ``>= q``; ``None`` if never."""
    if country.cap is None:
        raise DomainError(f"country {country.id} has no cap")
    if country.cap > 0 and country.n_sites == 0:
        return None
    return _first_day(lambda t: time_to_cap_cdf(country, t) >= q)


def cap_impact_report(plan: StudyPlan, q: float = 0.9, method: Method = "convolution") -> CapImpactReport:
    """Flag caps likely to be hit before the study would otherwise complete.

    A country is flagged when the probability of reaching its cap by
    ``t_plan`` exceeds the global PoS, or when its ``q``-quantile time to cap
    precedes the ``q``-quantile completion time.  An unreachable target has
    an infinite completion quantile (reported as ``None``).
    """
    _check_method(method)
    capped = [c for c in plan.countries if c.cap is not None]
    if not capped:
        raise DomainError("no capped countries")
    p_T = pos(plan, plan.t_plan, method)
    try:
        s_qn: Optional[int] = completion_time_quantile(plan, q, method)
    except UnreachableTargetError:
        s_qn = None
    out = []
    for c in capped:
        p_cap = time_to_cap_cdf(c, plan.t_plan)
        s_q = cap_time_quantile(c, q)
        reasons = []
        if p_cap > p_T:
            reasons.append("P(cap by t_plan) > PoS")
        if s_q is not None and (s_qn is None or s_q < s_qn):
            reasons.append("cap-time quantile < completion-time quantile")
        out.append(CountryCapImpact(c.id, c.cap, p_cap, s_q, bool(reasons), reasons))
    return CapImpactReport(q, plan.t_plan, p_T, s_qn, out, method)
