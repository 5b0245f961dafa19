"""Cost-minimal site allocation under a probability-of-success floor."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
from scipy import special

from ..capped import capped_rate_moments
from ..errors import (
    ConvergenceError,
    DimensionCeilingError,
    DomainError,
    InfeasibleError,
    NoFeasibleMemberError,
)
from ..model import rate_sf
from .core import (
    AllocationBounds,
    AllocationResult,
    CostModel,
    CountryKinetics,
    _arrays,
    _cap_array,
    _normal_sf,
    cost_breakdown,
    pos_capped,
    pos_capped_convolution,
    pos_grid,
    pos_unrestricted,
    total_cost,
)
from .simplex import solve_lp

__all__ = [
    "DEConfig",
    "DIRECT_CEILING",
    "optimize_stepwise_lp",
    "optimize_direct",
    "optimize_de",
    "optimize",
]

DIRECT_CEILING = 10**8
LP_MAX_ITER = 15
LP_COST_TOL = 0.5
ROUNDING_EXHAUSTIVE_MAX = 20
_CHUNK = 1 << 17
_FEAS_TOL = 1e-12


def _check_dims(bounds: AllocationBounds, kin, costs: CostModel) -> None:
    if not bounds.dim == len(kin) == costs.dim:
        raise DomainError("bounds, kinetics and costs must cover the same countries")


def _check_target(n: int, P: float) -> None:
    if n < 1:
        raise DomainError("target n must be >= 1")
    if not 0.0 < P < 1.0:
        raise DomainError("P must lie in (0, 1)")


def _finish(
    alloc: np.ndarray,
    kin: Sequence[CountryKinetics],
    costs: CostModel,
    n: int,
    pos_achieved: float,
    method: str,
    iterations: int,
    caps=None,
    trace: Sequence[float] = (),
) -> AllocationResult:
    alloc = np.asarray(alloc, dtype=np.int64)
    checks = {
        "pg": pos_unrestricted(alloc, kin, n, "pg"),
        "normal": pos_unrestricted(alloc, kin, n, "normal"),
        "grid": pos_grid(alloc, kin, n, caps),
    }
    if caps is not None and any(c is not None for c in caps):
        checks["capped_normal"] = pos_capped(alloc, kin, caps, n)
        checks["capped_convolution"] = pos_capped_convolution(alloc, kin, caps, n)
    return AllocationResult(
        allocation=alloc,
        total_cost=total_cost(alloc, kin, costs),
        pos_achieved=float(pos_achieved),
        method=method,
        iterations=iterations,
        cost_components={k: float(v) for k, v in cost_breakdown(alloc, kin, costs).items()},
        pos_checks={k: float(v) for k, v in checks.items()},
        trace=list(trace),
    )


# -- step-wise linearization -------------------------------------------------


def _margin(N, mu, g, n, z):
    """``E(N) - z sqrt(G^2(N)) - n``; non-negative iff the normal criterion holds."""
    N = np.asarray(N, dtype=float)
    return N @ mu - z * np.sqrt(N @ g) - n


def _round_allocation(Nc, low, high, mu, g, n, z, unit):
    """Integer allocation near ``Nc`` meeting the normal criterion at least cost."""
    base = np.clip(np.round(Nc), low, high)
    frac = np.flatnonzero(np.abs(Nc - np.round(Nc)) > 1e-9)
    lo = np.clip(np.floor(Nc[frac]), low[frac], high[frac])
    hi = np.clip(np.ceil(Nc[frac]), low[frac], high[frac])
    if frac.size <= ROUNDING_EXHAUSTIVE_MAX:
        # rows enumerate floor/ceil choices; row 0 is all floors
        bits = (np.arange(1 << frac.size)[:, None] >> np.arange(frac.size)[::-1]) & 1
        cand = np.tile(base, (bits.shape[0], 1))
        cand[:, frac] = np.where(bits == 1, hi, lo)
        ok = _margin(cand, mu, g, n, z) >= -_FEAS_TOL
        if np.any(ok):
            cost = cand @ unit
            cost = np.where(ok, cost, np.inf)
            return cand[int(np.argmin(cost))]
        cand = cand[-1]
    else:
        cand = base.copy()
        cand[frac] = hi
        # drop to the floor where it stays feasible, most expensive first
        for j in frac[np.argsort(-unit[frac], kind="stable")]:
            trial = cand.copy()
            trial[j] = max(low[j], np.floor(Nc[j]))
            if _margin(trial, mu, g, n, z) >= -_FEAS_TOL:
                cand = trial
    return _repair(cand, low, high, mu, g, n, z, unit)


def _repair(N, low, high, mu, g, n, z, unit):
    N = N.copy()
    while _margin(N, mu, g, n, z) < -_FEAS_TOL:
        room = np.flatnonzero(N < high)
        if room.size == 0:
            raise InfeasibleError("no integer allocation within bounds meets the target")
        base = _margin(N, mu, g, n, z)
        gain = np.empty(room.size)
        for i, j in enumerate(room):
            N[j] += 1
            gain[i] = (_margin(N, mu, g, n, z) - base) / max(unit[j], 1e-300)
            N[j] -= 1
        N[room[int(np.argmax(gain))]] += 1
    return N


def optimize_stepwise_lp(
    bounds: AllocationBounds,
    kin: Sequence[CountryKinetics],
    costs: CostModel,
    n: int,
    P: float,
    max_iter: int = LP_MAX_ITER,
    cost_tol: float = LP_COST_TOL,
) -> AllocationResult:
    """Repeated LP solves with the square-root term frozen at the previous iterate.

    Country costs enter the LP only where ``low > 0``, where they are sunk.
    """
    _check_dims(bounds, kin, costs)
    _check_target(n, P)
    mu, sv = _arrays(kin)
    g = mu + sv
    z = float(special.ndtri(P))
    low = bounds.low.astype(float)
    high = bounds.high.astype(float)
    if _margin(high, mu, g, n, z) < -_FEAS_TOL:
        raise InfeasibleError(f"PoS {P} is unreachable even at the upper bounds")
    unit = costs.site + costs.patient * mu
    fixed = float(unit @ low + costs.country @ (low > 0))

    x = np.zeros_like(low)
    trace: list[float] = []
    for it in range(1, max_iter + 1):
        rhs = n + z * np.sqrt(g @ (x + low)) - mu @ low
        sol = solve_lp(unit, A_ub=-mu[None, :], b_ub=[-rhs], upper=high - low)
        x = sol.x
        trace.append(float(unit @ x + fixed))
        if z == 0.0 or (it > 1 and abs(trace[-1] - trace[-2]) < cost_tol):
            break
    else:
        raise ConvergenceError(f"step-wise LP cost did not settle within {max_iter} iterations")

    N = _round_allocation(x + low, low, high, mu, g, n, z, unit).astype(np.int64)
    achieved = float(_normal_sf(N @ mu, N @ g, n))
    return _finish(N, kin, costs, n, achieved, "lp", it, trace=trace)


def lp_iterates_1d(E: float, V: float, n: float, z: float, x0: float = 0.0, steps: int = 15) -> list[float]:
    """One-country fixed-point sequence ``x <- (n + z sqrt(g x)) / E`` with ``g = E + V``.

    ``E`` and ``V`` are per-site contributions to the mean and to the
    rate variance.  With no box constraint the LP solution is the equality
    point, so the sequence is the step-wise method's iterate path.
    """
    g = E + V
    xs = [x0]
    for _ in range(steps):
        xs.append((n + z * np.sqrt(g * xs[-1])) / E)
    return xs


# -- tabulated per-country contributions (direct search and DE) --------------


@dataclass
class _Tables:
    low: np.ndarray
    high: np.ndarray
    cost: list[np.ndarray]
    mean: list[np.ndarray]
    var: list[np.ndarray]
    S2: list[np.ndarray]

    @classmethod
    def build(cls, bounds, kin, costs, caps) -> "_Tables":
        mu, sv = _arrays(kin)
        L = _cap_array(caps, len(kin))
        cost, mean, var, S2 = [], [], [], []
        for s in range(len(kin)):
            N = np.arange(bounds.low[s], bounds.high[s] + 1, dtype=float)
            E = N * mu[s]
            s2 = N * sv[s]
            cost.append(N * costs.site[s] + N * costs.patient[s] * mu[s] + (N > 0) * costs.country[s])
            if np.isfinite(L[s]):
                m, v = capped_rate_moments(E, s2, np.full_like(E, L[s]))
                mean.append(np.atleast_1d(m))
                var.append(np.atleast_1d(v))
            else:
                mean.append(E)
                var.append(E + s2)
            S2.append(s2)
        return cls(bounds.low, bounds.high, cost, mean, var, S2)

    def evaluate(self, digits: np.ndarray, n: int, method: str):
        """Cost and PoS for offsets ``digits`` (shape ``(k, S)``) from ``low``."""
        cost = np.zeros(digits.shape[0])
        mean = np.zeros_like(cost)
        var = np.zeros_like(cost)
        S2 = np.zeros_like(cost)
        for s in range(digits.shape[1]):
            d = digits[:, s]
            cost += self.cost[s][d]
            mean += self.mean[s][d]
            var += self.var[s][d]
            S2 += self.S2[s][d]
        if method == "pg":
            pos = np.asarray(rate_sf(n - 1, mean, S2))
        else:
            pos = _normal_sf(mean, var, n)
        return cost, pos


def _pos_method(caps, method: Optional[str]) -> str:
    capped = caps is not None and any(c is not None for c in caps)
    if capped:
        if method not in (None, "capped_normal"):
            raise DomainError("capped plans are evaluated with the capped normal approximation")
        return "capped_normal"
    if method is None:
        return "pg"
    if method not in ("pg", "normal"):
        raise DomainError(f"unknown PoS method {method!r}")
    return method


def optimize_direct(
    bounds: AllocationBounds,
    kin: Sequence[CountryKinetics],
    costs: CostModel,
    n: int,
    P: float,
    caps=None,
    method: Optional[str] = None,
    ceiling: int = DIRECT_CEILING,
    chunk: int = _CHUNK,
) -> AllocationResult:
    """Exhaustive search of the bounds box in odometer order (last country fastest).

    The incumbent starts at the upper bounds and is replaced only by a
    strictly cheaper feasible candidate, so ties keep the earliest one.
    """
    _check_dims(bounds, kin, costs)
    _check_target(n, P)
    pm = _pos_method(caps, method)
    dim = bounds.size()
    if dim > ceiling:
        raise DimensionCeilingError(f"search space has {dim} allocations, ceiling is {ceiling}")
    tables = _Tables.build(bounds, kin, costs, caps)
    radix = (bounds.high - bounds.low + 1).astype(np.int64)
    top = (radix - 1)[None, :]
    best_cost, pos_top = tables.evaluate(top, n, pm)
    if pos_top[0] < P:
        raise InfeasibleError(f"PoS {P} is unreachable even at the upper bounds")
    best_cost = float(best_cost[0])
    best = top[0].copy()
    best_pos = float(pos_top[0])
    # place values for mixed-radix decoding
    place = np.ones_like(radix)
    for s in range(radix.size - 2, -1, -1):
        place[s] = place[s + 1] * radix[s + 1]
    for start in range(0, dim, chunk):
        idx = np.arange(start, min(start + chunk, dim), dtype=np.int64)
        digits = (idx[:, None] // place[None, :]) % radix[None, :]
        cost, pos = tables.evaluate(digits, n, pm)
        cost = np.where(pos >= P, cost, np.inf)
        i = int(np.argmin(cost))
        if cost[i] < best_cost:
            best_cost, best, best_pos = float(cost[i]), digits[i].copy(), float(pos[i])
    alloc = best + bounds.low
    return _finish(alloc, kin, costs, n, best_pos, f"direct:{pm}", dim, caps=caps)


# -- differential evolution -------------------------------------------------


@dataclass(frozen=True)
class DEConfig:
    pop_factor: int = 10
    F: float = 0.8
    CR: float = 0.9
    generations: int = 300
    penalty_factor: float = 10.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.pop_factor < 1 or self.generations < 0:
            raise DomainError("pop_factor must be >= 1 and generations >= 0")
        if not (0 < self.F <= 2 and 0 <= self.CR <= 1):
            raise DomainError("need 0 < F <= 2 and 0 <= CR <= 1")


def _distinct_triples(rng: np.random.Generator, size: int) -> np.ndarray:
    """For each row ``i``, three distinct indices in ``range(size)`` other than ``i``."""
    keys = rng.random((size, size))
    np.fill_diagonal(keys, np.inf)
    return np.argsort(keys, axis=1, kind="stable")[:, :3]


def optimize_de(
    bounds: AllocationBounds,
    kin: Sequence[CountryKinetics],
    costs: CostModel,
    caps,
    n: int,
    P: float,
    config: DEConfig = DEConfig(),
) -> AllocationResult:
    """rand/1/bin differential evolution with a PoS-shortfall penalty.

    Members are real vectors in the bounds box, evaluated after rounding.
    The cheapest feasible allocation evaluated in any generation is returned.
    """
    _check_dims(bounds, kin, costs)
    _check_target(n, P)
    S = bounds.dim
    caps = [None] * S if caps is None else list(caps)
    pm = "normal" if all(c is None for c in caps) else "capped_normal"
    if all(c is not None for c in caps) and sum(caps) < n:
        raise InfeasibleError(f"caps sum to {sum(caps)} < target {n}")
    tables = _Tables.build(bounds, kin, costs, caps)
    low = bounds.low.astype(float)
    span = (bounds.high - bounds.low).astype(float)
    top_cost, top_pos = tables.evaluate((bounds.high - bounds.low)[None, :], n, pm)
    if top_pos[0] < P:
        raise InfeasibleError(f"PoS {P} is unreachable even at the upper bounds")
    weight = config.penalty_factor * max(float(top_cost[0]), 1.0)
    rng = np.random.default_rng(config.seed)
    size = max(4, config.pop_factor * S)

    best = {"cost": np.inf, "digits": None, "pos": 0.0}

    def score(pop: np.ndarray) -> np.ndarray:
        digits = np.clip(np.rint(pop), 0, span).astype(np.int64)
        cost, pos = tables.evaluate(digits, n, pm)
        feasible = pos >= P
        if np.any(feasible):
            c = np.where(feasible, cost, np.inf)
            i = int(np.argmin(c))
            if c[i] < best["cost"]:
                best.update(cost=float(c[i]), digits=digits[i].copy(), pos=float(pos[i]))
        return cost + weight * np.maximum(0.0, P - pos)

    pop = rng.random((size, S)) * span
    fit = score(pop)
    rows = np.arange(size)
    for _ in range(config.generations):
        r = _distinct_triples(rng, size)
        mutant = np.clip(pop[r[:, 0]] + config.F * (pop[r[:, 1]] - pop[r[:, 2]]), 0.0, span)
        cross = rng.random((size, S)) < config.CR
        cross[rows, rng.integers(S, size=size)] = True
        trial = np.where(cross, mutant, pop)
        tfit = score(trial)
        keep = tfit <= fit
        pop[keep] = trial[keep]
        fit[keep] = tfit[keep]
    if best["digits"] is None:
        raise NoFeasibleMemberError("no evaluated member met the PoS target")
    alloc = best["digits"] + bounds.low
    return _finish(alloc, kin, costs, n, best["pos"], "de", config.generations, caps=caps)


def optimize(
    bounds: AllocationBounds,
    kin: Sequence[CountryKinetics],
    costs: CostModel,
    n: int,
    P: float,
    caps=None,
    method: Literal["auto", "lp", "direct", "de"] = "auto",
    de_config: DEConfig = DEConfig(),
    ceiling: int = DIRECT_CEILING,
) -> AllocationResult:
    """Dispatch: ``auto`` runs direct search when the box fits under ``ceiling``,
    otherwise the LP path (uncapped) or DE (capped)."""
    capped = caps is not None and any(c is not None for c in caps)
    if method == "auto":
        method = "direct" if bounds.size() <= ceiling else ("de" if capped else "lp")
    if method == "direct":
        return optimize_direct(bounds, kin, costs, n, P, caps=caps, ceiling=ceiling)
    if method == "de":
        return optimize_de(bounds, kin, costs, caps, n, P, de_config)
    if method == "lp":
        if capped:
            raise DomainError("the LP path does not model caps; use direct or de")
        return optimize_stepwise_lp(bounds, kin, costs, n, P)
    raise DomainError(f"unknown optimizer {method!r}")
