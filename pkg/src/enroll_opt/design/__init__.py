"""Site-allocation optimization."""

from .core import (
    AllocationBounds,
    AllocationResult,
    CostModel,
    CountryKinetics,
    capped_country_moments,
    check_feasibility,
    cost_breakdown,
    expected_rate,
    pos_capped,
    pos_capped_convolution,
    pos_grid,
    pos_unrestricted,
    total_cost,
)
from .optimize import (
    DIRECT_CEILING,
    DEConfig,
    lp_iterates_1d,
    optimize,
    optimize_de,
    optimize_direct,
    optimize_stepwise_lp,
)
from .simplex import LPResult, UnboundedLPError, solve_lp

__all__ = [
    "AllocationBounds",
    "AllocationResult",
    "CostModel",
    "CountryKinetics",
    "DEConfig",
    "DIRECT_CEILING",
    "LPResult",
    "UnboundedLPError",
    "capped_country_moments",
    "check_feasibility",
    "cost_breakdown",
    "expected_rate",
    "lp_iterates_1d",
    "optimize",
    "optimize_de",
    "optimize_direct",
    "optimize_stepwise_lp",
    "pos_capped",
    "pos_capped_convolution",
    "pos_grid",
    "pos_unrestricted",
    "solve_lp",
    "total_cost",
]
