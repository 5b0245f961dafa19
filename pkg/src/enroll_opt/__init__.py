"""Enrollment forecasting and site-allocation optimization for multicentre trials.

Counts are modelled as Poisson processes with gamma-distributed site rates;
countries may cap their enrollment.
"""

from .errors import (
    ConvergenceError,
    DegenerateMomentsError,
    DimensionCeilingError,
    DomainError,
    EnrollOptError,
    InfeasibleError,
    NoFeasibleMemberError,
    UnreachableTargetError,
)
from .model import CountryPlan, SitePlan, StudyPlan
from .pgdist import DiscreteDist, PGParams, RatePrior

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "CountryPlan",
    "DegenerateMomentsError",
    "DimensionCeilingError",
    "DiscreteDist",
    "DomainError",
    "EnrollOptError",
    "InfeasibleError",
    "NoFeasibleMemberError",
    "PGParams",
    "RatePrior",
    "SitePlan",
    "StudyPlan",
    "UnreachableTargetError",
]
