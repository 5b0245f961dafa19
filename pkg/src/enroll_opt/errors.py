"""Exception hierarchy shared by the kernel modules and the CLI."""


class EnrollOptError(Exception):
    """Base class for all package errors."""


class DomainError(EnrollOptError, ValueError):
    """Invalid distribution parameter or probability level."""


class DegenerateMomentsError(EnrollOptError):
    """Cumulative-rate variance is zero, so gamma moment matching is undefined."""


class UnreachableTargetError(EnrollOptError):
    """The enrollment target can never be reached under the plan's caps."""


class InfeasibleError(EnrollOptError):
    """No allocation inside the bounds reaches the requested probability of success."""


class ConvergenceError(EnrollOptError):
    """An iterative procedure hit its iteration limit without stabilising."""


class DimensionCeilingError(EnrollOptError):
    """Exhaustive search grid is larger than the configured ceiling."""


class NoFeasibleMemberError(InfeasibleError):
    """Differential evolution never evaluated a candidate meeting the PoS constraint."""
