"""Exception types shared by all modules."""


class LabError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(LabError, ValueError):
    """An argument violates a documented constraint."""


class PreconditionError(LabError, ValueError):
    """Input data does not satisfy an operation's precondition."""


class StructuralError(LabError, ValueError):
    """Array shapes or grids are inconsistent."""


class BudgetError(LabError):
    """The requested computation exceeds the configured work budget."""


class ResolutionError(LabError):
    """A quadrature or grid resolution check failed."""


class ConvergenceError(LabError):
    """An iterative procedure did not converge."""


class QualityWarning(UserWarning):
    """A result was computed but a truncation tail exceeded its threshold."""
