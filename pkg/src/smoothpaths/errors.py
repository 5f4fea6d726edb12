"""Exception types raised across the package."""


class SmoothPathsError(Exception):
    """Base class for all package errors."""


class GridMismatch(SmoothPathsError, ValueError):
    pass


class StencilTooShort(SmoothPathsError, ValueError):
    pass


class NormalizationError(SmoothPathsError, ValueError):
    pass


class WeightError(SmoothPathsError, ValueError):
    pass


class DegenerateState(SmoothPathsError, ValueError):
    pass


class HermiticityError(SmoothPathsError, ValueError):
    pass


class BadTimeStep(SmoothPathsError, ValueError):
    pass


class UnsupportedProcess(SmoothPathsError, ValueError):
    """Raised for processes with nonzero cubic or higher l-coefficients."""


class SolverError(SmoothPathsError, RuntimeError):
    pass


class OrderError(SmoothPathsError, ValueError):
    pass


class AliasError(SmoothPathsError, ValueError):
    pass


class ConvergenceError(SmoothPathsError, RuntimeError):
    """Extrapolation did not converge monotonically; ``table`` holds the sweep."""

    def __init__(self, message, table=None):
        super().__init__(message)
        self.table = table


class PhaseContinuityError(SmoothPathsError, ValueError):
    pass


class CausticError(SmoothPathsError, RuntimeError):
    """Characteristics crossed before the requested final time."""

    def __init__(self, message, t_caustic):
        super().__init__(message)
        self.t_caustic = t_caustic
