"""Exception hierarchy shared by all modules."""


class SafeFilterError(Exception):
    """Base class for every error raised by the package."""


class DimensionError(SafeFilterError, ValueError):
    pass


class StabilityError(SafeFilterError):
    """Raised when an operation needs a Hurwitz matrix and did not get one."""


class ConditioningError(SafeFilterError):
    """A matrix that must be inverted is singular or badly conditioned.

    Parameters
    ----------
    message : str
    indicator : float
        Smallest singular value or condition number, whichever the caller
        checked.
    """

    def __init__(self, message, indicator=None):
        super().__init__(message)
        self.indicator = indicator


class ExtractionError(ConditioningError):
    pass


class NumericalError(SafeFilterError):
    """Singular resolvent or other numerical breakdown."""

    def __init__(self, message, omega=None):
        super().__init__(message)
        self.omega = omega


class DivergenceError(SafeFilterError):
    """Integration produced NaN/inf. ``time`` is the first bad sample."""

    def __init__(self, message, time):
        super().__init__(message)
        self.time = time


class SolverFailure(SafeFilterError):
    """The SDP backend broke down (not the same thing as infeasibility)."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class InfeasibleError(SafeFilterError):
    """A pipeline needed a feasible point and the problem had none."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ConfigError(SafeFilterError, ValueError):
    pass
