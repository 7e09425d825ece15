"""Exception types raised by the package."""


class ConfigurationError(ValueError):
    """Invalid grid, experiment configuration or user parameters.

    ``problems`` holds one message per offending item so that callers can
    report every issue at once instead of the first one.
    """

    def __init__(self, message, problems=None):
        super().__init__(message)
        self.problems = list(problems) if problems else [message]


class DiscretizationError(ArithmeticError):
    """The discrete operator or propagator is not usable as requested."""


class CFLViolation(DiscretizationError):
    """Leapfrog time step exceeds the stability limit."""


class DataInconsistencyError(ValueError):
    """Measured data cannot come from a symmetric, positive wave problem.

    ``pivot`` is the index of the failing Cholesky pivot when applicable.
    """

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot
