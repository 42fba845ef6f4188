"""Exception types shared across the package."""


class QuenchLabError(Exception):
    """Base class for package-specific errors."""


class ParameterError(QuenchLabError, ValueError):
    """A distribution, kernel, or model parameter is out of range."""


class DomainError(QuenchLabError, ValueError):
    """An evaluation point lies outside a function's domain of finiteness."""


class DimensionError(QuenchLabError, ValueError):
    """Mismatched spatial dimensions or box sizes between objects."""


class SizeError(QuenchLabError, ValueError):
    """An exact algorithm was asked to run on an instance above its size cap."""


class ConvergenceError(QuenchLabError, RuntimeError):
    """An iterative solver did not reach its tolerance.

    Carries the last iterate and residual so callers can inspect or flag it.
    """

    def __init__(self, message, last=None, residual=None):
        super().__init__(message)
        self.last = last
        self.residual = residual


class StatisticsError(QuenchLabError, ValueError):
    """Too few samples/replicas requested for a meaningful statistic."""


class UnsupportedError(QuenchLabError, ValueError):
    """The operation is only defined for a different kind of input."""
