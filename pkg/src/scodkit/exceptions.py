"""Exception types raised across the package."""


class ScodError(Exception):
    """Base class for package errors."""


class InvalidArgumentError(ScodError, ValueError):
    pass


class UnsupportedOracleError(ScodError):
    """The closed-form oracle requested does not apply to this world."""


class DegenerateScoreError(ScodError, ValueError):
    """A score column has zero spread where a scale estimate is needed."""


class FitDivergedError(ScodError, ArithmeticError):
    pass


class ConfigError(ScodError):
    pass


class DataError(ScodError):
    pass
