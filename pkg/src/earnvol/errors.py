"""Exception types shared across the package."""


class EarnvolError(Exception):
    """Base class for all errors raised by earnvol."""


class DataError(EarnvolError, ValueError):
    """Input data is malformed or violates an invariant."""


class CalendarError(EarnvolError, LookupError):
    """A date is not a trading day, or an offset leaves the calendar."""


class DegenerateVariance(EarnvolError, ArithmeticError):
    """Sum of squared deviations is (numerically) zero; log-volatility undefined."""


class InsufficientFutureData(EarnvolError):
    """Fewer post-announcement returns than the requested window."""


class InsufficientHistory(EarnvolError):
    """Not enough pre-announcement returns for the requested series."""


class SingularDesign(EarnvolError, ArithmeticError):
    """Normal equations are singular; use a positive ridge penalty."""


class RaggedDimension(DataError):
    """Embedding vectors of differing length."""


class ConfigError(EarnvolError, ValueError):
    """Experiment configuration is invalid."""
