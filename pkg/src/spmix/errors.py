"""Exception hierarchy. The CLI maps these onto exit codes."""


class SpmError(Exception):
    """Base class for all library errors."""


class UsageError(SpmError, ValueError):
    """Bad arguments: shape mismatch, invalid config, violated precondition."""


class NumericError(SpmError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class DataError(SpmError):
    """A dataset or checkpoint could not be read or parsed."""
