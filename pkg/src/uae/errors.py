"""Exception types raised across the package."""


class UaeError(Exception):
    pass


class DimensionError(UaeError, ValueError):
    """Operand shapes do not conform."""


class ValidationError(UaeError, ValueError):
    """An input violates a documented precondition."""


class NumericError(UaeError, ArithmeticError):
    """Non-finite values or an iterative method failed to converge."""


class FormatError(UaeError, ValueError):
    """A file does not match its binary or text format."""


class StateError(UaeError, RuntimeError):
    pass


class TrainingError(UaeError, RuntimeError):
    """Training diverged; the message names the epoch and step."""
