"""Exception hierarchy shared by every module."""


class ILGaCoError(Exception):
    """Base class for all package errors."""


class ValidationError(ILGaCoError, ValueError):
    """Invalid argument values, configuration, or data content."""


class DimensionError(ILGaCoError, ValueError):
    """Operand shapes do not conform."""


class UsageError(ILGaCoError, RuntimeError):
    """An API was called in a state where it is not allowed."""


class FormatError(ILGaCoError, ValueError):
    """A binary file is malformed. ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(ILGaCoError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""
