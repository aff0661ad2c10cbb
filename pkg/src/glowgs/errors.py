"""Exception hierarchy shared across the package."""


class GlowGSError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(GlowGSError, ValueError):
    """An argument violates a documented precondition."""


class NumericalError(GlowGSError, ArithmeticError):
    """A computation hit a numerically degenerate state."""


class DataFormatError(GlowGSError, ValueError):
    """A serialized file failed validation.

    Carries the failing field name and byte offset when known so callers can
    report actionable parse errors.
    """

    def __init__(self, message: str, field: str | None = None, offset: int | None = None):
        if field is not None:
            message = f"{message} (field={field!r}, offset={offset})"
        super().__init__(message)
        self.field = field
        self.offset = offset
