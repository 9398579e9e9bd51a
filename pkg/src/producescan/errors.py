"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition (shape, range, state)."""


class ParseError(ValueError):
    """A file could not be decoded. Carries the byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedFormatError(ValueError):
    """The file was recognized but uses an unsupported variant."""


class IntegrityError(ValueError):
    """Decoded data does not satisfy a structural invariant."""
