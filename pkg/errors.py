"""Exception types shared by the refinement modules and the CLI."""


class DisprefineError(Exception):
    """Base class for all errors raised by the toolkit."""


class InvalidInputError(DisprefineError, ValueError):
    """An array or argument violates an operation's preconditions."""


class ConfigError(DisprefineError, ValueError):
    """Parameters or pipeline configuration are inconsistent."""


class FormatError(DisprefineError, ValueError):
    """A file on disk is malformed or uses an unsupported encoding."""

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
