"""Exception types shared across the package."""


class MSSError(Exception):
    """Base class for all msspec errors."""


class InvalidInput(MSSError, ValueError):
    pass


class AlignmentMismatch(MSSError, ValueError):
    """Alignment counts disagree with a frame count or another alignment."""


class InvalidDuration(MSSError, ValueError):
    pass


class ModeError(MSSError, RuntimeError):
    """Operation not available in the configured model mode."""


class NumericalError(MSSError, FloatingPointError):
    pass


class CheckpointError(MSSError, ValueError):
    """Unreadable checkpoint or one whose config does not match the request."""
