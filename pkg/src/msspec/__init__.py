"""Multi-scale mel-spectrogram modelling for duration-based neural TTS."""

from msspec.errors import (
    AlignmentMismatch,
    CheckpointError,
    InvalidDuration,
    InvalidInput,
    ModeError,
    NumericalError,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentMismatch",
    "CheckpointError",
    "InvalidDuration",
    "InvalidInput",
    "ModeError",
    "NumericalError",
]
