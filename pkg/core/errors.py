"""
Exception hierarchy for the meta-nulling toolkit.

Every error raised on purpose by the core package derives from MLNError so the
command line front end can report it as a single machine-parsable line.
"""


class MLNError(Exception):
    """Base class for all toolkit errors."""

    @property
    def kind(self) -> str:
        return type(self).__name__


class DimensionError(MLNError, ValueError):
    """Operand shapes do not agree."""


class DegenerateInputError(MLNError, ValueError):
    """Input is numerically degenerate (near-zero norm, non-finite entries)."""


class LabelError(MLNError, ValueError):
    """Class index out of range."""


class ConfigError(MLNError, ValueError):
    """Invalid or inconsistent configuration."""


class DatasetError(MLNError, ValueError):
    """Dataset cannot provide what was asked of it."""


class DatasetFormatError(DatasetError):
    """Dataset file does not follow the flat-binary layout."""


class DatasetExhaustedError(DatasetError):
    """Not enough classes or items left to build an episode."""


class CheckpointError(MLNError, RuntimeError):
    """Checkpoint file cannot be read or written."""


class ChecksumError(CheckpointError):
    """Stored CRC32 does not match the payload."""


class VersionMismatchError(CheckpointError):
    """Checkpoint was written by an incompatible format version."""


class DivergenceError(MLNError, RuntimeError):
    """Training loss became non-finite."""
