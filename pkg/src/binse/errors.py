"""Exception hierarchy shared across the package."""


class BinseError(Exception):
    """Base class for all package errors."""


class InvalidInputError(BinseError):
    """Operation received inputs that violate its preconditions."""


class InvalidConfigError(BinseError):
    """A configuration object is internally inconsistent."""


class DegenerateInputError(BinseError):
    """Input is technically valid but has no usable content (e.g. zero energy)."""


class CorruptDatasetError(BinseError):
    """A stored dataset entry is missing or inconsistent."""


class TrainingFaultError(BinseError):
    """Non-finite loss or gradient encountered during training."""


class CheckpointVersionError(BinseError):
    """Checkpoint format or model config does not match expectations."""


class InsufficientSignalError(BinseError):
    """Signal too short for the requested analysis."""
