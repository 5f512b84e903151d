"""Exception types shared across the package."""


class SemcomError(Exception):
    """Base class for package errors."""


class ShapeMismatchError(SemcomError):
    """Input shape incompatible with a layer or operation."""


class UnknownActivationError(SemcomError):
    """Activation name outside the supported set."""


class EmptyTapeError(SemcomError):
    """Backward pass requested on a tape with no recorded operations."""


class SeedShapeError(SemcomError):
    """Backward seed does not match the shape of the tape's final output."""


class NonScalarLossError(SemcomError):
    """Gradient check requires the loss function to produce a scalar."""


class ZeroPowerError(SemcomError):
    """Operation undefined on an all-zero signal."""


class TrainingDivergedError(SemcomError):
    """Loss became non-finite during training."""


class CorruptDatasetError(SemcomError):
    """Dataset file failed structural validation."""


class ConfigError(SemcomError):
    """Experiment configuration is invalid; message names the key path."""


class DegenerateSignalWarning(RuntimeWarning):
    """Power normalization hit the zero-signal floor."""


class UnnormalizedInputWarning(RuntimeWarning):
    """Channel input power deviates more than 10% from unit power."""
