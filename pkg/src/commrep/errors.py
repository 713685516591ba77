"""Exception types shared across the package."""


class CommrepError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CommrepError):
    """Inconsistent dimensions, invalid ranges, or a bad config file."""


class UsageError(CommrepError):
    """An API contract was violated by the caller."""


class TrainingError(CommrepError):
    """Optimization diverged (NaN/Inf in loss or gradients)."""


class DataGenerationError(CommrepError):
    """A generated sample violated a physical invariant."""
