"""Exception types shared across the pipeline."""


class SwarmDetectError(Exception):
    """Base class for all pipeline errors."""


class ConfigurationError(SwarmDetectError):
    """A config value is invalid; the message names the offending field."""


class InvalidWellError(SwarmDetectError):
    """Well geometry is inconsistent with the frame it refers to."""


class InsufficientFramesError(SwarmDetectError):
    """Not enough frames for the requested averaging window."""


class DegenerateImageError(SwarmDetectError):
    """In-mask pixels are (near-)constant and carry no motion signal."""


class InsufficientDataError(SwarmDetectError):
    """Too few wells or images to perform the requested split/run."""


class UndefinedMetricError(SwarmDetectError):
    """A metric's denominator is empty (e.g. no positives tested)."""


class EmptyInputError(SwarmDetectError):
    """An operation received an empty list where at least one item is required."""


class InputShapeError(SwarmDetectError):
    """Tensor/raster shape does not match the model configuration."""


class DivergenceError(SwarmDetectError):
    """Training loss became non-finite."""
