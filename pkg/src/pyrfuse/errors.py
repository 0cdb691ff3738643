"""Exception types shared across the package."""


class PyrfuseError(Exception):
    """Base class for all errors raised by pyrfuse."""


class FormatError(PyrfuseError, ValueError):
    """A file does not follow the expected binary layout."""


class LengthError(FormatError):
    """A file payload is shorter than its header promises."""


class UnsupportedDtypeError(FormatError):
    """An MBR header carries a sample type code outside {0, 1}."""


class RangeError(PyrfuseError, ValueError):
    """A sample lies outside the range a storage type can represent."""


class DimensionError(PyrfuseError, ValueError):
    """Spatial dimensions are incompatible with a pyramid operation."""


class ShapeError(PyrfuseError, ValueError):
    """Tensor or image shapes do not agree."""


class DegenerateBandError(PyrfuseError, ValueError):
    """A band has zero mean or zero variance where a metric divides by it."""


class ConfigError(PyrfuseError, ValueError):
    """A training configuration file is malformed or names an unknown key."""


class GradientLookupError(PyrfuseError, KeyError):
    """A gradient was requested for an object that never appeared on the tape."""
