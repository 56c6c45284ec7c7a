"""Exception types shared across the package."""


class IgnetError(Exception):
    """Base class for all errors raised by this package."""


class GeometryError(IgnetError):
    """Convolution or pooling geometry is incompatible with the input."""


class ShapeChainError(IgnetError):
    """Consecutive layer shapes do not chain into a valid network."""


class ConfigError(IgnetError):
    """A configuration file or value could not be interpreted."""


class DataError(IgnetError):
    """A dataset directory or file could not be ingested."""


class FilenameError(DataError):
    """A dataset filename does not follow the encoded label schema."""


class UnknownAuthorCodeError(FilenameError):
    """The author letter in a filename is not in the code table."""


class ModelFormatError(IgnetError):
    """A serialized model file is malformed or truncated."""


class DivergenceError(IgnetError):
    """Training produced a non-finite loss or parameter (gradient explosion)."""


class StageError(IgnetError):
    """A worker failed while executing a parallel stage."""
