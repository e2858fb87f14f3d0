class DeepBsdeError(Exception):
    """Base class for every error raised by this library."""


class ShapeError(DeepBsdeError):
    """Operands have incompatible or malformed shapes."""


class ConfigError(DeepBsdeError):
    """Invalid configuration value, unknown option, or misuse of an interface."""


class NumericError(DeepBsdeError):
    """A computation produced non-finite values."""
