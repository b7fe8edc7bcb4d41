"""Exception hierarchy shared across the package."""


class HdtirError(Exception):
    """Base class for all package errors."""


class DataError(HdtirError, ValueError):
    """Input data is malformed or unusable (empty tail, bad file, ...)."""


class ConfigError(HdtirError, ValueError):
    """A configuration value is missing, unknown or out of range."""


class DivergenceError(HdtirError, FloatingPointError):
    """A linear predictor left the admissible range |x'theta| <= CAP."""


class ProjectionError(HdtirError, RuntimeError):
    """The projection-direction program could not be solved."""
