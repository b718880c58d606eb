"""Exception types shared across the package."""


class CldetectError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(CldetectError, ValueError):
    """Invalid configuration, dimension mismatch, or malformed input."""


class NumericError(CldetectError, ArithmeticError):
    """Non-finite value encountered during training or inference."""


class IngestionError(CldetectError):
    """A dataset directory or file could not be ingested."""


class VersionNotFoundError(CldetectError, LookupError):
    """Requested model version does not exist in the registry."""


class InsufficientDataError(CldetectError, ValueError):
    """Window or sample set is too small for the requested statistic."""


class NoActiveModelError(CldetectError, RuntimeError):
    """Serving was requested but no model version is active."""
