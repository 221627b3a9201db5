"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes (config=2, data=3, numeric=4),
so raising the right class matters at every user-facing boundary.
"""


class MotifHeadError(Exception):
    """Base class for all package errors."""


class ConfigError(MotifHeadError):
    """Invalid configuration value or malformed config/spec file."""


class DataError(MotifHeadError):
    """Problem with a manifest, embedding store, or their consistency."""


class NumericError(MotifHeadError):
    """Non-finite values or numerically invalid state during computation."""


class ShapeError(MotifHeadError):
    """Dimension mismatch between arrays fed to a kernel or layer."""
