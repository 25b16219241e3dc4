"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration 2, data 3, numerical 4.
"""


class AedError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AedError):
    """Invalid or mismatched configuration (bad option, hash mismatch, ...)."""


class DataError(AedError):
    """Malformed input data or structurally invalid intermediate objects."""


class NumericalError(AedError):
    """Non-finite values encountered where finite numbers are required."""
