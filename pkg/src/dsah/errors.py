"""Exception types shared across the package.

The CLI maps these onto exit codes: ``ConfigError`` -> 2, ``DataError`` -> 3,
``NumericalAbort`` -> 4.
"""


class DSAHError(Exception):
    """Base class for all package errors."""


class ConfigError(DSAHError, ValueError):
    """Invalid hyperparameters or configuration file."""


class DataError(DSAHError, ValueError):
    """Malformed or inconsistent input data."""


class DimensionError(DSAHError, ValueError):
    """Operand shapes do not agree."""


class NumericalAbort(DSAHError, ArithmeticError):
    """A computation produced NaN or Inf."""
