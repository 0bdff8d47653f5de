"""Error types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericalError -> 4.
"""


class ConfigError(ValueError):
    """A configuration value is missing, malformed, or out of range."""


class DataError(ValueError):
    """Input data cannot be parsed or cannot support the requested scenario."""


class NumericalError(ArithmeticError):
    """A computation produced a non-finite value."""
