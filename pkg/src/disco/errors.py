"""Exception hierarchy shared across the package.

Two families matter to callers: configuration problems (bad dimensions,
invalid hyperparameters, malformed files) and numeric failures (NaN/Inf
escaping a computation). The CLI maps them to exit codes 2 and 3.
"""


class ConfigError(ValueError):
    """Invalid configuration, argument, or file format."""


class ShapeError(ConfigError):
    """Array dimensions do not match what the operation requires."""


class DomainError(ConfigError):
    """Argument outside the mathematical domain of the operation."""


class NumericError(ArithmeticError):
    """A computation produced non-finite values."""
