"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class VidueError(Exception):
    pass


class ConfigError(VidueError, ValueError):
    """Invalid configuration or incompatible parameter combination."""


class DataError(VidueError, RuntimeError):
    """Missing, malformed, or corrupted input data / artifacts."""


class NumericError(VidueError, RuntimeError):
    """Non-finite values where finite ones are required (e.g. NaN loss)."""
