"""Exception hierarchy. The CLI maps each family to an exit code."""


class SDClusterError(Exception):
    """Base class for all package errors."""


class ConfigError(SDClusterError, ValueError):
    """Invalid parameters or configuration (CLI exit code 2)."""


class DataError(SDClusterError, ValueError):
    """Malformed, missing or unusable input data (CLI exit code 3)."""


class NumericalError(SDClusterError, ArithmeticError):
    """A statistic or index is undefined for the given input (CLI exit code 4)."""


class DegenerateProfileError(NumericalError):
    """Every grid point has pooled variance at or below the floor."""


class ZeroSeparationError(NumericalError):
    """Two cluster centers are at SD distance 0, so SD-DBI is undefined."""
