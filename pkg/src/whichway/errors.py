"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration errors exit 2, data
errors exit 3, numerical failures exit 4.
"""


class WhichwayError(Exception):
    """Base class for all package errors."""


class ConfigurationError(WhichwayError):
    """Invalid configuration, geometry, or grid for the requested operation."""

    exit_code = 2


class DataError(WhichwayError):
    """Malformed or missing input data (files, flux series, domains)."""

    exit_code = 3


class NumericalError(WhichwayError):
    """A computation could not produce a meaningful result."""

    exit_code = 4
