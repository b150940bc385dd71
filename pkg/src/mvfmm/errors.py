"""Exception hierarchy shared across the package.

Exit codes follow the CLI contract: 2 for configuration problems, 3 for
input-data problems, 4 for numerical failures.
"""


class MvfmmError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigurationError(MvfmmError):
    """Invalid configuration or option value."""

    exit_code = 2


class SchemaError(MvfmmError):
    """Input file does not match the expected schema."""

    exit_code = 3


class DataError(MvfmmError):
    """Input data violates a precondition (ordering, grouping, linkage)."""

    exit_code = 3


class LinkageError(DataError):
    """Curve and covariate tables cannot be joined."""


class NumericalError(MvfmmError):
    """A numerical computation failed (rank deficiency, singular metric, ...)."""

    exit_code = 4
