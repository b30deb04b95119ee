"""Exception hierarchy.

Every error raised on purpose by this package derives from :class:`CSMTError`.
The three families below map onto distinct CLI exit codes.
"""


class CSMTError(Exception):
    """Base class for package errors."""

    exit_code = 1


class ConfigError(CSMTError, ValueError):
    """Invalid configuration, flag value, or experiment description."""

    exit_code = 2


class DomainError(CSMTError, ValueError):
    """Argument outside the domain of a function."""

    exit_code = 2


class DataError(CSMTError, ValueError):
    """Input data cannot be used (missing columns, bad cells, too few rows)."""

    exit_code = 3


class MissingColumnError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"non-numeric cell at row {row}, column {column!r}: {value!r}")


class InsufficientDataError(DataError):
    pass


class NumericalError(CSMTError, ArithmeticError):
    """A fit or statistic is numerically degenerate."""

    exit_code = 4


class SingularDesignError(NumericalError):
    pass


class DegenerateFitError(NumericalError):
    pass


class DegenerateStatisticError(NumericalError):
    pass
