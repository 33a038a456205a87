"""Exception hierarchy shared by every module.

The CLI maps the three families below onto its exit codes.
"""


class CapeError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(CapeError, ValueError):
    """Invalid user configuration (exit code 2)."""


class DataError(CapeError, ValueError):
    """Malformed or inconsistent input data (exit code 3)."""


class NumericalError(CapeError, ArithmeticError):
    """Numerical failure or violated model constraint (exit code 4)."""


class SchemaError(DataError):
    pass


class ContinuityError(DataError):
    def __init__(self, missing, message=None):
        self.missing = missing
        super().__init__(message or f"date gap: month {missing[0]}.{missing[1]:02d} is missing")


class ParseError(DataError):
    def __init__(self, row, column, value, reason="not a number"):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"row {row}, column {column!r}: {value!r} ({reason})")


class RangeError(DataError, IndexError):
    pass


class AlignmentError(DataError):
    pass


class SingularityError(NumericalError):
    pass


class ConstraintError(NumericalError):
    pass


class DegenerateSpectrumError(NumericalError):
    pass
