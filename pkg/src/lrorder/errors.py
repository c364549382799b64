"""Exception hierarchy shared by every module of the package."""


class LROError(Exception):
    """Base class for all errors raised by :mod:`lrorder`."""


class InvalidDimensionError(LROError, ValueError):
    """A table or matrix has an unsupported shape (e.g. ``J < 2``)."""


class TableFormatError(LROError, ValueError):
    """Malformed table input (ragged rows, negative or non-integer cells).

    ``line`` and ``column`` locate the offending cell when known (1-based).
    """

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class DomainError(LROError, ValueError):
    """An argument lies outside the domain of the requested map."""


class SaturationError(LROError, FloatingPointError):
    """A parameter vector is too extreme to be represented as probabilities."""


class DegenerateTableError(LROError, ValueError):
    """The data carry no information for the requested procedure."""


class ConvergenceError(LROError, RuntimeError):
    """A solver did not reach its convergence criterion."""


class OracleInconsistencyError(LROError, RuntimeError):
    """No candidate of the active-set enumeration passed both KKT screens."""


class NumericalRankError(LROError, ArithmeticError):
    """A covariance submatrix needed for the weights is singular."""


class UndefinedEfficiencyError(LROError, ZeroDivisionError):
    """The baseline of a relative efficiency has zero power gain."""
