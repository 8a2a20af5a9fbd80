"""Exception hierarchy shared across the package."""


class RobustGPError(Exception):
    """Base class for all package errors."""


class InputError(RobustGPError, ValueError):
    """Malformed user input (shapes, files, configuration)."""


class DimensionError(InputError):
    def __init__(self, message, axes=None):
        super().__init__(message)
        self.axes = axes


class ParseError(InputError):
    def __init__(self, message, row=None, column=None):
        if row is not None or column is not None:
            message = f"{message} (row {row}, column {column})"
        super().__init__(message)
        self.row = row
        self.column = column


class NumericalError(RobustGPError, ArithmeticError):
    """Base class for failures of the numerical machinery."""


class NotPositiveDefinite(NumericalError):
    def __init__(self, message, last_pivot=None):
        super().__init__(message)
        self.last_pivot = last_pivot


class NumericalDegeneracy(NumericalError):
    pass


class OptimizationFailed(NumericalError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class PursuitFailed(NumericalError):
    pass


class EnumerationBudgetExceeded(RobustGPError):
    pass
