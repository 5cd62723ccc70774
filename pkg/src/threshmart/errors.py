"""Exception types shared across the package."""


class ThreshmartError(Exception):
    """Base class for all package errors."""


class DomainError(ThreshmartError, ValueError):
    """An argument lies outside the domain of the operation."""


class StationarityError(DomainError):
    """Autoregressive coefficient with |rho| >= 1."""


class SingularDesignError(ThreshmartError, ArithmeticError):
    """Design matrix without full column rank.

    ``column`` is the index of the first column found to be (numerically)
    in the span of the preceding ones.
    """

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class DivergenceError(ThreshmartError, ArithmeticError):
    """Iterative fit failed to converge, e.g. under complete separation."""


class UndefinedStatisticError(ThreshmartError, ArithmeticError):
    """A statistic has a zero denominator."""


class IncompletePathError(DomainError):
    """Probability paths without a 0/1 terminal value."""

    def __init__(self, message, series=()):
        super().__init__(message)
        self.series = list(series)


class SchemaError(ThreshmartError, ValueError):
    """Input file does not match the expected layout."""

    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class IllConditionedWarning(UserWarning):
    """Filter inversion met a dropped direction carrying real signal."""
