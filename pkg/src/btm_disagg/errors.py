"""Exception hierarchy shared by every module of the toolkit."""


class DisaggError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(DisaggError, ValueError):
    pass


class NonFiniteValue(DisaggError, ValueError):
    def __init__(self, row, col, message=None):
        self.row = row
        self.col = col
        super().__init__(message or f"non-finite value at ({row}, {col})")


class FullyUnknownColumn(DisaggError, ValueError):
    def __init__(self, col):
        self.col = col
        super().__init__(f"label column {col} has no known entry")


class InvalidConfig(DisaggError, ValueError):
    pass


class InvalidCase(DisaggError, ValueError):
    pass


class FormatError(DisaggError, ValueError):
    """Malformed file content; ``row``/``col`` locate the first violation."""

    def __init__(self, path, row, col, message):
        self.path = str(path)
        self.row = row
        self.col = col
        super().__init__(f"{path}: row {row}, column {col}: {message}")


class StepDiverged(DisaggError, RuntimeError):
    pass


class EmptyCoefficients(DisaggError, ValueError):
    pass


class IndexOutOfRange(DisaggError, IndexError):
    pass


class NumericalUnderflow(DisaggError, FloatingPointError):
    pass


class EmptyPosterior(DisaggError, ValueError):
    pass


class NonFinite(DisaggError, ValueError):
    pass


class NegativeVariance(DisaggError, ValueError):
    pass


class ZeroTruth(DisaggError, ValueError):
    pass


class NonPositiveUncertainty(DisaggError, ValueError):
    pass


class TraceMismatch(DisaggError, ArithmeticError):
    """Singular-value sum of a PSD covariance disagrees with its trace."""
