"""Exception hierarchy shared by all rcls modules.

The CLI maps these onto exit codes: usage/parameter problems, data or file
problems, and numerical failures are distinguishable by type.
"""


class RclsError(Exception):
    """Base class for all rcls errors."""


class DimensionError(RclsError):
    """Operands have incompatible or empty shapes."""


class ParameterError(RclsError):
    """A scalar parameter is outside its admissible range."""


class NormalizationError(RclsError):
    """Dictionary columns are not unit-normalized where required."""


class NumericalError(RclsError):
    """A numerical procedure failed to meet its accuracy contract."""


class SingularMatrixError(NumericalError):
    """Symmetric factorization hit a non-positive pivot.

    ``pivot`` is the 0-based index of the failing pivot.
    """

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class DegenerateFusionError(NumericalError):
    """Sparse and dense coefficients cancel exactly; fusion is undefined."""


class DegenerateDecisionError(NumericalError):
    """No class can win (e.g. every class has a zero coefficient block)."""


class DatasetError(RclsError):
    """Labels or class structure violate dataset invariants."""


class DataError(RclsError):
    """Feature values violate data invariants (zero column, non-finite)."""


class ParseError(RclsError):
    """Text input could not be parsed. ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line


class FormatError(RclsError):
    """Binary input violates the RCLS format. ``offset`` is the byte offset."""

    def __init__(self, message, offset=None):
        super().__init__(message)
        self.offset = offset


class ConfigError(RclsError):
    """Experiment configuration is invalid or inconsistent."""


class ConvergenceWarning(UserWarning):
    """An iterative solver stopped before meeting its target tolerance."""
