"""Exception hierarchy shared by all pamlab modules."""


class PamLabError(Exception):
    """Base class for all pamlab errors."""


class QuadratureFailure(PamLabError):
    """Adaptive quadrature exceeded its refinement budget."""


class DivergentAtZero(PamLabError):
    """Spectral density is infinite at the requested radius r=0."""


class NotIntegrable(PamLabError):
    """Requested integral has no finite value (e.g. pointwise white-noise correlation)."""


class InvalidDimension(PamLabError):
    pass


class InvalidAlpha(PamLabError):
    pass


class NonpositiveTime(PamLabError):
    pass


class GridMismatch(PamLabError):
    pass


class DivergentDensityAtNode(PamLabError):
    """Spectral density is infinite at a dual lattice node."""


class UnsupportedCoefficient(PamLabError):
    pass


class InconsistentSeed(PamLabError):
    pass


class MissingTime(PamLabError):
    pass


class NonpositiveMean(PamLabError):
    pass


class PreconditionViolated(PamLabError):
    pass


class WeakDisorderViolated(PamLabError):
    pass


class ThresholdViolated(PamLabError):
    pass


class BudgetExceeded(PamLabError):
    pass


class RejectionBudgetExceeded(PamLabError):
    pass


class MismatchedGrids(PamLabError):
    pass


class ParseError(PamLabError):
    """Config text could not be parsed; carries line/column info."""

    def __init__(self, message, line=None, column=None):
        super().__init__(message)
        self.line = line
        self.column = column


class ValidationError(PamLabError):
    """Config parsed but a field failed validation; carries the field name."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
