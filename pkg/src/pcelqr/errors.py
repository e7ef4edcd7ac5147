"""Exception hierarchy shared by all pcelqr modules."""


class PcelqrError(Exception):
    """Base class for every error raised by pcelqr."""


class DimensionError(PcelqrError, ValueError):
    """Matrix or coefficient shapes are inconsistent."""


class InvalidCostError(PcelqrError, ValueError):
    """Cost weights violate symmetry / definiteness requirements."""


class ScenarioError(PcelqrError, ValueError):
    """A scenario description failed validation."""


class NumericalError(PcelqrError, ArithmeticError):
    """Base class for failures of a numerical procedure."""


class NotConvergedError(NumericalError):
    """An iteration exhausted its budget without meeting its tolerance."""


class UnstableError(NumericalError):
    """A matrix required to be Schur stable has spectral radius >= 1."""


class DefectiveMatrixError(NumericalError):
    """The eigenvector matrix is numerically singular (non-diagonalizable input)."""
