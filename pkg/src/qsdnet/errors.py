"""Exception types raised across the package."""


class QSDError(Exception):
    """Base class for all package errors."""


class ValidationError(QSDError, ValueError):
    """A value violates a type invariant (normalization, unitarity, priors...)."""


class SingularMatrixError(QSDError, ValueError):
    """Matrix has no usable unitary factor."""


class DegenerateInputError(QSDError, ValueError):
    """Input carries no usable information (zero mass, identical states)."""


class ArityError(QSDError, ValueError):
    """Wrong number of items (hypotheses, records)."""


class ShapeError(QSDError, ValueError):
    """Cell structures of two records or tables do not match."""


class ContradictoryEvidenceError(QSDError, ValueError):
    """Every hypothesis assigns zero likelihood to the observed counts."""


class CapacityError(QSDError, RuntimeError):
    """Exact enumeration would be too large; use Monte Carlo mode instead."""


class NoEventsInWindowError(QSDError, RuntimeError):
    """Post-selection kept no records."""
