"""Exception hierarchy shared by all panelmd modules."""

from __future__ import annotations


class PanelError(ValueError):
    """Base class for invalid input to a panelmd routine."""


class ShapeError(PanelError):
    """Array dimensions disagree with the panel layout."""


class UnbalancedPanelError(PanelError):
    """Some (unit, time) pair is missing or duplicated."""


class DegeneratePanelError(PanelError):
    """The panel has too few periods or degrees of freedom for the operation."""


class NumericalError(PanelError):
    """A matrix that must be invertible is numerically singular."""


class SingularMatrixError(NumericalError):
    """Normal equations or a Gram matrix are rank deficient."""


class SingularCovarianceError(NumericalError):
    """A covariance matrix is not positive definite where it must be."""


class BoxTooSmallError(PanelError):
    """The grid search minimum landed on the boundary of the search box."""


class SimulationError(RuntimeError):
    """Too many replications failed for the aggregate to be trusted."""
