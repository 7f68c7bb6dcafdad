"""Closed-form minimum distance estimation for balanced panel regressions."""

__version__ = "0.1.0"

from .estimators import (
    EstimateReport,
    VarianceComponents,
    distance_closed_form,
    distance_gradient,
    estimate,
    estimate_md,
    estimate_md_within,
    estimate_ols,
    estimate_random_effects,
    estimate_variance_components,
    estimate_within,
)
from .exceptions import (
    BoxTooSmallError,
    DegeneratePanelError,
    NumericalError,
    PanelError,
    ShapeError,
    SimulationError,
    SingularCovarianceError,
    SingularMatrixError,
    UnbalancedPanelError,
)
from .inference import covariance_beta, normality_diagnostic, standardized_deviation, trace_condition
from .montecarlo import DistributionSpec, SimulationConfig, SimulationTable, run_simulation
from .oracle import distance_oracle, grid_minimize, single_integral
from .panel import (
    CovarianceModel,
    PanelDataset,
    build_omega,
    read_panel_csv,
    residuals,
    row_index,
    within_transform,
)
from .weights import WeightMatrix, d_ols_equivalent, d_omega_aligned, d_omega_eigen, validate_d
