"""robustloc: score-driven robust location filtering for heavy-tailed series.

Multivariate Student-t observation driven location models: simulation,
filtering, analytic-derivative maximum likelihood, invertibility checks,
forecasting and diagnostics.
"""

from .params import (
    ModelParams,
    PackedTheta,
    AdmissibilityReport,
    pack,
    unpack,
    theta_dim,
    vech,
    unvech,
    duplication_matrix,
    validate,
)
from .filtering import (
    ScoreTriple,
    FilterOutput,
    score_weight,
    score_bound,
    loglik_obs,
    filter_pass,
    gaussian_filter_pass,
    u_moment,
    u_covariance,
)
from .deriv import (
    DerivPaths,
    filter_with_derivatives,
    analytic_score,
    information_static,
    conditional_information,
    opg_matrix,
)
from .hessian import (
    Deriv2Paths,
    filter_with_second_derivatives,
    observed_hessian,
)
from .estimate import (
    EstimationError,
    EstimationResult,
    fisher_scoring,
    fit,
    init_gaussian_qml,
    init_nu,
    standard_errors,
    empirical_invertibility,
)
from .stability import (
    RegionScan,
    spectral_radius,
    contraction_mc,
    region_scan,
)
from .simulate import (
    SimOutput,
    McReport,
    simulate,
    mc_study,
    draw_standard_t,
)
from .diagnostics import (
    IrfResult,
    forecast,
    portmanteau,
    information_criteria,
    newey_west,
    local_projection_irf,
    model_diagnostics,
)

__version__ = "0.1.0"

__all__ = [
    "ModelParams",
    "PackedTheta",
    "AdmissibilityReport",
    "pack",
    "unpack",
    "theta_dim",
    "vech",
    "unvech",
    "duplication_matrix",
    "validate",
    "ScoreTriple",
    "FilterOutput",
    "score_weight",
    "score_bound",
    "loglik_obs",
    "filter_pass",
    "gaussian_filter_pass",
    "u_moment",
    "u_covariance",
    "DerivPaths",
    "filter_with_derivatives",
    "analytic_score",
    "information_static",
    "conditional_information",
    "opg_matrix",
    "Deriv2Paths",
    "filter_with_second_derivatives",
    "observed_hessian",
    "EstimationError",
    "EstimationResult",
    "fisher_scoring",
    "fit",
    "init_gaussian_qml",
    "init_nu",
    "standard_errors",
    "empirical_invertibility",
    "RegionScan",
    "spectral_radius",
    "contraction_mc",
    "region_scan",
    "SimOutput",
    "McReport",
    "simulate",
    "mc_study",
    "draw_standard_t",
    "IrfResult",
    "forecast",
    "portmanteau",
    "information_criteria",
    "newey_west",
    "local_projection_irf",
    "model_diagnostics",
    "__version__",
]
