"""Robust weighted M-estimators for functional logistic regression."""
from .diagnostics import (
    ResidualReport,
    deviance_residuals,
    diagnose,
    fhat_D,
    flag_outliers,
    pi_p_hat,
    pi_tilde_hat,
    predict_probs,
)
from .fit import (
    CollinearityError,
    FitConfig,
    FitError,
    FitResult,
    SeparationError,
    fit_fixed_k,
    rbic,
    select_k,
)
from .funcbasis import (
    BasisMatrix,
    CurveSet,
    Grid,
    LabeledSample,
    bspline_design,
    evaluate_slope,
    fourier_design,
    project,
)
from .loss import LossSpec
from .simlab import GeneratorSpec, ScenarioSpec, run_study, standard_estimators
from .weights import WeightSpec, compute_weights

__version__ = "0.1.0"

__all__ = [
    "ResidualReport",
    "deviance_residuals",
    "diagnose",
    "fhat_D",
    "flag_outliers",
    "pi_p_hat",
    "pi_tilde_hat",
    "predict_probs",
    "CollinearityError",
    "FitConfig",
    "FitError",
    "FitResult",
    "SeparationError",
    "fit_fixed_k",
    "rbic",
    "select_k",
    "BasisMatrix",
    "CurveSet",
    "Grid",
    "LabeledSample",
    "bspline_design",
    "evaluate_slope",
    "fourier_design",
    "project",
    "LossSpec",
    "GeneratorSpec",
    "ScenarioSpec",
    "run_study",
    "standard_estimators",
    "WeightSpec",
    "compute_weights",
]
