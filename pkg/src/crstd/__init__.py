"""Cause-specific flexible parametric survival models and standardized
causal estimands under competing events.

The package fits Royston-Parmar models on the log cumulative hazard scale
(restricted cubic splines of log time, optionally with time-dependent
covariate effects) and standardizes their predictions over a study
population to obtain counterfactual contrasts: all-cause and net failure
probabilities, cause-specific cumulative incidence, restricted mean
failure time, and separable direct/indirect effects, all with
delta-method confidence intervals.
"""

__version__ = "0.1.0"

from .dataset import (
    SurvivalFrame,
    SurvivalDeclaration,
    load_csv,
    prepare_prostate,
    declare_survival,
)
from .spline import KnotVector, SplineBasis, centile_knots, rcs_eval, rcs_deriv, orthogonalize
from .fpm import ModelSpec, FpmFit, log_likelihood, fit, predict, save_fit, load_fit
from .nonparam import StepFunction, kaplan_meier_failure, aalen_johansen_cif
from .standardize import (
    AtScenario,
    StandardizeRequest,
    StandardizedSeries,
    standardized_failure,
    standardized_cif,
    standardized_rmft,
    separable_effects,
    contrast,
    delta_method,
    gauss_legendre,
)
from .analysis import run_recipe, RECIPES

__all__ = [
    "__version__",
    "SurvivalFrame",
    "SurvivalDeclaration",
    "load_csv",
    "prepare_prostate",
    "declare_survival",
    "KnotVector",
    "SplineBasis",
    "centile_knots",
    "rcs_eval",
    "rcs_deriv",
    "orthogonalize",
    "ModelSpec",
    "FpmFit",
    "log_likelihood",
    "fit",
    "predict",
    "save_fit",
    "load_fit",
    "StepFunction",
    "kaplan_meier_failure",
    "aalen_johansen_cif",
    "AtScenario",
    "StandardizeRequest",
    "StandardizedSeries",
    "standardized_failure",
    "standardized_cif",
    "standardized_rmft",
    "separable_effects",
    "contrast",
    "delta_method",
    "gauss_legendre",
    "run_recipe",
    "RECIPES",
]
