"""Increasing-order U-statistics for expectations of linear processes.

Estimates ``E[h(Y_0)]`` for a causal invertible linear process
``Y_t = X_t + sum_s delta_s(theta) X_{t-s}`` from the recovered innovations,
with a correction for the known mean-zero constraint on the innovations and
plug-in parameter estimation.
"""

__version__ = "0.1.0"

from .constrained import ConstraintSpec, a_star_closed_form, a_star_hat, constrained_estimate
from .functions import SmoothFunction, get_function
from .innovations import InnovationSpec, ScoreUnavailable
from .plugin import (
    EstimateReport,
    estimate_theta,
    least_squares_ar1,
    one_step_efficient_ar1,
    plugin_se,
    substitution_estimate,
)
from .process import (
    CoefficientModel,
    ProcessPath,
    ar1,
    arma11,
    custom_model,
    get_model,
    ma1,
    recover_innovations,
    simulate,
    xi_vectors,
)
from ._validation import DomainError
from .ustat import (
    RateConditionWarning,
    UStatConfig,
    UStatResult,
    choose_m,
    influence_h_star,
    kernel,
    ustat,
    ustat_exact,
    ustat_incomplete,
)

__all__ = [
    "ConstraintSpec", "a_star_closed_form", "a_star_hat", "constrained_estimate",
    "SmoothFunction", "get_function", "InnovationSpec", "ScoreUnavailable",
    "EstimateReport", "estimate_theta", "least_squares_ar1", "one_step_efficient_ar1",
    "plugin_se", "substitution_estimate", "CoefficientModel", "ProcessPath", "ar1", "arma11",
    "custom_model", "get_model", "ma1", "recover_innovations", "simulate", "xi_vectors",
    "DomainError", "RateConditionWarning", "UStatConfig", "UStatResult", "choose_m",
    "influence_h_star", "kernel", "ustat", "ustat_exact", "ustat_incomplete",
]
