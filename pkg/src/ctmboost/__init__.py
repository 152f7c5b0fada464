"""Boosted conditional transformation models.

Estimate ``P(Y <= v | X = x) = F(sum_j h_j(v | x))`` where each ``h_j`` is a
tensor-product spline in the response and one covariate, fitted by
component-wise gradient boosting on an integrated binary-event loss.
"""

__version__ = "0.1.0"

from .basis import BasisSpec, PenaltySpec, difference_matrix, evaluate_basis, penalty_matrix
from .boost import (
    BoostConfig,
    FitTrace,
    Grid,
    Resampling,
    fit,
    fit_tuned,
    make_grid,
    oob_risk_curve,
    select_mstop,
)
from .data import Dataset
from .learner import TensorLearner, calibrate_lambda, learner_rss, precompute, predict_increment, ridge_fit
from .loss import Link, empirical_risk, loss_value, negative_gradient
from .model import (
    CtmModel,
    DiagnosticsReport,
    deserialize,
    diagnostics,
    model_bootstrap,
    monotonicity_check,
    serialize,
)

__all__ = [
    "BasisSpec",
    "BoostConfig",
    "CtmModel",
    "Dataset",
    "DiagnosticsReport",
    "FitTrace",
    "Grid",
    "Link",
    "PenaltySpec",
    "Resampling",
    "TensorLearner",
    "calibrate_lambda",
    "deserialize",
    "diagnostics",
    "difference_matrix",
    "empirical_risk",
    "evaluate_basis",
    "fit",
    "fit_tuned",
    "learner_rss",
    "loss_value",
    "make_grid",
    "model_bootstrap",
    "monotonicity_check",
    "negative_gradient",
    "oob_risk_curve",
    "penalty_matrix",
    "precompute",
    "predict_increment",
    "ridge_fit",
    "select_mstop",
    "serialize",
]
