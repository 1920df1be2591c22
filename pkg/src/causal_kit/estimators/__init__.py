"""Causal effect estimators; each returns an EstimateReport."""
from .adjustment import (
    UnmatchedError,
    estimate_doubly_robust,
    estimate_ipw,
    estimate_matching,
    estimate_naive,
    estimate_ols,
    estimate_regression_adjustment,
)
from .did import estimate_did
from .dml import estimate_dml
from .iv import estimate_iv_2sls
from .linear import LinearModel, RankDeficiencyError, fit_least_squares
from .models import OutcomeModel, PropensityModel, fit_outcome, fit_propensity
from .rdd import estimate_rdd
from .report import DEFAULT_BOOTSTRAP_REPS, EstimateReport, EstimationError, PositivityError

METHODS = {
    "naive": estimate_naive,
    "ols": estimate_ols,
    "regression": estimate_regression_adjustment,
    "ipw": estimate_ipw,
    "dr": estimate_doubly_robust,
    "matching": estimate_matching,
    "iv": estimate_iv_2sls,
    "did": estimate_did,
    "rdd": estimate_rdd,
    "dml": estimate_dml,
}
