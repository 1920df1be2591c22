"""Double machine learning with K-fold cross-fitting and linear nuisance models."""
from __future__ import annotations

import numpy as np

from .. import rng as rngmod
from .linear import solve_least_squares
from .report import DEFAULT_BOOTSTRAP_REPS, EstimateReport, EstimationError, finish

# residual action variance, relative to the raw variance, below which there is no usable variation
DEGENERATE_SHARE = 1e-10


def fold_ids(n: int, folds: int, rng) -> np.ndarray:
    """Balanced random fold labels in ``range(folds)``."""
    spec = rngmod.as_spec(rng)
    order = np.argsort(rngmod.stream(spec.seed, "dml-folds", start=0, stop=n), kind="stable")
    ids = np.empty(n, dtype=np.int64)
    ids[order] = np.arange(n) % folds
    return ids


def _dml(data, action, outcome, covariates, folds, seed):
    a = np.asarray(data[action], dtype=np.float64)
    y = np.asarray(data[outcome], dtype=np.float64)
    n = a.size
    if folds < 2:
        raise EstimationError("cross-fitting needs at least 2 folds")
    if folds > n / 10:
        raise EstimationError(f"{folds} folds need at least {10 * folds} rows, got {n}")
    X = np.column_stack([np.asarray(data[c], dtype=np.float64) for c in covariates]) if covariates else np.empty((n, 0))
    ids = fold_ids(n, folds, seed)
    a_res = np.empty(n)
    y_res = np.empty(n)
    for k in range(folds):
        test = ids == k
        train = ~test
        wa, ca = solve_least_squares(X[train], a[train], covariates)
        wy, cy = solve_least_squares(X[train], y[train], covariates)
        a_res[test] = a[test] - (X[test] @ wa + ca)
        y_res[test] = y[test] - (X[test] @ wy + cy)
    denom = float(a_res @ a_res)
    spread = float(np.sum((a - a.mean()) ** 2))
    if spread == 0.0 or denom <= DEGENERATE_SHARE * spread:
        raise EstimationError(f"{action} is (almost) fully determined by the covariates; no independent action variation is left")
    return float(a_res @ y_res) / denom, {"residual_action_share": denom / spread}


def estimate_dml(data, action, outcome, covariates=(), folds: int = 5,
                 bootstrap_reps=DEFAULT_BOOTSTRAP_REPS, rng=None) -> EstimateReport:
    """Partialling-out estimate ``sum(a_res * y_res) / sum(a_res^2)``.

    Both nuisance regressions (action on covariates, outcome on covariates)
    are fitted on the other folds and evaluated on the held-out fold.
    """
    covariates = list(covariates)
    spec = rngmod.as_spec(rng)
    est, diag = _dml(data, action, outcome, covariates, folds, spec)
    diag["folds"] = folds
    report = EstimateReport("dml", est, None, len(data), diag)
    return finish(report, data, lambda d: _dml(d, action, outcome, covariates, folds, spec)[0], bootstrap_reps, spec.derive("bootstrap"))
