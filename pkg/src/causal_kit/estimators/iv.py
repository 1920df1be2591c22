"""Instrumental-variable estimation by two-stage least squares."""
from __future__ import annotations

import math

import numpy as np

from .linear import RankDeficiencyError, solve_least_squares
from .report import DEFAULT_BOOTSTRAP_REPS, EstimateReport, EstimationError, finish

WEAK_INSTRUMENT_R2 = 0.01


def _r2(target, fitted) -> float:
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    if ss_tot == 0.0:
        return math.nan
    return 1.0 - float(np.sum((target - fitted) ** 2)) / ss_tot


def _two_stage(data, action, outcome, instrument, impute_instrument):
    a = np.asarray(data[action], dtype=np.float64)
    y = np.asarray(data[outcome], dtype=np.float64)
    z = np.asarray(data[instrument], dtype=np.float64)
    has_z = ~np.isnan(z)
    if impute_instrument and not has_z.all():
        # third regression: predict the instrument from the action for rows that lack it
        (gz,), gz0 = solve_least_squares(a[has_z, None], z[has_z], [action])
        z = np.where(has_z, z, gz * a + gz0)
        used = np.ones_like(has_z)
    else:
        used = has_z
    if not used.any():
        raise EstimationError(f"no rows with an observed instrument {instrument}")
    a, y, z = a[used], y[used], z[used]
    try:
        (psi,), c1 = solve_least_squares(z[:, None], a, [instrument])
    except RankDeficiencyError:
        return math.nan, {"first_stage_slope": math.nan, "first_stage_r2": 0.0}, int(used.sum()), True
    a_hat = psi * z + c1
    r2 = _r2(a, a_hat)
    diag = {"first_stage_slope": psi, "first_stage_intercept": c1, "first_stage_r2": r2}
    n = a.size
    if n > 2 and r2 == r2 and r2 < 1.0:
        diag["first_stage_f"] = r2 / (1.0 - r2) * (n - 2)
    try:
        (alpha,), c2 = solve_least_squares(a_hat[:, None], y, ["fitted_" + action])
    except RankDeficiencyError:
        return math.nan, diag, int(used.sum()), True
    diag["second_stage_intercept"] = c2
    return float(alpha), diag, int(used.sum()), False


def estimate_iv_2sls(data, action, outcome, instrument, weak_r2: float = WEAK_INSTRUMENT_R2,
                     impute_instrument: bool = False, bootstrap_reps=DEFAULT_BOOTSTRAP_REPS, rng=None) -> EstimateReport:
    """Two-stage least squares: regress action on instrument, then outcome on the fitted action.

    The estimate is the second-stage slope. A first-stage R^2 below ``weak_r2``
    adds a weak-instrument warning; a constant instrument yields NaN.
    With ``impute_instrument`` rows whose instrument is missing get it
    predicted from the action by a third regression instead of being dropped.
    """
    est, diag, used, degenerate = _two_stage(data, action, outcome, instrument, impute_instrument)
    warnings = []
    if degenerate:
        warnings.append(f"instrument {instrument} does not vary (or does not move {action}); the estimate is unreliable")
    elif not diag["first_stage_r2"] >= weak_r2:
        warnings.append(
            f"weak instrument: first-stage R^2 = {diag['first_stage_r2']:.4g} is below {weak_r2:g}; the estimate is unreliable"
        )
    diag["weak_instrument"] = bool(warnings)
    diag["imputed_instrument"] = bool(impute_instrument)
    report = EstimateReport("iv", est, None, used, diag, warnings)
    if degenerate:
        return report
    return finish(report, data, lambda d: _two_stage(d, action, outcome, instrument, impute_instrument)[0], bootstrap_reps, rng)
