"""Sharp regression discontinuity with local polynomial fits."""
from __future__ import annotations

import numpy as np

from .linear import solve_least_squares
from .report import DEFAULT_BOOTSTRAP_REPS, EstimateReport, EstimationError, finish


def _side_limit(x, y, degree):
    # polynomial in (x - threshold); the intercept is the limit at the threshold
    X = np.column_stack([x ** k for k in range(1, degree + 1)])
    _, intercept = solve_least_squares(X, y, [f"x^{k}" for k in range(1, degree + 1)])
    return intercept


def _rdd(data, running, outcome, threshold, bandwidth, degree):
    x = np.asarray(data[running], dtype=np.float64) - threshold
    y = np.asarray(data[outcome], dtype=np.float64)
    ok = ~np.isnan(y) & (np.abs(x) <= bandwidth)
    right = ok & (x >= 0)
    left = ok & (x < 0)
    need = degree + 2
    for name, side in (("left", left), ("right", right)):
        if side.sum() < need:
            raise EstimationError(
                f"{name} of the threshold has {int(side.sum())} point(s) within the bandwidth; degree {degree} needs at least {need}"
            )
    hi = _side_limit(x[right], y[right], degree)
    lo = _side_limit(x[left], y[left], degree)
    return hi - lo, {"n_left": int(left.sum()), "n_right": int(right.sum()), "limit_left": lo, "limit_right": hi}


def estimate_rdd(data, running, outcome, threshold: float = 0.0, bandwidth: float = 0.5, degree: int = 1,
                 bootstrap_reps=DEFAULT_BOOTSTRAP_REPS, rng=None) -> EstimateReport:
    """Jump at ``threshold`` of separate degree-``degree`` fits on each side.

    Treatment is ``running >= threshold``; only rows within ``bandwidth`` of
    the threshold are used.
    """
    if degree not in (1, 2):
        raise EstimationError("degree must be 1 or 2")
    if not bandwidth > 0:
        raise EstimationError("bandwidth must be > 0")
    est, diag = _rdd(data, running, outcome, threshold, bandwidth, degree)
    diag.update({"threshold": threshold, "bandwidth": bandwidth, "degree": degree})
    report = EstimateReport("rdd", est, None, diag["n_left"] + diag["n_right"], diag)
    return finish(report, data, lambda d: _rdd(d, running, outcome, threshold, bandwidth, degree)[0], bootstrap_reps, rng)
