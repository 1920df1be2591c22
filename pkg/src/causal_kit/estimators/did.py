"""Difference-in-differences."""
from __future__ import annotations

import numpy as np

from .report import DEFAULT_BOOTSTRAP_REPS, EstimateReport, EstimationError, finish


def _did(data, action, y_pre, y_post, treated, control):
    a = np.asarray(data[action], dtype=np.float64)
    pre = np.asarray(data[y_pre], dtype=np.float64)
    post = np.asarray(data[y_post], dtype=np.float64)
    ok = ~(np.isnan(pre) | np.isnan(post))
    t = (a == treated) & ok
    c = (a == control) & ok
    if not t.any() or not c.any():
        raise EstimationError(f"difference-in-differences needs rows in both arms of {action}")
    delta = post - pre
    est = float(delta[t].mean() - delta[c].mean())
    naive = float(post[t].mean() - post[c].mean())
    return est, naive, int(t.sum() + c.sum())


def estimate_did(data, action, y_pre, y_post, treated=1, control=0,
                 bootstrap_reps=DEFAULT_BOOTSTRAP_REPS, rng=None) -> EstimateReport:
    """Mean change ``y_post - y_pre`` among treated minus the same among controls."""
    est, naive, used = _did(data, action, y_pre, y_post, treated, control)
    report = EstimateReport("did", est, None, used, {"naive_post_difference": naive})
    return finish(report, data, lambda d: _did(d, action, y_pre, y_post, treated, control)[0], bootstrap_reps, rng)
