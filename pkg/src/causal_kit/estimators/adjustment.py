"""Effect estimators that adjust for observed covariates.

All of them compare an action column taking the values ``treated`` and
``control``. Rows whose outcome is NaN are treated as missing outcomes: they
still count when fitting propensities but not when averaging outcomes.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree

from .. import rng as rngmod
from ..sampling import Dataset
from .linear import fit_least_squares
from .models import (
    DEFAULT_CLIP,
    OutcomeModel,
    PropensityModel,
    cell_keys,
    check_binary,
    fit_outcome,
    fit_propensity,
)
from .report import DEFAULT_BOOTSTRAP_REPS, EstimateReport, EstimationError, PositivityError, finish

# share of rows at the clip floor above which IPW warns about variance
HIGH_VARIANCE_SHARE = 0.05


class UnmatchedError(EstimationError):
    def __init__(self, cells):
        self.cells = list(cells)
        shown = "; ".join(_fmt_cell(c) for c in self.cells[:10])
        more = f" and {len(self.cells) - 10} more" if len(self.cells) > 10 else ""
        super().__init__(f"no match for some arm in {len(self.cells)} covariate cell(s): {shown}{more}")


def _fmt_cell(cell) -> str:
    if isinstance(cell, dict):
        return ", ".join(f"{k}={v:g}" for k, v in cell.items())
    return "(" + ", ".join(f"{v:g}" for v in cell) + ")"


def _arms(data, action, treated, control):
    a = np.asarray(data[action], dtype=np.float64)
    for arm in (treated, control):
        if not np.any(a == float(arm)):
            raise PositivityError(f"no rows with {action}={float(arm):g}; the effect is not identified")
    return a


def _observed(data, outcome) -> np.ndarray:
    y = np.asarray(data[outcome], dtype=np.float64)
    return y, ~np.isnan(y)


# -- naive / ols -------------------------------------------------------------


def _naive(data, action, outcome, treated, control):
    a = _arms(data, action, treated, control)
    y, seen = _observed(data, outcome)
    t = (a == treated) & seen
    c = (a == control) & seen
    if not t.any() or not c.any():
        raise PositivityError("an arm has no observed outcomes")
    return float(y[t].mean() - y[c].mean()), int(t.sum() + c.sum())


def estimate_naive(data, action, outcome, treated=1, control=0, bootstrap_reps=DEFAULT_BOOTSTRAP_REPS, rng=None) -> EstimateReport:
    """Difference of arm means with no adjustment."""
    est, used = _naive(data, action, outcome, treated, control)
    report = EstimateReport("naive", est, None, used)
    return finish(report, data, lambda d: _naive(d, action, outcome, treated, control)[0], bootstrap_reps, rng)


def _ols(data, action, outcome, covariates):
    y, seen = _observed(data, outcome)
    rows = np.flatnonzero(seen)
    cols = {c: np.asarray(data[c], dtype=np.float64)[rows] for c in [action, *covariates, outcome]}
    model = fit_least_squares(cols, outcome, [action, *covariates])
    return model, rows.size


def estimate_ols(data, action, outcome, covariates=(), bootstrap_reps=DEFAULT_BOOTSTRAP_REPS, rng=None) -> EstimateReport:
    """Coefficient of the action in a least-squares fit of outcome on action and covariates."""
    covariates = list(covariates)
    model, used = _ols(data, action, outcome, covariates)
    report = EstimateReport("ols", model.weights[action], None, used, {"intercept": model.intercept, "coefficients": dict(model.weights)})
    return finish(report, data, lambda d: _ols(d, action, outcome, covariates)[0].weights[action], bootstrap_reps, rng)


# -- regression adjustment ---------------------------------------------------


def _regression_adjustment(data, action, outcome, covariates, kind, treated, control):
    _arms(data, action, treated, control)
    model = fit_outcome(data, action, outcome, covariates, kind, arms=(treated, control))
    warnings = []
    keep = np.ones(len(data), dtype=bool)
    missing = model.missing_cells(data, (treated, control))
    if missing:
        warnings.append(
            "positivity: covariate cell(s) lacking an arm were left out of the average: "
            + "; ".join(_fmt_cell(dict(zip(covariates, c))) for c in missing[:10])
            + (f" and {len(missing) - 10} more" if len(missing) > 10 else "")
        )
        bad = set(missing)
        keep = np.array([k not in bad for k in cell_keys(data, covariates)], dtype=bool)
        if not keep.any():
            raise PositivityError("no covariate cell contains both arms")
    sub = data.take(np.flatnonzero(keep)) if not keep.all() else data
    diff = model.predict(sub, treated) - model.predict(sub, control)
    return float(diff.mean()), int(keep.sum()), warnings, missing


def estimate_regression_adjustment(data, action, outcome, covariates=(), outcome_model: str = "table",
                                   treated=1, control=0, bootstrap_reps=DEFAULT_BOOTSTRAP_REPS, rng=None) -> EstimateReport:
    """Average over the empirical covariates of the per-arm outcome-model difference.

    Raises
    ------
    PositivityError
        When one arm never occurs in the data.
    """
    covariates = list(covariates)
    est, used, warnings, missing = _regression_adjustment(data, action, outcome, covariates, outcome_model, treated, control)
    report = EstimateReport(
        "regression", est, None, used,
        {"outcome_model": outcome_model, "cells_without_both_arms": len(missing)}, warnings,
    )
    stat = lambda d: _regression_adjustment(d, action, outcome, covariates, outcome_model, treated, control)[0]  # noqa: E731
    return finish(report, data, stat, bootstrap_reps, rng)


# -- IPW ---------------------------------------------------------------------


def _weights(data, weights):
    if weights is None:
        return np.ones(len(data))
    w = np.asarray(data[weights], dtype=np.float64) if isinstance(weights, str) else np.asarray(weights, dtype=np.float64)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise EstimationError("row weights must be finite and nonnegative")
    return w


def _ipw(data, action, outcome, propensity, treated, control, normalize, weights):
    a = _arms(data, action, treated, control)
    check_binary(a, action, treated, control)
    y, seen = _observed(data, outcome)
    w = _weights(data, weights)
    p = propensity.predict(data)
    t = (a == treated) & seen
    c = (a == control) & seen
    ws = w * seen
    wt = np.where(t, w / p, 0.0)
    wc = np.where(c, w / (1.0 - p), 0.0)
    yz = np.where(seen, y, 0.0)
    if normalize:
        arm1 = float(np.sum(wt * yz) / np.sum(wt))
        arm0 = float(np.sum(wc * yz) / np.sum(wc))
    else:
        total = float(np.sum(ws))
        arm1 = float(np.sum(wt * yz) / total)
        arm0 = float(np.sum(wc * yz) / total)
    at_clip = np.isclose(p, propensity.clip) | np.isclose(p, 1.0 - propensity.clip)
    used_w = np.concatenate([(w / p)[t], (w / (1.0 - p))[c]])
    diag = {
        "arm_treated": arm1,
        "arm_control": arm0,
        "min_weight": float(used_w.min()) if used_w.size else math.nan,
        "max_weight": float(used_w.max()) if used_w.size else math.nan,
        "min_propensity": float(p.min()) if p.size else math.nan,
        "max_propensity": float(p.max()) if p.size else math.nan,
        "clipped_share": float(at_clip.mean()) if p.size else 0.0,
        "normalized": bool(normalize),
    }
    return arm1 - arm0, int(seen.sum()), diag


def estimate_ipw(data, action, outcome, propensity: PropensityModel | None = None, covariates=(),
                 propensity_kind: str = "table", clip: float = DEFAULT_CLIP, normalize: bool = False,
                 weights=None, treated=1, control=0, bootstrap_reps=DEFAULT_BOOTSTRAP_REPS, rng=None) -> EstimateReport:
    """Inverse probability weighting.

    Each arm mean is ``sum(w * 1(a = arm) * y / p(arm | x)) / sum(w)`` over rows
    with an observed outcome; ``normalize=True`` divides by the summed inverse
    weights of that arm instead. When ``propensity`` is None it is fitted on
    every row, including rows whose outcome is missing.
    """
    covariates = list(covariates)
    fitted = propensity is None
    if fitted:
        propensity = fit_propensity(data, action, covariates, propensity_kind, clip, treated=treated, control=control)
    est, used, diag = _ipw(data, action, outcome, propensity, treated, control, normalize, weights)
    diag["propensity_kind"] = propensity.kind
    warnings = list(propensity.warnings)
    if diag["clipped_share"] > HIGH_VARIANCE_SHARE:
        warnings.append(
            f"{diag['clipped_share']:.1%} of rows have propensity at the clip boundary {propensity.clip:g}; the estimate may have high variance"
        )
    report = EstimateReport("ipw", est, None, used, diag, warnings)

    def stat(d):
        model = fit_propensity(d, action, covariates, propensity_kind, clip, treated=treated, control=control) if fitted else propensity
        return _ipw(d, action, outcome, model, treated, control, normalize, weights if not isinstance(weights, np.ndarray) else None)[0]

    return finish(report, data, stat, bootstrap_reps, rng)


# -- doubly robust -----------------------------------------------------------


def _dr(data, action, outcome, outcome_model, propensity, treated, control, weights):
    a = _arms(data, action, treated, control)
    check_binary(a, action, treated, control)
    y, seen = _observed(data, outcome)
    w = _weights(data, weights) * seen
    p = propensity.predict(data)
    m1 = outcome_model.predict(data, treated)
    m0 = outcome_model.predict(data, control)
    if np.any(np.isnan(m1[seen])) or np.any(np.isnan(m0[seen])):
        raise PositivityError("the outcome model has no prediction for some covariate cell and arm")
    yz = np.where(seen, y, 0.0)
    m1 = np.where(seen, m1, 0.0)
    m0 = np.where(seen, m0, 0.0)
    t = (a == treated).astype(np.float64)
    c = (a == control).astype(np.float64)
    total = float(np.sum(w))
    arm1 = float(np.sum(w * (m1 + t * (yz - m1) / p)) / total)
    arm0 = float(np.sum(w * (m0 + c * (yz - m0) / (1.0 - p))) / total)
    return arm1 - arm0, int(seen.sum()), {"arm_treated": arm1, "arm_control": arm0, "min_propensity": float(p.min())}


def estimate_doubly_robust(data, action, outcome, covariates=(), outcome_model: OutcomeModel | str = "table",
                           propensity: PropensityModel | str = "table", clip: float = DEFAULT_CLIP, weights=None,
                           treated=1, control=0, bootstrap_reps=DEFAULT_BOOTSTRAP_REPS, rng=None) -> EstimateReport:
    """Augmented IPW: outcome-model prediction plus inverse-weighted residual.

    Each arm mean is ``sum(w * (m(arm, x) + 1(a = arm) * (y - m(arm, x)) / p(arm | x))) / sum(w)``;
    it stays consistent when either the outcome model or the propensity is right.
    Models given as strings are fitted on ``data``.
    """
    covariates = list(covariates)
    fit_m = isinstance(outcome_model, str)
    fit_p = isinstance(propensity, str)
    m_kind, p_kind = outcome_model, propensity

    def models(d):
        m = fit_outcome(d, action, outcome, covariates, m_kind, arms=(treated, control)) if fit_m else outcome_model
        p = fit_propensity(d, action, covariates, p_kind, clip, treated=treated, control=control) if fit_p else propensity
        return m, p

    m, p = models(data)
    est, used, diag = _dr(data, action, outcome, m, p, treated, control, weights)
    diag.update({"outcome_model": m.kind, "propensity_kind": p.kind})
    report = EstimateReport("dr", est, None, used, diag, list(p.warnings))

    def stat(d):
        mm, pp = models(d)
        return _dr(d, action, outcome, mm, pp, treated, control, weights if isinstance(weights, str) else None)[0]

    return finish(report, data, stat, bootstrap_reps, rng)


# -- matching ----------------------------------------------------------------

_METRICS = {"euclidean": 2.0, "chebyshev": math.inf, "cityblock": 1.0, "manhattan": 1.0}


def _parse_ratio(ratio, treated, control) -> dict:
    if isinstance(ratio, dict):
        out = {float(k): int(v) for k, v in ratio.items()}
    else:
        r_t, r_c = ratio
        out = {float(treated): int(r_t), float(control): int(r_c)}
    if set(out) != {float(treated), float(control)} or min(out.values()) < 1:
        raise EstimationError("ratio needs a count >= 1 for both arms")
    return out


def _match(data, action, outcome, covariates, ratio, mode, epsilon, metric, strategy, treated, control, seed):
    a = _arms(data, action, treated, control)
    check_binary(a, action, treated, control)
    n = len(data)
    X = np.column_stack([np.asarray(data[c], dtype=np.float64) for c in covariates]) if covariates else np.zeros((n, 0))
    arms = (float(control), float(treated))
    picks = []
    unmatched = []
    reused = False
    if mode == "exact":
        keys = cell_keys(data, covariates)
        groups = {}
        for i, k in enumerate(keys):
            groups.setdefault(k, []).append(i)
        for key in sorted(groups):
            rows = np.asarray(groups[key])
            cand = {arm: rows[a[rows] == arm] for arm in arms}  # already in row order
            if any(c.size == 0 for c in cand.values()):
                unmatched.append(dict(zip(covariates, key)))
                continue
            for arm in arms:
                r = ratio[arm]
                draws = rows.size * r
                reused |= draws > cand[arm].size
                if strategy == "cycle":
                    idx = np.arange(draws) % cand[arm].size
                else:
                    slots = (rows[:, None] * r + np.arange(r)[None, :]).ravel()
                    u = _uniform_at(seed, arm, slots)
                    idx = np.minimum((u * cand[arm].size).astype(np.int64), cand[arm].size - 1)
                chosen = cand[arm][idx].reshape(rows.size, r)
                picks.append((rows, arm, chosen))
        if unmatched:
            raise UnmatchedError(unmatched)
    elif mode == "epsilon":
        if metric not in _METRICS:
            raise EstimationError(f"unknown distance {metric!r}; choose from {', '.join(sorted(_METRICS))}")
        if not epsilon > 0:
            raise EstimationError("epsilon must be > 0")
        p = _METRICS[metric]
        radius = np.nextafter(epsilon, 0.0)  # the neighbourhood uses a strict inequality
        rows = np.arange(n)
        for arm in arms:
            pool = np.flatnonzero(a == arm)
            tree = cKDTree(X[pool])
            hits = tree.query_ball_point(X, r=radius, p=p)
            r = ratio[arm]
            chosen = np.empty((n, r), dtype=np.int64)
            for i, found in enumerate(hits):
                if not found:
                    unmatched.append(dict(zip(covariates, X[i].tolist())))
                    continue
                cand = pool[np.asarray(found, dtype=np.int64)]
                dist = np.linalg.norm(X[cand] - X[i], ord=p, axis=1) if X.shape[1] else np.zeros(cand.size)
                cand = cand[np.lexsort((cand, dist))]
                if strategy == "cycle":
                    idx = np.arange(r) % cand.size
                else:
                    idx = np.minimum((_uniform_at(seed, arm, i * r + np.arange(r)) * cand.size).astype(np.int64), cand.size - 1)
                reused |= r > cand.size
                chosen[i] = cand[idx]
            if unmatched:
                raise UnmatchedError(unmatched)
            picks.append((rows, arm, chosen))
    else:
        raise EstimationError(f"unknown matching mode {mode!r}; choose exact or epsilon")

    index = np.concatenate([chosen.ravel() for _, _, chosen in picks])
    return index, reused


def _uniform_at(seed, arm, slots) -> np.ndarray:
    slots = np.asarray(slots, dtype=np.int64)
    if slots.size == 0:
        return np.empty(0)
    key = rngmod.stream_key(seed, "matching", repr(float(arm)))
    lo, hi = int(slots.min()), int(slots.max()) + 1
    return rngmod.uniforms(key, lo, hi)[slots - lo]


def estimate_matching(data, action, outcome, covariates=(), ratio=(1, 1), mode: str = "exact", epsilon: float = 0.1,
                      metric: str = "euclidean", strategy: str = "random", treated=1, control=0,
                      bootstrap_reps=DEFAULT_BOOTSTRAP_REPS, rng=None):
    """Rebalance the data so every covariate neighbourhood holds the target arm ratio.

    For each row, ``ratio[arm]`` rows of each arm are drawn from the same
    covariate cell (``mode="exact"``) or from rows closer than ``epsilon``
    (``mode="epsilon"``); candidates are ordered by (distance, row index).
    ``strategy="random"`` draws uniformly with replacement, ``"cycle"`` walks
    the ordered candidates. The estimate is the difference of arm means on the
    rebalanced data.

    Returns
    -------
    (Dataset, EstimateReport)
    """
    covariates = list(covariates)
    if strategy not in ("random", "cycle"):
        raise EstimationError("strategy must be random or cycle")
    r = _parse_ratio(ratio, treated, control)
    spec = rngmod.as_spec(rng)

    def run(d):
        index, reused = _match(d, action, outcome, covariates, r, mode, epsilon, metric, strategy, treated, control, spec.seed)
        matched = d.take(index, note=f"matching mode={mode} ratio={r[float(treated)]}:{r[float(control)]} strategy={strategy} seed={spec.seed}")
        est, _ = _naive(matched, action, outcome, treated, control)
        return matched, est, reused, index

    matched, est, reused, index = run(data)
    warnings = []
    if reused:
        warnings.append("some rows were matched more than once (sampling with replacement)")
    uses = np.bincount(index, minlength=len(data))
    diag = {
        "mode": mode,
        "strategy": strategy,
        "rebalanced_rows": len(matched),
        "matched_fraction": 1.0,
        "distinct_rows_used": int(np.count_nonzero(uses)),
        "max_reuse": int(uses.max()) if uses.size else 0,
    }
    if mode == "epsilon":
        diag.update({"epsilon": epsilon, "metric": metric})
    report = EstimateReport("matching", est, None, len(data), diag, warnings)
    report = finish(report, data, lambda d: run(d)[1], bootstrap_reps, spec.derive("bootstrap"))
    return matched, report
