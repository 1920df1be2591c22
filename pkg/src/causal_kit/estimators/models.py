"""Propensity and outcome models used by the adjustment estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .linear import LinearModel, fit_least_squares
from .report import EstimationError

DEFAULT_CLIP = 0.01
IRLS_MAX_ITER = 100
IRLS_TOL = 1e-8
# small L2 term that keeps logistic coefficients finite under separation
IRLS_DAMPING = 1e-6


def cell_keys(data, covariates) -> list:
    """One tuple of covariate values per row."""
    if not covariates:
        return [()] * len(data)
    cols = [np.asarray(data[c], dtype=np.float64).tolist() for c in covariates]
    return list(zip(*cols))


def check_binary(values: np.ndarray, name: str, treated=1.0, control=0.0):
    ok = (values == treated) | (values == control)
    if not np.all(ok):
        bad = values[~ok][0]
        raise EstimationError(f"action column {name} must be binary ({control:g}/{treated:g}); found {bad!r}")


@dataclass(frozen=True)
class PropensityModel:
    """p(action = treated | covariates), clipped to ``[clip, 1 - clip]``.

    ``kind`` is ``table`` (one probability per covariate cell), ``logistic``
    (a LinearModel on the logit scale) or ``constant``.
    """

    kind: str
    covariates: tuple = ()
    table: dict = field(default_factory=dict)
    linear: LinearModel | None = None
    value: float = 0.5
    clip: float = DEFAULT_CLIP
    fallback: float = 0.5
    warnings: tuple = ()

    def __post_init__(self):
        if self.kind not in ("table", "logistic", "constant"):
            raise ValueError(f"unknown propensity kind {self.kind!r}")
        if not 0.0 <= self.clip < 0.5:
            raise ValueError("clip must lie in [0, 0.5)")
        object.__setattr__(self, "covariates", tuple(self.covariates))

    @classmethod
    def constant(cls, p: float, clip: float = DEFAULT_CLIP) -> "PropensityModel":
        return cls("constant", value=float(p), clip=clip)

    @classmethod
    def from_table(cls, covariates, table: dict, clip: float = DEFAULT_CLIP) -> "PropensityModel":
        rows = {tuple(float(v) for v in (k if isinstance(k, tuple) else (k,))): float(p) for k, p in table.items()}
        return cls("table", tuple(covariates), rows, clip=clip)

    def raw(self, data) -> np.ndarray:
        n = len(data)
        if self.kind == "constant":
            return np.full(n, self.value)
        if self.kind == "logistic":
            return expit(self.linear.predict(data) * np.ones(n))
        keys = cell_keys(data, self.covariates)
        return np.array([self.table.get(k, self.fallback) for k in keys], dtype=np.float64)

    def predict(self, data) -> np.ndarray:
        """Clipped p(treated | x) for every row of ``data``."""
        p = self.raw(data)
        return np.clip(p, self.clip, 1.0 - self.clip)


def fit_propensity(data, action, covariates, kind: str = "table", clip: float = DEFAULT_CLIP,
                   smoothing: float = 0.0, treated=1.0, control=0.0) -> PropensityModel:
    """Fit p(action = treated | covariates) by maximum likelihood.

    ``table`` uses smoothed per-cell frequencies ``(k + s) / (n + 2 s)``.
    ``logistic`` runs damped IRLS (Newton steps with step halving) for at most
    100 iterations, stopping when the mean-gradient norm drops below 1e-8.
    """
    a = np.asarray(data[action], dtype=np.float64)
    check_binary(a, action, treated, control)
    t = (a == treated).astype(np.float64)
    covariates = tuple(covariates)
    warnings = []
    if kind == "table":
        counts, hits = {}, {}
        for key, ti in zip(cell_keys(data, covariates), t.tolist()):
            counts[key] = counts.get(key, 0) + 1
            hits[key] = hits.get(key, 0.0) + ti
        table = {k: (hits[k] + smoothing) / (counts[k] + 2 * smoothing) for k in sorted(counts)}
        degenerate = [k for k, p in table.items() if p <= clip or p >= 1 - clip]
        if degenerate:
            warnings.append(f"propensity at the clip boundary in {len(degenerate)} covariate cell(s); estimates there rely on clipping")
        overall = float(t.mean()) if t.size else 0.5
        return PropensityModel("table", covariates, table, clip=clip, fallback=overall, warnings=tuple(warnings))
    if kind == "logistic":
        X = np.column_stack([np.asarray(data[c], dtype=np.float64) for c in covariates]) if covariates else np.empty((t.size, 0))
        coef, converged, separated = _irls(X, t)
        if separated:
            warnings.append("classes are (quasi-)separated by the covariates; fitted propensities sit at the clip boundary")
        elif not converged:
            warnings.append(f"logistic fit did not converge in {IRLS_MAX_ITER} iterations")
        model = LinearModel(dict(zip(covariates, coef[1:].tolist())), float(coef[0]))
        return PropensityModel("logistic", covariates, linear=model, clip=clip, warnings=tuple(warnings))
    if kind == "constant":
        return PropensityModel.constant(float(t.mean()) if t.size else 0.5, clip)
    raise EstimationError(f"unknown propensity kind {kind!r}; choose table, logistic or constant")


def _irls(X: np.ndarray, t: np.ndarray):
    n = t.size
    D = np.hstack([np.ones((n, 1)), X])
    # standardize columns so the damping term is scale-free
    scale = np.ones(D.shape[1])
    if D.shape[1] > 1:
        sd = D[:, 1:].std(axis=0)
        scale[1:] = np.where(sd > 0, sd, 1.0)
    Z = D / scale
    beta = np.zeros(Z.shape[1])

    def objective(b):
        eta = Z @ b
        return float(np.mean(t * eta - np.logaddexp(0.0, eta))) - 0.5 * IRLS_DAMPING * float(b[1:] @ b[1:])

    penalty = np.full(Z.shape[1], IRLS_DAMPING)
    penalty[0] = 0.0
    current = objective(beta)
    converged = False
    for _ in range(IRLS_MAX_ITER):
        p = expit(Z @ beta)
        grad = Z.T @ (t - p) / n - penalty * beta
        if np.linalg.norm(grad) < IRLS_TOL:
            converged = True
            break
        H = (Z * (p * (1 - p))[:, None]).T @ Z / n + np.diag(penalty) + 1e-12 * np.eye(Z.shape[1])
        step = np.linalg.solve(H, grad)
        size = 1.0
        while size > 1e-10:
            cand = beta + size * step
            value = objective(cand)
            if value >= current:
                beta, current = cand, value
                break
            size *= 0.5
        else:
            break
    p = expit(Z @ beta)
    separated = bool(np.all((p < 1e-4) | (p > 1 - 1e-4))) or bool(np.all(np.abs(np.where(t > 0, 1 - p, p)) < 1e-3))
    return beta / scale, converged, separated


@dataclass(frozen=True)
class OutcomeModel:
    """Predicted mean outcome for a given arm and covariate values.

    ``kind`` is ``table`` (mean per (arm, covariate cell)), ``linear`` (one
    LinearModel per arm) or ``constant``.
    """

    kind: str
    covariates: tuple = ()
    table: dict = field(default_factory=dict)
    linear: dict = field(default_factory=dict)
    value: float = 0.0

    @classmethod
    def constant(cls, value: float = 0.0) -> "OutcomeModel":
        return cls("constant", value=float(value))

    @classmethod
    def from_table(cls, covariates, table: dict) -> "OutcomeModel":
        """``table`` maps ``(arm, cell tuple)`` to a mean outcome."""
        rows = {}
        for (arm, key), v in table.items():
            key = key if isinstance(key, tuple) else (key,)
            rows[(float(arm), tuple(float(x) for x in key))] = float(v)
        return cls("table", tuple(covariates), rows)

    def predict(self, data, arm) -> np.ndarray:
        n = len(data)
        arm = float(arm)
        if self.kind == "constant":
            return np.full(n, self.value)
        if self.kind == "linear":
            return self.linear[arm].predict(data) * np.ones(n)
        out = np.empty(n)
        for i, key in enumerate(cell_keys(data, self.covariates)):
            out[i] = self.table.get((arm, key), math.nan)
        return out

    def missing_cells(self, data, arms) -> list:
        """Covariate cells present in ``data`` lacking a prediction for some arm."""
        if self.kind != "table":
            return []
        cells = sorted(set(cell_keys(data, self.covariates)))
        return [c for c in cells if any((float(a), c) not in self.table for a in arms)]


def fit_outcome(data, action, outcome, covariates, kind: str = "table", arms=(0.0, 1.0)) -> OutcomeModel:
    """Per-arm outcome regression over rows with an observed outcome."""
    covariates = tuple(covariates)
    a = np.asarray(data[action], dtype=np.float64)
    y = np.asarray(data[outcome], dtype=np.float64)
    seen = ~np.isnan(y)
    if kind == "table":
        sums, counts = {}, {}
        for key, ai, yi, ok in zip(cell_keys(data, covariates), a.tolist(), y.tolist(), seen.tolist()):
            if not ok:
                continue
            k = (ai, key)
            sums[k] = sums.get(k, 0.0) + yi
            counts[k] = counts.get(k, 0) + 1
        return OutcomeModel("table", covariates, {k: sums[k] / counts[k] for k in sorted(sums)})
    if kind == "linear":
        models = {}
        for arm in arms:
            rows = np.flatnonzero((a == float(arm)) & seen)
            if rows.size == 0:
                raise EstimationError(f"no rows with {action}={arm:g} to fit the outcome model")
            sub = {c: np.asarray(data[c], dtype=np.float64)[rows] for c in covariates}
            sub[outcome] = y[rows]
            models[float(arm)] = fit_least_squares(sub, outcome, covariates)
        return OutcomeModel("linear", covariates, linear=models)
    if kind == "constant":
        return OutcomeModel.constant(float(np.nanmean(y)) if seen.any() else 0.0)
    raise EstimationError(f"unknown outcome model kind {kind!r}; choose table, linear or constant")
