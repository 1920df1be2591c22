"""Least squares with an unpenalized intercept."""
from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from .report import EstimationError

# relative eigenvalue below which the scaled normal matrix is treated as singular
_RANK_TOL = 1e-10


class RankDeficiencyError(EstimationError):
    def __init__(self, columns):
        self.columns = tuple(columns)
        super().__init__("design matrix is rank deficient; collinear columns: " + ", ".join(self.columns))


@dataclass(frozen=True)
class LinearModel:
    weights: dict
    intercept: float = 0.0

    def __post_init__(self):
        weights = {k: float(v) for k, v in dict(self.weights).items()}
        if not all(math.isfinite(v) for v in weights.values()) or not math.isfinite(self.intercept):
            raise EstimationError("linear model coefficients must be finite")
        object.__setattr__(self, "weights", MappingProxyType(weights))
        object.__setattr__(self, "intercept", float(self.intercept))

    @property
    def features(self) -> tuple:
        return tuple(self.weights)

    def predict(self, columns) -> np.ndarray:
        """``columns`` maps feature names to arrays (a Dataset works)."""
        out = None
        for name, w in self.weights.items():
            term = w * np.asarray(columns[name], dtype=np.float64)
            out = term if out is None else out + term
        if out is None:
            return np.asarray(self.intercept)
        return out + self.intercept


def solve_least_squares(X: np.ndarray, y: np.ndarray, names, ridge: float = 0.0, sample_weight=None) -> tuple:
    """Return ``(weights, intercept)`` minimizing weighted squared error + ridge * |w|^2.

    The normal equations are solved on the feature cross-product matrix; only
    the feature weights are penalized.
    """
    X = np.asarray(X, dtype=np.float64).reshape(len(y), -1)
    y = np.asarray(y, dtype=np.float64)
    names = list(names)
    if y.size == 0:
        raise EstimationError("least squares needs at least one row")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise EstimationError("least squares needs finite values")
    if ridge < 0:
        raise EstimationError("ridge penalty must be >= 0")
    w = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    D = np.hstack([np.ones((y.size, 1)), X])
    Dw = D * w[:, None]
    A = D.T @ Dw
    b = Dw.T @ y
    penalty = np.full(A.shape[0], float(ridge))
    penalty[0] = 0.0
    A = A + np.diag(penalty)
    if ridge == 0.0 or A.shape[0] == 1:
        _check_rank(A, ["intercept"] + names)
    coef = np.linalg.solve(A, b)
    return coef[1:], float(coef[0])


def _check_rank(A, labels):
    scale = np.sqrt(np.diag(A))
    if np.any(scale == 0):
        zero = [labels[i] for i in np.flatnonzero(scale == 0)]
        raise RankDeficiencyError(zero)
    S = A / np.outer(scale, scale)
    vals, vecs = np.linalg.eigh(S)
    if vals[0] > _RANK_TOL * max(vals[-1], 1.0):
        return
    null = vecs[:, 0]
    involved = [labels[i] for i in np.flatnonzero(np.abs(null) > 1e-6)]
    raise RankDeficiencyError(involved)


def fit_least_squares(data, target, features, ridge: float = 0.0, sample_weight=None) -> LinearModel:
    """Linear model of ``target`` on ``features`` (with intercept).

    Raises
    ------
    RankDeficiencyError
        When ``ridge == 0`` and the features are collinear with each other or
        with the intercept; the message names the columns involved.
    """
    features = list(features)
    y = np.asarray(data[target], dtype=np.float64)
    X = np.column_stack([np.asarray(data[f], dtype=np.float64) for f in features]) if features else np.empty((y.size, 0))
    weights, intercept = solve_least_squares(X, y, features, ridge, sample_weight)
    return LinearModel(dict(zip(features, weights.tolist())), intercept)
