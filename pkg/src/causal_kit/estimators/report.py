"""Uniform estimator output and the row-resampling bootstrap."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .. import rng as rngmod

DEFAULT_BOOTSTRAP_REPS = 200


class EstimationError(ValueError):
    """The estimator cannot produce a number from this data."""


class PositivityError(EstimationError):
    pass


@dataclass
class EstimateReport:
    method: str
    estimate: float
    std_error: float | None = None
    n_used: int = 0
    diagnostics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "estimate": _jsonable(self.estimate),
            "std_error": _jsonable(self.std_error),
            "n_used": int(self.n_used),
            "diagnostics": {k: _jsonable(v) for k, v in sorted(self.diagnostics.items())},
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False)


def _jsonable(value):
    # JSON has no NaN/inf; such values are reported as null
    if value is None:
        return None
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return str(value)


def bootstrap_indices(n: int, rep: int, rng) -> np.ndarray:
    """Row indices of bootstrap replicate ``rep``; independent of other replicates."""
    spec = rngmod.as_spec(rng)
    u = rngmod.stream(spec.seed, "bootstrap", rep, start=0, stop=n)
    return np.minimum((u * n).astype(np.int64), n - 1)


def bootstrap(data, statistic, reps: int, rng) -> tuple:
    """Standard deviation of ``statistic`` over resampled copies of ``data``.

    Returns ``(std_error, failed)``; replicates where the statistic raises
    EstimationError are dropped and counted in ``failed``.
    """
    n = len(data)
    values = []
    failed = 0
    for rep in range(reps):
        try:
            values.append(float(statistic(data.take(bootstrap_indices(n, rep, rng)))))
        except EstimationError:
            failed += 1
    values = np.asarray(values)
    values = values[np.isfinite(values)]
    if values.size < 2:
        return math.nan, failed
    return float(values.std(ddof=1)), failed


def finish(report: EstimateReport, data, statistic, bootstrap_reps: int, rng) -> EstimateReport:
    """Attach a bootstrap standard error when ``bootstrap_reps > 0``."""
    if bootstrap_reps and bootstrap_reps > 0:
        se, failed = bootstrap(data, statistic, bootstrap_reps, rng)
        report.std_error = se
        report.diagnostics["bootstrap_reps"] = bootstrap_reps
        if failed:
            report.diagnostics["bootstrap_failed"] = failed
            report.warnings.append(f"{failed} of {bootstrap_reps} bootstrap replicates could not be estimated")
    return report
