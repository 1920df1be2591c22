"""Sequential randomized trials with an exploration/exploitation policy.

At step ``t`` the policy explores with probability ``eps_t`` (uniform action)
and otherwise samples from a Boltzmann distribution over the running outcome
estimates at temperature ``beta_t``. ``beta = 0`` means argmax (first arm on
ties), ``beta = inf`` means uniform. Arms without any observation are scored
as the current best estimate so they are not starved.

The environment answers every step by sampling the SCM under ``do(action=arm)``
for all arms with shared exogenous noise; the policy only ever sees the
outcome of the arm it picked.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from . import rng as rngmod
from .estimators.linear import LinearModel, fit_least_squares
from .exact import Query, interventional_query
from .expr import format_number
from .sampling import Dataset, ancestral_sample
from .scm import Discrete, Scm, ScmError, do_surgery

_BLOCK = 65536
UPDATE_MODES = ("recursive", "ema")


class ScheduleError(ValueError):
    pass


# -- schedules -------------------------------------------------------------


@dataclass(frozen=True)
class Curve:
    """A value per step ``t >= 1``: ``step``, ``const`` or ``geom``."""

    kind: str
    params: tuple

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        p = self.params
        if self.kind == "step":
            if len(p) != 1 or p[0] < 0:
                raise ScheduleError("step takes one horizon T >= 0")
        elif self.kind == "const":
            if len(p) != 1 or math.isnan(p[0]):
                raise ScheduleError("const takes one value")
        elif self.kind == "geom":
            if len(p) != 3 or not (p[1] > 0 and all(math.isfinite(v) for v in p)):
                raise ScheduleError("geom takes start, decay > 0, floor")
        else:
            raise ScheduleError(f"unknown schedule kind {self.kind!r}; use step:T, const:c or geom:start,decay,floor")

    @classmethod
    def parse(cls, text: str) -> "Curve":
        kind, _, rest = text.strip().partition(":")
        try:
            params = [float(v) for v in rest.split(",")] if rest else []
        except ValueError:
            raise ScheduleError(f"bad schedule parameters in {text!r}") from None
        return cls(kind, params)

    def values(self, start: int, stop: int) -> np.ndarray:
        """Values at steps ``t = start .. stop - 1`` (1-based)."""
        t = np.arange(start, stop, dtype=np.float64)
        p = self.params
        if self.kind == "step":
            return np.where(t < p[0], 1.0, 0.0)
        if self.kind == "const":
            return np.full(t.shape, p[0])
        with np.errstate(over="ignore", under="ignore"):
            return np.maximum(p[2], p[0] * np.power(p[1], t - 1.0))

    def __call__(self, t: int) -> float:
        return float(self.values(t, t + 1)[0])

    def __str__(self):
        return f"{self.kind}:" + ",".join(format_number(v) if math.isfinite(v) else str(v) for v in self.params)


@dataclass(frozen=True)
class Schedule:
    epsilon: Curve
    beta: Curve

    @classmethod
    def parse(cls, eps: str, beta: str) -> "Schedule":
        return cls(Curve.parse(eps), Curve.parse(beta))

    @classmethod
    def rct(cls) -> "Schedule":
        return cls(Curve("const", [1.0]), Curve("const", [math.inf]))

    def block(self, start: int, stop: int):
        eps = self.epsilon.values(start, stop)
        beta = self.beta.values(start, stop)
        if np.any((eps < 0) | (eps > 1)) or np.any(np.isnan(eps)):
            raise ScheduleError(f"epsilon schedule {self.epsilon} leaves [0, 1]")
        if np.any(beta < 0) or np.any(np.isnan(beta)):
            raise ScheduleError(f"beta schedule {self.beta} must stay >= 0")
        return eps, beta


# -- environment -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Environment:
    """Outcome oracle for a trial.

    ``drift`` optionally swaps in another SCM from a given step on:
    ``(step, scm_after)`` with 1-based ``step``.
    """

    scm: Scm
    action: str
    outcome: str
    covariates: tuple = ()
    rng: object = None
    drift: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        object.__setattr__(self, "rng", rngmod.as_spec(self.rng))
        for scm in self._models():
            for node in (self.action, self.outcome, *self.covariates):
                if node not in scm.mechanisms:
                    raise ScmError(f"unknown node {node!r}")
            if not isinstance(scm.domains[self.action], Discrete):
                raise ScmError(f"action {self.action} needs a discrete domain")
            for c in self.covariates:
                if not isinstance(scm.domains[c], Discrete):
                    raise ScmError(f"observed covariate {c} needs a discrete domain")
                if c in scm.dag.descendants(self.action):
                    raise ScmError(f"observed covariate {c} is affected by the action")

    def _models(self):
        return [self.scm] + ([self.drift[1]] if self.drift else [])

    @property
    def arms(self) -> tuple:
        return self.scm.domains[self.action].values

    @property
    def cell_shape(self) -> tuple:
        return tuple(len(self.scm.domains[c]) for c in self.covariates)

    @property
    def n_cells(self) -> int:
        return math.prod(self.cell_shape)

    def cell_index(self, key) -> int | None:
        """Flat cell id for a covariate tuple, or None when outside the domains."""
        key = tuple(key)
        if len(key) != len(self.covariates):
            return None
        flat = 0
        for c, v in zip(self.covariates, key):
            dom = self.scm.domains[c]
            if v not in dom:
                return None
            flat = flat * len(dom) + dom.index(v)
        return flat

    def cell_key(self, index: int) -> tuple:
        key = []
        for c in reversed(self.covariates):
            dom = self.scm.domains[c]
            index, r = divmod(index, len(dom))
            key.append(dom.values[r])
        return tuple(reversed(key))

    def block(self, start: int, stop: int):
        """Outcomes ``Y[t, k]`` under each arm and covariate cells for rows ``[start, stop)``."""
        if self.drift and start < self.drift[0] - 1 < stop:
            cut = int(self.drift[0]) - 1
            y1, c1, x1 = self.block(start, cut)
            y2, c2, x2 = self.block(cut, stop)
            return np.vstack([y1, y2]), np.concatenate([c1, c2]), {k: np.concatenate([x1[k], x2[k]]) for k in x1}
        scm = self.drift[1] if self.drift and start >= self.drift[0] - 1 else self.scm
        n = stop - start
        Y = np.empty((n, len(self.arms)))
        cov = {}
        for k, arm in enumerate(self.arms):
            sample = ancestral_sample(do_surgery(scm, {self.action: arm}), n, self.rng, start=start)
            Y[:, k] = sample[self.outcome]
            if k == 0:
                cov = {c: sample[c].copy() for c in self.covariates}
        cells = np.zeros(n, dtype=np.int64)
        for c in self.covariates:
            dom = scm.domains[c]
            idx = np.abs(cov[c][:, None] - np.asarray(dom.values)[None, :]).argmin(axis=1)
            cells = cells * len(dom) + idx
        return np.ascontiguousarray(Y), cells, cov

    def do_means(self, after_drift: bool = False) -> dict:
        """Exact E[outcome | do(action = arm)] per arm (discrete models only)."""
        scm = self.drift[1] if after_drift and self.drift else self.scm
        return {arm: interventional_query(scm, Query((self.outcome,), {}, {self.action: arm})).expectation(self.outcome) for arm in self.arms}


# -- state -----------------------------------------------------------------


@dataclass(eq=False)
class TrialState:
    arms: tuple
    n_cells: int = 1
    update_mode: str = "recursive"
    eta: float = 0.0
    conditional: bool = False
    seed: int = rngmod.DEFAULT_SEED
    t: int = 0
    counts: np.ndarray = None
    est: np.ndarray = None
    xcounts: np.ndarray = None
    xest: np.ndarray = None
    ccounts: np.ndarray = None
    cest: np.ndarray = None
    eps_sum: float = 0.0
    log_e: list = field(default_factory=list)
    log_a: list = field(default_factory=list)
    log_y: list = field(default_factory=list)
    log_cell: list = field(default_factory=list)
    log_x: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.update_mode not in UPDATE_MODES:
            raise ValueError(f"update_mode must be one of {UPDATE_MODES}")
        if not 0.0 <= self.eta < 1.0:
            raise ValueError("eta must lie in [0, 1)")
        k = len(self.arms)
        if k < 1:
            raise ValueError("a trial needs at least one action")
        for name, shape in (("counts", k), ("est", k), ("xcounts", k), ("xest", k)):
            if getattr(self, name) is None:
                setattr(self, name, np.zeros(shape))
        if self.ccounts is None:
            self.ccounts = np.zeros((max(self.n_cells, 1), k))
            self.cest = np.zeros((max(self.n_cells, 1), k))

    @property
    def estimated(self) -> np.ndarray:
        return self.counts > 0

    def estimates(self) -> dict:
        """Running estimate per arm; None for arms never tried."""
        return {arm: (float(v) if n > 0 else None) for arm, v, n in zip(self.arms, self.est, self.counts)}

    def explore_estimates(self) -> dict:
        return {arm: (float(v) if n > 0 else None) for arm, v, n in zip(self.arms, self.xest, self.xcounts)}

    def log(self) -> dict:
        out = {
            "t": np.arange(1, self.t + 1),
            "e": np.concatenate(self.log_e) if self.log_e else np.empty(0, dtype=np.int8),
            "a": np.asarray(self.arms)[np.concatenate(self.log_a)] if self.log_a else np.empty(0),
            "y": np.concatenate(self.log_y) if self.log_y else np.empty(0),
        }
        for c, parts in self.log_x.items():
            out[c] = np.concatenate(parts) if parts else np.empty(0)
        return out

    def log_dataset(self) -> Dataset:
        log = self.log()
        return Dataset(list(log), log, [f"trial log seed={self.seed} steps={self.t}"])

    def log_csv(self) -> str:
        log = self.log()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(list(log))
        cols = list(log.values())
        for i in range(self.t):
            writer.writerow([format_number(col[i]) for col in cols])
        return buf.getvalue()


def init_state(env: Environment, update_mode: str = "recursive", eta: float = 0.0,
               conditional: bool = False, rng=None) -> TrialState:
    spec = rngmod.as_spec(rng)
    state = TrialState(env.arms, env.n_cells, update_mode, eta, conditional, spec.seed)
    state.log_x = {c: [] for c in env.covariates}
    return state


# -- policy ----------------------------------------------------------------


def policy_probs(state: TrialState, schedule: Schedule, t: int | None = None, cell: int = 0) -> np.ndarray:
    """Mixture of the uniform pmf (weight eps_t) and a softmax of the estimates.

    ``t`` defaults to the next step. In conditional trials the estimates of
    covariate cell ``cell`` are used.
    """
    t = state.t + 1 if t is None else t
    eps, beta = schedule.block(t, t + 1)
    return mixture_pmf(*_view(state, cell), float(eps[0]), float(beta[0]))


def _view(state, cell):
    est, cnt = (state.cest[cell], state.ccounts[cell]) if state.conditional else (state.est, state.counts)
    return est, cnt


def mixture_pmf(est, counts, eps: float, beta: float) -> np.ndarray:
    est = np.asarray(est, dtype=np.float64)
    known = np.asarray(counts) > 0
    k = est.size
    top = est[known].max() if known.any() else 0.0
    view = np.where(known, est, top)
    if beta == 0.0:
        greedy = np.zeros(k)
        greedy[int(np.argmax(view))] = 1.0
    elif math.isinf(beta):
        greedy = np.full(k, 1.0 / k)
    else:
        w = np.exp((view - view.max()) / beta)
        greedy = w / w.sum()
    return eps / k + (1.0 - eps) * greedy


# -- running ---------------------------------------------------------------


def _advance(state: TrialState, schedule: Schedule, env: Environment, steps: int) -> None:
    done = 0
    while done < steps:
        start = state.t
        stop = start + min(_BLOCK, steps - done)
        Y, cells, cov = env.block(start, stop)
        eps, beta = schedule.block(start + 1, stop + 1)
        ue = rngmod.stream(state.seed, "trial", "explore", start=start, stop=stop)
        ua = rngmod.stream(state.seed, "trial", "action", start=start, stop=stop)
        n = stop - start
        out_e = np.empty(n, dtype=np.int8)
        out_a = np.empty(n, dtype=np.int64)
        out_y = np.empty(n)
        kernels.run_block(
            Y, cells, ue, ua, np.ascontiguousarray(eps), np.ascontiguousarray(beta),
            int(state.update_mode == "ema"), float(state.eta), int(state.conditional),
            state.counts, state.est, state.xcounts, state.xest, state.ccounts, state.cest,
            out_e, out_a, out_y,
        )
        state.log_e.append(out_e)
        state.log_a.append(out_a)
        state.log_y.append(out_y)
        state.log_cell.append(cells)
        for c in env.covariates:
            state.log_x.setdefault(c, []).append(cov[c])
        state.eps_sum += float(np.sum(eps))
        state.t = stop
        done += n


def step(state: TrialState, schedule: Schedule, env: Environment) -> TrialState:
    """Run one step in place and return the state."""
    _advance(state, schedule, env, 1)
    return state


@dataclass
class BiasReport:
    """Per-arm squared gap between the running and explore-only estimates."""

    bias: dict
    explore_counts: dict
    effective_explore: float
    explore_fraction: float

    def to_dict(self) -> dict:
        return {
            "bias": {format_number(k): v for k, v in self.bias.items()},
            "explore_counts": {format_number(k): v for k, v in self.explore_counts.items()},
            "effective_explore": self.effective_explore,
            "explore_fraction": self.explore_fraction,
        }


def bias_check(state: TrialState) -> BiasReport:
    """``(running - explore_only)^2`` per arm; None where an arm was never explored.

    ``effective_explore`` is the summed exploration probability and
    ``explore_fraction`` the share of explore steps among the first ``t``.
    """
    bias = {}
    for arm, est, xest, n, xn in zip(state.arms, state.est, state.xest, state.counts, state.xcounts):
        bias[arm] = float((est - xest) ** 2) if xn > 0 and n > 0 else None
    explored = int(sum(int(e.sum()) for e in state.log_e))
    return BiasReport(
        bias,
        {arm: int(n) for arm, n in zip(state.arms, state.xcounts)},
        state.eps_sum,
        explored / state.t if state.t else math.nan,
    )


def conditional_estimates(state: TrialState, env: Environment, key) -> dict:
    """Running per-arm estimates restricted to steps whose covariates equal ``key``.

    Arms (or keys) never observed map to None.
    """
    cell = env.cell_index(key if isinstance(key, tuple) else (key,))
    if cell is None:
        return {arm: None for arm in state.arms}
    return {
        arm: (float(state.cest[cell, k]) if state.ccounts[cell, k] > 0 else None)
        for k, arm in enumerate(state.arms)
    }


def replay_estimates(state: TrialState, env: Environment | None = None, key=None) -> dict:
    """Recompute per-arm estimates from the log alone (optionally one covariate cell)."""
    log = state.log()
    a, y = log["a"], log["y"]
    mask = np.ones(a.size, dtype=bool)
    if key is not None:
        cell = env.cell_index(key if isinstance(key, tuple) else (key,))
        cells = np.concatenate(state.log_cell) if state.log_cell else np.empty(0, dtype=np.int64)
        mask = cells == cell if cell is not None else np.zeros(a.size, dtype=bool)
    out = {}
    for arm in state.arms:
        rows = np.flatnonzero(mask & (a == arm))
        if rows.size == 0:
            out[arm] = None
        elif state.update_mode == "recursive":
            out[arm] = float(np.sum(y[rows]) / rows.size)
        else:
            v = 0.0
            for yi in y[rows].tolist():
                v = state.eta * v + (1.0 - state.eta) * yi
            out[arm] = v
    return out


@dataclass
class TrialReport:
    steps: int
    arms: tuple
    estimates: dict
    explore_estimates: dict
    counts: dict
    explore_counts: dict
    cumulative_outcome: float
    bias: BiasReport
    unestimated: list
    unexplored: list
    backend: str = kernels.BACKEND
    oracle: dict | None = None

    def to_dict(self) -> dict:
        fmt = lambda d: {format_number(k): v for k, v in d.items()}  # noqa: E731
        out = {
            "steps": self.steps,
            "arms": [format_number(a) for a in self.arms],
            "estimates": fmt(self.estimates),
            "explore_estimates": fmt(self.explore_estimates),
            "counts": fmt(self.counts),
            "explore_counts": fmt(self.explore_counts),
            "cumulative_outcome": self.cumulative_outcome,
            "bias_check": self.bias.to_dict(),
            "unestimated_arms": [format_number(a) for a in self.unestimated],
            "unexplored_arms": [format_number(a) for a in self.unexplored],
            "backend": self.backend,
        }
        if self.oracle is not None:
            out["do_oracle"] = fmt(self.oracle)
        return out

    def to_json(self) -> str:
        return json.dumps(_finite(self.to_dict()), indent=2)


def _finite(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_finite(v) for v in value]
    return value


def make_report(state: TrialState, oracle: dict | None = None) -> TrialReport:
    return TrialReport(
        steps=state.t,
        arms=state.arms,
        estimates=state.estimates(),
        explore_estimates=state.explore_estimates(),
        counts={arm: int(n) for arm, n in zip(state.arms, state.counts)},
        explore_counts={arm: int(n) for arm, n in zip(state.arms, state.xcounts)},
        cumulative_outcome=float(sum(float(y.sum()) for y in state.log_y)),
        bias=bias_check(state),
        unestimated=[arm for arm, n in zip(state.arms, state.counts) if n == 0],
        unexplored=[arm for arm, n in zip(state.arms, state.xcounts) if n == 0],
        oracle=oracle,
    )


def run_trial(env: Environment, schedule: Schedule, steps: int, update_mode: str = "recursive",
              eta: float = 0.0, conditional: bool = False, rng=None):
    """Run ``steps`` steps from a fresh state.

    Returns
    -------
    (TrialState, TrialReport)
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    state = init_state(env, update_mode, eta, conditional, rng)
    _advance(state, schedule, env, steps)
    return state, make_report(state)


# -- contextual models -----------------------------------------------------


@dataclass(frozen=True)
class ContextualModel:
    """Linear outcome predictors.

    ``covariate`` mode holds one LinearModel per arm over the observed
    covariates; ``action_context`` mode holds one shared LinearModel over the
    features of the action's context vector.
    """

    mode: str
    features: tuple
    per_arm: dict = field(default_factory=dict)
    shared: LinearModel | None = None

    def predict(self, arm=None, x=None, context=None) -> float:
        if self.mode == "covariate":
            x = dict(zip(self.features, x)) if not isinstance(x, dict) else x
            return float(self.per_arm[float(arm)].predict({f: np.asarray(x.get(f, 0.0)) for f in self.features}))
        context = dict(zip(self.features, context)) if not isinstance(context, dict) else context
        return float(self.shared.predict({f: np.asarray(context[f]) for f in self.features}))


def fit_contextual(source, action: str = "a", outcome: str = "y", features=(), mode: str = "covariate",
                   contexts: dict | None = None, ridge: float = 0.0) -> ContextualModel:
    """Least-squares contextual model from a TrialState log or a Dataset.

    In ``action_context`` mode ``contexts`` maps each arm to its feature
    vector (a dict keyed by ``features``); rows are regressed on the context of
    the arm they received.
    """
    data = source.log_dataset() if isinstance(source, TrialState) else source
    features = tuple(features)
    a = np.asarray(data[action], dtype=np.float64)
    y = np.asarray(data[outcome], dtype=np.float64)
    if mode == "covariate":
        models = {}
        for arm in sorted(set(a.tolist())):
            rows = np.flatnonzero(a == arm)
            if rows.size < len(features) + 1:
                raise ValueError(f"arm {format_number(arm)} has {rows.size} rows; {len(features) + 1} are needed")
            sub = {f: np.asarray(data[f], dtype=np.float64)[rows] for f in features}
            sub[outcome] = y[rows]
            models[float(arm)] = fit_least_squares(sub, outcome, features, ridge)
        return ContextualModel("covariate", features, per_arm=models)
    if mode == "action_context":
        if contexts is None:
            raise ValueError("action_context mode needs a context vector per arm")
        ctx = {float(k): (dict(zip(features, v)) if not isinstance(v, dict) else v) for k, v in contexts.items()}
        missing = sorted(set(a.tolist()) - set(ctx))
        if missing:
            raise ValueError(f"no context for arm(s) {', '.join(format_number(m) for m in missing)}")
        cols = {f: np.array([ctx[ai][f] for ai in a.tolist()], dtype=np.float64) for f in features}
        cols[outcome] = y
        if y.size < len(features) + 1:
            raise ValueError(f"{y.size} rows cannot fit {len(features) + 1} coefficients")
        return ContextualModel("action_context", features, shared=fit_least_squares(cols, outcome, features, ridge))
    raise ValueError(f"unknown contextual mode {mode!r}; use covariate or action_context")
