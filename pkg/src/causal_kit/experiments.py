"""Registry of reproducible acceptance experiments.

Each experiment regenerates its data from fixed seeds, runs the estimators or
simulations involved and compares them against registered oracle values.
``run(id)`` returns one Check per comparison.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from . import rng as rngmod
from .dsl import ScmParseError, parse_scm, serialize_scm
from .estimators import (
    estimate_did,
    estimate_dml,
    estimate_doubly_robust,
    estimate_iv_2sls,
    estimate_ipw,
    estimate_matching,
    estimate_naive,
    estimate_ols,
    estimate_rdd,
    estimate_regression_adjustment,
)
from .exact import Query, ate_exact, interventional_query, joint_table, query
from .paths import classify_paths
from .random_models import confounder_fixtures, random_binary_dag, random_scm
from .sampling import ancestral_sample
from .trial import Environment, Schedule, fit_contextual, run_trial

SEED = 20240101


@dataclass
class Check:
    name: str
    value: float
    target: float
    tolerance: float
    passed: bool
    detail: str = ""

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        text = f"{verdict} {self.name}: {_fmt(self.value)} (target {_fmt(self.target)}, tolerance {_fmt(self.tolerance)})"
        return text + (f" [{self.detail}]" if self.detail else "")

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in self.__dict__.items()}


def _fmt(v) -> str:
    return f"{v:.6g}" if isinstance(v, float) else str(v)


def within(name, value, target, tol, detail="") -> Check:
    value = float(value)
    return Check(name, value, float(target), float(tol), bool(abs(value - target) <= tol), detail)


def at_least(name, value, bound, detail="") -> Check:
    return Check(name, float(value), float(bound), 0.0, bool(value >= bound), detail or "lower bound")


@dataclass
class Experiment:
    id: str
    criterion: int
    summary: str
    fn: object = field(repr=False)


REGISTRY: dict = {}


def experiment(id: str, criterion: int, summary: str):
    def wrap(fn):
        REGISTRY[id] = Experiment(id, criterion, summary, fn)
        return fn
    return wrap


def run(id: str, seed: int = SEED) -> list:
    if id not in REGISTRY:
        raise KeyError(id)
    return REGISTRY[id].fn(seed)


def vaccine_toy():
    text = resources.files("causal_kit").joinpath("models/vaccine_toy.scm.txt").read_text()
    return parse_scm(text)


# -- 1 ----------------------------------------------------------------------

MODEL_1 = """
var v' ~ normal(0, 1);
var vl ~ normal({a} + v', 1);
var vr ~ normal({b} + v', 1);
var v ~ normal(vl + vr, 1);
"""
# the second model's exogenous term has variance 2
MODEL_2 = """
var v' ~ normal(0, 1);
var vc ~ normal({ab} + v', 1.4142135623730951);
var v ~ normal(vc, 1);
"""


def equivalence_models(a: float = 1.0, b: float = 2.0):
    return parse_scm(MODEL_1.format(a=a, b=b)), parse_scm(MODEL_2.format(ab=a + b))


def residual_variance(data, target="v", given="v'") -> float:
    """Variance of ``target`` around its least-squares line in ``given``."""
    x, y = data[given], data[target]
    slope = np.cov(x, y)[0, 1] / np.var(x, ddof=1)
    resid = y - y.mean() - slope * (x - x.mean())
    return float(np.var(resid, ddof=2))


@experiment("model-equivalence", 1, "two structurally different models with the same p(v | v')")
def _model_equivalence(seed):
    checks = []
    for label, scm in zip(("model-1", "model-2"), equivalence_models()):
        data = ancestral_sample(scm, 200_000, rngmod.RngSpec(seed).derive("equivalence", label))
        d = data["v"] - data["v'"]
        checks.append(within(f"{label} E[v - v']", d.mean(), 3.0, 0.02))
        checks.append(within(f"{label} Var[v - v']", d.var(ddof=1), 3.0, 0.05))
    return checks


# -- 2 ----------------------------------------------------------------------


@experiment("ipw-vs-naive", 2, "vaccine toy: adjustment estimators recover 0.30, naive gives 0.60")
def _ipw_vs_naive(seed):
    scm = vaccine_toy()
    ate = ate_exact(scm, "a", "y")
    joint = joint_table(scm)
    naive_exact = query(joint, ["y"], {"a": 1}).expectation("y") - query(joint, ["y"], {"a": 0}).expectation("y")
    data = ancestral_sample(scm, 100_000, seed)
    common = dict(bootstrap_reps=0, rng=seed)
    checks = [within("exact ATE", ate, 0.30, 1e-12), within("exact naive difference", naive_exact, 0.60, 1e-12)]
    checks.append(within("regression adjustment", estimate_regression_adjustment(data, "a", "y", ["x"], **common).estimate, 0.30, 0.02))
    checks.append(within("IPW", estimate_ipw(data, "a", "y", covariates=["x"], **common).estimate, 0.30, 0.02))
    checks.append(within("doubly robust", estimate_doubly_robust(data, "a", "y", ["x"], **common).estimate, 0.30, 0.02))
    _, match = estimate_matching(data, "a", "y", ["x"], **common)
    checks.append(within("matching", match.estimate, 0.30, 0.02))
    checks.append(within("naive", estimate_naive(data, "a", "y", **common).estimate, 0.60, 0.02))
    return checks


# -- 3 ----------------------------------------------------------------------


def hand_do(scm, arm: float) -> float:
    """p(y=1 | do(a=arm)) = sum_x p(x) p(y=1 | arm, x), read straight off the tables."""
    px = scm.mechanisms["x"].table[()]
    py = scm.mechanisms["y"].table
    return sum(px[i] * py[(arm, x)][1] for i, x in enumerate((0.0, 1.0)))


@experiment("do-surgery", 3, "64 random confounder graphs: surgery matches the adjustment formula")
def _do_surgery(seed):
    worst, mismatched, too_close, degenerate_far = 0.0, 0, 0, 0
    fixtures = confounder_fixtures()
    for i, scm in enumerate(fixtures):
        joint = joint_table(scm)
        degenerate = i % 8 == 7
        for arm in (0.0, 1.0):
            do = interventional_query(scm, Query(("y",), {}, {"a": arm})).prob({"y": 1.0})
            err = abs(do - hand_do(scm, arm))
            worst = max(worst, err)
            mismatched += err > 1e-12
            cond = query(joint, ["y"], {"a": arm}).prob({"y": 1.0})
            if degenerate:
                degenerate_far += abs(do - cond) > 1e-12
            else:
                too_close += abs(do - cond) <= 1e-3
    return [
        Check("max |do - formula|", worst, 0.0, 1e-12, mismatched == 0, f"{len(fixtures)} graphs x 2 arms"),
        Check("non-degenerate graphs with |do - conditional| <= 1e-3", float(too_close), 0.0, 0.0, too_close == 0),
        Check("degenerate graphs where do differs from conditional", float(degenerate_far), 0.0, 0.0, degenerate_far == 0),
    ]


# -- 4 ----------------------------------------------------------------------


def independent_in_joint(scm, u, v, observed, atol=1e-9) -> bool:
    """Brute-force u _||_ v | observed: max |p(u,v|z) - p(u|z) p(v|z)| below ``atol``."""
    joint = joint_table(scm)
    marg = query(joint, [u, v, *observed], {}, normalize=False).probs
    p_z = marg.sum(axis=(0, 1), keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(p_z > 0, marg / p_z, 0.0)
    gap = cond - cond.sum(axis=1, keepdims=True) * cond.sum(axis=0, keepdims=True)
    return bool(np.max(np.abs(gap)) < atol)


@experiment("d-separation", 4, "500 random DAGs: path verdicts match brute-force independence tests")
def _d_separation(seed):
    agree = 0
    disagreements = []
    for i in range(500):
        scm, u, v, observed = random_binary_dag(seed + i)
        verdict = classify_paths(scm.dag, u, v, observed).d_separated
        truth = independent_in_joint(scm, u, v, observed)
        if verdict == truth:
            agree += 1
        elif len(disagreements) < 3:
            disagreements.append(f"dag {seed + i}: {u},{v}|{observed}")
    return [Check("agreement rate", agree / 500, 1.0, 0.0, agree == 500, "; ".join(disagreements))]


# -- 5 ----------------------------------------------------------------------


@experiment("rct-equivalence", 5, "pure exploration on the vaccine toy matches the do-oracle")
def _rct(seed):
    env = Environment(vaccine_toy(), "a", "y", rng=rngmod.RngSpec(seed).derive("env"))
    oracle = env.do_means()
    state, report = run_trial(env, Schedule.rct(), 100_000, rng=seed)
    checks = [within("oracle E[y|do(a=1)]", oracle[1.0], 0.65, 1e-12), within("oracle E[y|do(a=0)]", oracle[0.0], 0.35, 1e-12)]
    for arm in env.arms:
        checks.append(within(f"running estimate a={arm:g}", report.estimates[arm], oracle[arm], 0.02))
        b = report.bias.bias[arm]
        checks.append(Check(f"bias check a={arm:g}", b, 0.0, 1e-4, b is not None and b <= 1e-4))
    return checks


# -- 6 ----------------------------------------------------------------------

# the effect flips sign with the observed covariate, so a policy that exploits
# per covariate value assigns arms in a covariate-dependent way
FLIP_ENV = """
var x' : {0, 1} ~ bernoulli(0.4);
var a : {0, 1} ~ bernoulli(0.5);
var y : {0, 1} cpt | a=0, x'=0 -> 0.3, 0.7
                   | a=0, x'=1 -> 0.8, 0.2
                   | a=1, x'=0 -> 0.7, 0.3
                   | a=1, x'=1 -> 0.15, 0.85;
"""
ANNEAL_EPS = "geom:1,0.995,0.1"


def explore_replications(seed, reps=200, steps=2000):
    scm = parse_scm(FLIP_ENV)
    base = rngmod.RngSpec(seed)
    schedule = Schedule.parse(ANNEAL_EPS, "const:0")
    xest, biased = [], 0
    oracle = None
    for r in range(reps):
        env = Environment(scm, "a", "y", ("x'",), rng=base.derive("env", r))
        oracle = oracle or env.do_means()
        state, report = run_trial(env, schedule, steps, conditional=True, rng=base.derive("policy", r))
        xest.append([report.explore_estimates[a] for a in env.arms])
        biased += all(b is not None and b > 0 for b in report.bias.bias.values())
    return oracle, np.array(xest, dtype=np.float64), biased


@experiment("explore-unbiased", 6, "explore-only estimates stay unbiased under an exploiting conditional policy")
def _explore_unbiased(seed):
    oracle, xest, biased = explore_replications(seed)
    checks = []
    for k, arm in enumerate(sorted(oracle)):
        col = xest[:, k]
        se = col.std(ddof=1) / math.sqrt(col.size)
        checks.append(within(f"mean explore-only estimate a={arm:g}", col.mean(), oracle[arm], 3 * se, "3 empirical SE"))
    checks.append(at_least("replications with b_T > 0 on every arm", biased, 150))
    return checks


# -- 7, 10 --------------------------------------------------------------------

IV_MODEL = """
var x ~ normal(0, 1);
var z ~ normal(0, 1);
var a ~ normal({gamma} * x + {psi} * z, 1);
var y ~ normal({alpha} * a + {beta} * x, 1);
"""


def iv_model(alpha=2.0, beta=3.0, gamma=1.0, psi=1.0):
    return parse_scm(IV_MODEL.format(alpha=alpha, beta=beta, gamma=gamma, psi=psi))


@experiment("iv-linear", 7, "2SLS recovers the direct effect that OLS overstates")
def _iv(seed):
    data = ancestral_sample(iv_model(), 200_000, seed)
    iv = estimate_iv_2sls(data, "a", "y", "z", bootstrap_reps=0)
    ols = estimate_ols(data, "a", "y", bootstrap_reps=0)
    return [within("2SLS", iv.estimate, 2.0, 0.05), within("OLS", ols.estimate, 3.0, 0.05)]


@experiment("dml", 10, "cross-fitted partialling-out with the confounder observed")
def _dml(seed):
    data = ancestral_sample(iv_model(), 200_000, seed)
    est = estimate_dml(data, "a", "y", ["x"], folds=5, bootstrap_reps=0, rng=seed)
    return [within("DML K=5", est.estimate, 2.0, 0.05)]


# -- 8 ----------------------------------------------------------------------

DID_MODEL = """
var x ~ normal(0, 1);
var a : {{0, 1}} := x + normal(0, 1) > 0;
var y_pre := {y0} * (x > 0) + normal(0, 1);
var y_post := {y0} * (x > 0) + {alpha} * a + normal(0, 1);
"""


def did_model(y0=5.0, alpha=1.0):
    return parse_scm(DID_MODEL.format(y0=y0, alpha=alpha))


@experiment("did", 8, "difference-in-differences removes the baseline gap")
def _did(seed):
    data = ancestral_sample(did_model(), 100_000, seed)
    est = estimate_did(data, "a", "y_pre", "y_post", bootstrap_reps=0)
    return [
        within("DiD", est.estimate, 1.0, 0.05),
        Check("post-only difference", est.diagnostics["naive_post_difference"], 1.5, 0.0,
              est.diagnostics["naive_post_difference"] > 1.5, "must exceed"),
    ]


# -- 9 ----------------------------------------------------------------------

RDD_MODEL = """
var x ~ normal(0, 1);
var y := x + {tau} * (x >= 0) + normal(0, 0.1);
"""


def rdd_model(tau=2.0):
    return parse_scm(RDD_MODEL.format(tau=tau))


@experiment("rdd", 9, "local linear fits recover a jump of 2 and a null jump")
def _rdd(seed):
    checks = []
    for tau in (2.0, 0.0):
        data = ancestral_sample(rdd_model(tau), 50_000, rngmod.RngSpec(seed).derive("rdd", tau))
        est = estimate_rdd(data, "x", "y", threshold=0.0, bandwidth=0.5, degree=1, bootstrap_reps=0)
        checks.append(within(f"jump tau={tau:g}", est.estimate, tau, 0.05))
    return checks


# -- 11 ---------------------------------------------------------------------

# habits are never active together: h=1 smokes, h=2 jogs, h=0 neither
HABIT_ENV = """
var h : {0, 1, 2} ~ uniform(0, 1, 2);
var smoke := h == 1;
var jog := h == 2;
var a : {0, 1} ~ bernoulli(0.5);
var y : real := 1 + 0.5 * a - 0.8 * smoke + (0.6 - 1.2 * a) * jog + normal(0, 0.5);
"""
HABIT_TRUTH = {0.0: 1.0 - 0.8 + 0.6, 1.0: 1.5 - 0.8 - 0.6}

# actions are seasonings: 0 none, 1 salt only, 2 pepper only
SEASONING_ENV = """
var a : {0, 1, 2} ~ uniform(0, 1, 2);
var y : real := 0.2 + 0.7 * (a == 1) + 0.4 * (a == 2) + normal(0, 0.5);
"""
SEASONING_CONTEXTS = {0: (0.0, 0.0), 1: (1.0, 0.0), 2: (0.0, 1.0)}
SEASONING_TRUTH = 0.2 + 0.7 + 0.4


@experiment("compositional", 11, "linear models predict an unseen combination of features")
def _compositional(seed):
    base = rngmod.RngSpec(seed)
    env = Environment(parse_scm(HABIT_ENV), "a", "y", ("smoke", "jog"), rng=base.derive("habits"))
    state, _ = run_trial(env, Schedule.rct(), 20_000, rng=base.derive("habit-policy"))
    both = (np.asarray(state.log()["smoke"]) * np.asarray(state.log()["jog"])).sum()
    model = fit_contextual(state, features=("smoke", "jog"), mode="covariate")
    checks = [Check("rows with both habits", float(both), 0.0, 0.0, both == 0, "no support")]
    for arm, truth in HABIT_TRUTH.items():
        checks.append(within(f"covariate mode a={arm:g} smoke+jog", model.predict(arm, (1.0, 1.0)), truth, 0.05))
    env = Environment(parse_scm(SEASONING_ENV), "a", "y", rng=base.derive("seasoning"))
    state, _ = run_trial(env, Schedule.rct(), 20_000, rng=base.derive("seasoning-policy"))
    model = fit_contextual(state, features=("salt", "pepper"), mode="action_context", contexts=SEASONING_CONTEXTS)
    checks.append(within("action-context salt+pepper", model.predict(context=(1.0, 1.0)), SEASONING_TRUTH, 0.05))
    return checks


# -- 12 ---------------------------------------------------------------------


def fuzz_parser(count: int, seed: int) -> tuple:
    """Parse ``count`` random byte strings; returns (crashes, first crash repr)."""
    gen = np.random.default_rng(seed)
    alphabet = np.frombuffer(b"var x y a : {0,1} ~ := cpt | -> ; ( ) normal bernoulli 0.5 -1e3 + * / <= == ' # \n\t", dtype=np.uint8)
    crashes, first = 0, None
    for _ in range(count):
        n = int(gen.integers(0, 48))
        if gen.random() < 0.5:
            blob = gen.integers(0, 256, size=n, dtype=np.uint8).tobytes()
        else:
            blob = alphabet[gen.integers(0, alphabet.size, size=n)].tobytes()
        try:
            parse_scm(blob)
        except ScmParseError:
            pass
        except Exception as exc:  # noqa: BLE001 - anything else is a crash
            crashes += 1
            first = first or f"{blob!r}: {type(exc).__name__}: {exc}"
    return crashes, first


def round_trip_failures(count: int, seed: int) -> list:
    bad = []
    for i in range(count):
        scm = random_scm(seed + i)
        try:
            back = parse_scm(serialize_scm(scm))
        except ScmParseError as exc:
            bad.append((seed + i, str(exc)))
            continue
        if back != scm:
            bad.append((seed + i, "structural mismatch"))
    return bad


@experiment("dsl-round-trip", 12, "serialize/parse round trip and parser fuzzing")
def _dsl(seed, fuzz_count=1_000_000):
    bad = round_trip_failures(1000, seed)
    t0 = time.perf_counter()
    crashes, first = fuzz_parser(fuzz_count, seed)
    took = time.perf_counter() - t0
    return [
        Check("round-trip failures out of 1000", float(len(bad)), 0.0, 0.0, not bad, str(bad[:2]) if bad else ""),
        Check(f"parser crashes out of {fuzz_count}", float(crashes), 0.0, 0.0, crashes == 0, first or f"{took:.1f}s"),
    ]


# -- 13 ---------------------------------------------------------------------

UNCORRELATED_CLAIM = """
var z ~ normal(0, 1);
var u ~ normal(0.2 * z, 1.019803902718557);
var v ~ normal(0.1 * u - 0.5 * z, 0.1);
"""
# 0.1 * Var(u) - 0.5 * Cov(u, z) = 0.1 * 1.08 - 0.5 * 0.2
COV_UV = 0.008


@experiment("cov-discrepancy", 13, "the 'uncorrelated' Gaussian example has covariance 0.008")
def _cov(seed):
    data = ancestral_sample(parse_scm(UNCORRELATED_CLAIM), 1_000_000, seed)
    cov = float(np.cov(data["u"], data["v"])[0, 1])
    return [within("cov(u, v)", cov, COV_UV, 0.003), at_least("|cov(u, v)| away from the claimed 0", abs(cov), 0.003)]
