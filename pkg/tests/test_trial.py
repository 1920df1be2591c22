import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from causal_kit import kernels
from causal_kit.dsl import parse_scm
from causal_kit.exact import ate_exact
from causal_kit.sampling import Dataset
from causal_kit.trial import (
    Curve,
    Environment,
    Schedule,
    ScheduleError,
    bias_check,
    conditional_estimates,
    fit_contextual,
    init_state,
    mixture_pmf,
    policy_probs,
    replay_estimates,
    run_trial,
    step,
)

TWO_ARMS = """
var a : {0, 1} ~ bernoulli(0.5);
var y : {0, 1} cpt | a=0 -> 0.8, 0.2 | a=1 -> 0.2, 0.8;
"""
SWAPPED = """
var a : {0, 1} ~ bernoulli(0.5);
var y : {0, 1} cpt | a=0 -> 0.1, 0.9 | a=1 -> 0.9, 0.1;
"""
# the action only helps when the marker x' is present
MARKER = """
var x' : {0, 1} ~ bernoulli(0.5);
var a : {0, 1} ~ bernoulli(0.5);
var y : {0, 1} cpt | a=0, x'=0 -> 0.7, 0.3 | a=1, x'=0 -> 0.7, 0.3
                   | a=0, x'=1 -> 0.8, 0.2 | a=1, x'=1 -> 0.2, 0.8;
"""


def _single_arm(outcomes, ema=False, eta=0.0):
    y = np.asarray(outcomes, dtype=np.float64).reshape(-1, 1)
    t = y.shape[0]
    state = [np.zeros(1) for _ in range(4)] + [np.zeros((1, 1)), np.zeros((1, 1))]
    out = [np.empty(t, dtype=np.int8), np.empty(t, dtype=np.int64), np.empty(t)]
    kernels.run_block(y, np.zeros(t, dtype=np.int64), np.full(t, 0.5), np.full(t, 0.5), np.full(t, 1.0),
                      np.full(t, math.inf), int(ema), eta, 0, *state, *out)
    return state[1][0]


def test_running_mean_and_ema_examples():
    assert _single_arm([1, 0, 1]) == pytest.approx(2 / 3, abs=1e-15)
    assert _single_arm([1, 1], ema=True, eta=0.5) == 0.75


def test_schedule_curves():
    assert Curve.parse("step:3").values(1, 6).tolist() == [1, 1, 0, 0, 0]
    assert Curve.parse("const:0.1")(7) == 0.1
    geom = Curve.parse("geom:1,0.5,0.2")
    assert [geom(t) for t in (1, 2, 3, 4)] == [1.0, 0.5, 0.25, 0.2]
    for bad in ("step", "const:1,2", "geom:1,0,0", "cosine:1", "const:x"):
        with pytest.raises(ScheduleError):
            Curve.parse(bad)
    with pytest.raises(ScheduleError):
        Schedule.parse("const:1.5", "const:1").block(1, 2)


def test_policy_examples():
    q = mixture_pmf(np.array([1.0, 0.0]), np.ones(2), 0.2, 1.0)
    assert q[0] == pytest.approx(0.2 * 0.5 + 0.8 * math.e / (math.e + 1), abs=1e-15)
    assert mixture_pmf(np.array([3.0, 0.0, 1.0]), np.ones(3), 1.0, 1.0).tolist() == [1 / 3] * 3
    assert mixture_pmf(np.array([3.0, 0.0, 1.0]), np.ones(3), 0.0, 0.0).tolist() == [1.0, 0.0, 0.0]
    assert mixture_pmf(np.array([3.0, 0.0]), np.ones(2), 0.0, math.inf).tolist() == [0.5, 0.5]
    # ties under the argmax limit go to the first arm
    assert mixture_pmf(np.array([1.0, 1.0]), np.ones(2), 0.0, 0.0).tolist() == [1.0, 0.0]


def test_untried_arms_are_treated_optimistically():
    q = mixture_pmf(np.array([0.5, 0.0]), np.array([3.0, 0.0]), 0.0, 0.0)
    assert q.tolist() == [1.0, 0.0]
    q = mixture_pmf(np.array([0.5, 0.0]), np.array([3.0, 0.0]), 0.0, 1.0)
    assert q.tolist() == [0.5, 0.5]


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=5), st.floats(0, 1),
       st.one_of(st.just(0.0), st.just(math.inf), st.floats(1e-3, 100)), st.floats(-100, 100))
def test_policy_is_a_pmf_and_shift_invariant(est, eps, beta, shift):
    est = np.array(est)
    counts = np.ones(est.size)
    q = mixture_pmf(est, counts, eps, beta)
    assert (q >= 0).all() and abs(q.sum() - 1.0) <= 1e-12
    moved = mixture_pmf(est + shift, counts, eps, beta)
    if beta == 0.0:
        # argmax can flip when a shift rounds two estimates together
        return
    assert np.allclose(q, moved, atol=1e-12, rtol=0)


def test_policy_probs_reads_the_schedule():
    env = Environment(parse_scm(TWO_ARMS), "a", "y", rng=1)
    state = init_state(env)
    assert policy_probs(state, Schedule.parse("step:10", "const:1"), t=1).tolist() == [0.5, 0.5]


def test_rct_recovers_interventional_means(vaccine):
    env = Environment(vaccine, "a", "y", rng=3)
    state, report = run_trial(env, Schedule.parse("step:100000", "const:1"), 100_000, rng=4)
    truth = env.do_means()
    assert truth[1.0] - truth[0.0] == pytest.approx(ate_exact(vaccine, "a", "y"), abs=1e-12)
    for arm in env.arms:
        assert report.estimates[arm] == pytest.approx(truth[arm], abs=0.02)
    # the step schedule switches off at t = T, so only the last step exploits
    assert report.bias.explore_fraction == pytest.approx(1 - 1e-5, abs=1e-15)


def test_full_exploration_has_zero_bias(vaccine):
    env = Environment(vaccine, "a", "y", rng=3)
    _, report = run_trial(env, Schedule.rct(), 5000, rng=4)
    assert all(b == 0.0 for b in report.bias.bias.values())
    assert report.bias.explore_fraction == 1.0


def test_replay_and_running_estimates_agree():
    env = Environment(parse_scm(MARKER), "a", "y", ("x'",), rng=5)
    sched = Schedule.parse("geom:1,0.99,0.1", "const:0.2")
    state, report = run_trial(env, sched, 3000, conditional=True, rng=6)
    again, _ = run_trial(env, sched, 3000, conditional=True, rng=6)
    for name, col in state.log().items():
        assert np.array_equal(col, again.log()[name])
    replay = replay_estimates(state)
    for arm in env.arms:
        assert report.estimates[arm] == pytest.approx(replay[arm], abs=1e-12)
    for key in (0, 1):
        cond, rep = conditional_estimates(state, env, key), replay_estimates(state, env, key)
        for arm in env.arms:
            assert cond[arm] == pytest.approx(rep[arm], abs=1e-12)


def test_stepping_matches_one_run():
    env = Environment(parse_scm(TWO_ARMS), "a", "y", rng=2)
    sched = Schedule.parse("const:0.3", "const:0.5")
    state = init_state(env, rng=9)
    for _ in range(50):
        step(state, sched, env)
    whole, _ = run_trial(env, sched, 50, rng=9)
    assert np.array_equal(state.log()["a"], whole.log()["a"])
    assert np.array_equal(state.est, whole.est)


def test_greedy_start_is_flagged_unexplored():
    env = Environment(parse_scm(TWO_ARMS), "a", "y", rng=2)
    state, report = run_trial(env, Schedule.parse("const:0", "const:0"), 200, rng=1)
    assert report.unexplored == list(env.arms)
    assert all(b is None for b in report.bias.bias.values())
    assert report.to_dict()["bias_check"]["bias"] == {"0": None, "1": None}


def test_unselected_arm_is_unestimated():
    scm = parse_scm("var a : {0, 1, 2} ~ uniform(0, 1, 2); var y := a;")
    env = Environment(scm, "a", "y", rng=2)
    # beta = 0 and no exploration: arm 0 is tried, then the untried arms in order
    state, report = run_trial(env, Schedule.parse("const:0", "const:0"), 2, rng=1)
    assert state.estimates()[2.0] is None and 2.0 in report.unestimated


def test_ema_tracks_drift_better():
    before, after = parse_scm(TWO_ARMS), parse_scm(SWAPPED)
    env = Environment(before, "a", "y", rng=7, drift=(2001, after))
    rct = Schedule.rct()
    _, rec = run_trial(env, rct, 4000, rng=8)
    _, ema = run_trial(env, rct, 4000, update_mode="ema", eta=0.99, rng=8)
    truth = env.do_means(after_drift=True)
    dist = lambda r: sum(abs(r.estimates[a] - truth[a]) for a in env.arms)  # noqa: E731
    assert dist(ema) < dist(rec)


def test_conditional_effect_only_with_marker():
    scm = parse_scm(MARKER)
    env = Environment(scm, "a", "y", ("x'",), rng=11)
    state, _ = run_trial(env, Schedule.rct(), 40_000, conditional=True, rng=12)
    on, off = conditional_estimates(state, env, 1), conditional_estimates(state, env, 0)
    assert on[1.0] - on[0.0] == pytest.approx(ate_exact(scm, "a", "y", condition={"x'": 1}), abs=0.03)
    assert off[1.0] - off[0.0] == pytest.approx(0.0, abs=0.03)
    assert conditional_estimates(state, env, 5) == {0.0: None, 1.0: None}


def test_constant_covariate_reduces_to_unconditional():
    scm = parse_scm("var x' : {0, 1} := 1;" + TWO_ARMS)
    env = Environment(scm, "a", "y", ("x'",), rng=1)
    state, report = run_trial(env, Schedule.rct(), 500, conditional=True, rng=2)
    cond = conditional_estimates(state, env, 1)
    for arm in env.arms:
        assert cond[arm] == pytest.approx(report.estimates[arm], abs=1e-12)


def test_bias_is_positive_under_exploitation():
    env = Environment(parse_scm(MARKER), "a", "y", ("x'",), rng=3)
    state, _ = run_trial(env, Schedule.parse("const:0.2", "const:0"), 3000, conditional=True, rng=4)
    report = bias_check(state)
    assert any(b is not None and b > 0 for b in report.bias.values())
    assert report.effective_explore == pytest.approx(0.2 * 3000, abs=1e-9)


def test_action_must_be_discrete():
    from causal_kit.scm import ScmError

    with pytest.raises(ScmError):
        Environment(parse_scm("var a ~ normal(0, 1); var y ~ normal(a, 1);"), "a", "y")


def test_log_csv():
    env = Environment(parse_scm(MARKER), "a", "y", ("x'",), rng=3)
    state, _ = run_trial(env, Schedule.rct(), 3, rng=1)
    lines = state.log_csv().splitlines()
    assert lines[0] == "t,e,a,y,x'" and len(lines) == 4


def test_contextual_zero_dim_is_per_arm_mean():
    data = Dataset(["a", "y"], {"a": np.array([0.0, 0.0, 1.0, 1.0, 1.0]), "y": np.array([1.0, 3.0, 2.0, 4.0, 9.0])})
    model = fit_contextual(data)
    assert model.predict(0, ()) == pytest.approx(2.0, abs=1e-12)
    assert model.predict(1, ()) == pytest.approx(5.0, abs=1e-12)


def test_contextual_errors():
    data = Dataset(["a", "x", "y"], {"a": np.zeros(2), "x": np.arange(2.0), "y": np.arange(2.0)})
    with pytest.raises(ValueError):
        fit_contextual(data, features=("x",), mode="action_context")
    with pytest.raises(ValueError):
        fit_contextual(data, features=("x",), mode="bogus")
