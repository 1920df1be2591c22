import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from causal_kit.estimators import (
    METHODS,
    EstimationError,
    OutcomeModel,
    PositivityError,
    PropensityModel,
    RankDeficiencyError,
    estimate_did,
    estimate_dml,
    estimate_doubly_robust,
    estimate_ipw,
    estimate_iv_2sls,
    estimate_matching,
    estimate_naive,
    estimate_ols,
    estimate_rdd,
    estimate_regression_adjustment,
    fit_least_squares,
    fit_propensity,
)
from causal_kit.sampling import Dataset


def _data(**cols):
    return Dataset(list(cols), {k: np.asarray(v, dtype=np.float64) for k, v in cols.items()})


def _vaccine_cells():
    # one row per (x, a, y) cell with its exact joint probability as weight
    rows = []
    for x, a, y in itertools.product((0, 1), repeat=3):
        pa = 0.2 + 0.6 * x
        py = 0.1 + 0.3 * a + 0.5 * x
        rows.append((x, a, y, 0.5 * (pa if a else 1 - pa) * (py if y else 1 - py)))
    x, a, y, w = (np.array(c, dtype=float) for c in zip(*rows))
    return _data(x=x, a=a, y=y), w


def test_least_squares_exact():
    x = np.arange(10.0)
    z = (x % 3) ** 2
    fit = fit_least_squares(_data(x=x, z=z, y=1.5 + 2 * x - 0.5 * z), "y", ["x", "z"])
    assert fit.intercept == pytest.approx(1.5, abs=1e-12)
    assert fit.weights["x"] == pytest.approx(2.0, abs=1e-12)
    assert fit.weights["z"] == pytest.approx(-0.5, abs=1e-12)


def test_least_squares_simple_cases():
    x = np.arange(6.0)
    fit = fit_least_squares(_data(x=x, y=2 * x), "y", ["x"])
    assert fit.weights["x"] == pytest.approx(2.0, abs=1e-12) and fit.intercept == pytest.approx(0.0, abs=1e-12)
    fit = fit_least_squares(_data(x=x, y=np.full(6, 3.0)), "y", ["x"])
    assert fit.weights["x"] == pytest.approx(0.0, abs=1e-12) and fit.intercept == pytest.approx(3.0, abs=1e-12)


def test_least_squares_rank_errors():
    x = np.arange(10.0)
    with pytest.raises(RankDeficiencyError):
        fit_least_squares(_data(x=x, c=np.ones(10), y=x), "y", ["x", "c"])
    with pytest.raises(RankDeficiencyError) as err:
        fit_least_squares(_data(x=x, x2=2 * x, y=x), "y", ["x", "x2"])
    assert "x2" in str(err.value)


def test_propensity_table_and_logistic(vaccine_data):
    table = fit_propensity(vaccine_data, "a", ["x"])
    assert table.table[(0.0,)] == pytest.approx(0.2, abs=0.01)
    assert table.table[(1.0,)] == pytest.approx(0.8, abs=0.01)
    logit = fit_propensity(vaccine_data, "a", ["x"], kind="logistic")
    p = logit.predict(_data(x=[0.0, 1.0]))
    assert p[0] == pytest.approx(0.2, abs=0.02)
    assert p[1] == pytest.approx(0.8, abs=0.02)


def test_separation_warns_and_clips():
    x = np.repeat([0.0, 1.0], 50)
    model = fit_propensity(_data(x=x, a=x), "a", ["x"], kind="logistic", clip=0.01)
    assert any("separated" in w for w in model.warnings)
    p = model.predict(_data(x=[0.0, 1.0]))
    assert p[0] == pytest.approx(0.01) and p[1] == pytest.approx(0.99)


def test_naive_is_biased_and_ipw_is_not(vaccine_data):
    naive = estimate_naive(vaccine_data, "a", "y", bootstrap_reps=0)
    ipw = estimate_ipw(vaccine_data, "a", "y", covariates=["x"], bootstrap_reps=0)
    assert abs(naive.estimate - 0.30) > 0.2
    assert ipw.estimate == pytest.approx(0.30, abs=0.02)


def test_exact_models_on_weighted_cells():
    data, w = _vaccine_cells()
    truth_p = PropensityModel.from_table(["x"], {0.0: 0.2, 1.0: 0.8})
    truth_m = OutcomeModel.from_table(["x"], {(a, x): 0.1 + 0.3 * a + 0.5 * x for a in (0, 1) for x in (0, 1)})
    dr = estimate_doubly_robust(data, "a", "y", ["x"], outcome_model=truth_m, propensity=truth_p, weights=w, bootstrap_reps=0)
    assert dr.estimate == pytest.approx(0.30, abs=1e-9)
    ipw = estimate_ipw(data, "a", "y", truth_p, weights=w, bootstrap_reps=0)
    assert ipw.estimate == pytest.approx(0.30, abs=1e-9)


def test_ipw_with_true_and_flat_propensity(vaccine_data):
    truth = PropensityModel.from_table(["x"], {0.0: 0.2, 1.0: 0.8})
    assert estimate_ipw(vaccine_data, "a", "y", truth, bootstrap_reps=0).estimate == pytest.approx(0.30, abs=0.02)
    flat = PropensityModel.constant(0.5)
    assert estimate_ipw(vaccine_data, "a", "y", flat, bootstrap_reps=0).estimate == pytest.approx(0.60, abs=0.02)


def test_ipw_randomized_with_empirical_rate():
    gen = np.random.default_rng(2)
    a = (gen.random(400) < 0.3).astype(float)
    y = gen.normal(size=400) + a
    d = _data(a=a, y=y)
    naive = estimate_naive(d, "a", "y", bootstrap_reps=0).estimate
    for normalize in (False, True):
        ipw = estimate_ipw(d, "a", "y", PropensityModel.constant(a.mean(), clip=0.0), normalize=normalize, bootstrap_reps=0)
        assert ipw.estimate == pytest.approx(naive, abs=1e-12)


def test_doubly_robust_either_model_right(vaccine_data):
    wrong_m = OutcomeModel.constant(0.0)
    wrong_p = PropensityModel.constant(0.5)
    right_p = fit_propensity(vaccine_data, "a", ["x"])
    a = estimate_doubly_robust(vaccine_data, "a", "y", ["x"], outcome_model=wrong_m, propensity=right_p, bootstrap_reps=0)
    b = estimate_doubly_robust(vaccine_data, "a", "y", ["x"], propensity=wrong_p, bootstrap_reps=0)
    assert a.estimate == pytest.approx(0.30, abs=0.02)
    assert b.estimate == pytest.approx(0.30, abs=0.02)


def test_regression_adjustment(vaccine_data):
    r = estimate_regression_adjustment(vaccine_data, "a", "y", ["x"], bootstrap_reps=0)
    assert r.estimate == pytest.approx(0.30, abs=0.02)
    with pytest.raises(PositivityError):
        estimate_regression_adjustment(_data(a=[1, 1], y=[0, 1]), "a", "y", bootstrap_reps=0)


def test_matching_on_single_cell_equals_naive():
    gen = np.random.default_rng(0)
    a = np.array([1.0, 0.0] * 50)
    y = gen.normal(size=100) + a
    d = _data(a=a, y=y, x=np.zeros(100))
    _, rep = estimate_matching(d, "a", "y", ["x"], strategy="cycle", bootstrap_reps=0)
    naive = estimate_naive(d, "a", "y", bootstrap_reps=0)
    assert rep.estimate == pytest.approx(naive.estimate, abs=1e-9)


def test_matching_removes_confounding(vaccine_data):
    _, rep = estimate_matching(vaccine_data, "a", "y", ["x"], bootstrap_reps=0, rng=1)
    assert rep.estimate == pytest.approx(0.30, abs=0.02)


def test_iv_with_self_instrument_is_ols():
    gen = np.random.default_rng(3)
    a = gen.normal(size=500)
    y = 2 * a + gen.normal(size=500)
    d = _data(a=a, y=y)
    iv = estimate_iv_2sls(d, "a", "y", "a", bootstrap_reps=0)
    ols = estimate_ols(d, "a", "y", bootstrap_reps=0)
    assert iv.estimate == pytest.approx(ols.estimate, abs=1e-9)


def test_iv_constant_instrument_warns():
    d = _data(z=np.ones(50), a=np.arange(50.0), y=np.arange(50.0))
    rep = estimate_iv_2sls(d, "a", "y", "z", bootstrap_reps=0)
    assert np.isnan(rep.estimate) and rep.warnings


def test_did_no_change_is_zero():
    gen = np.random.default_rng(5)
    y = gen.normal(size=40)
    rep = estimate_did(_data(a=np.tile([0.0, 1.0], 20), pre=y, post=y), "a", "pre", "post", bootstrap_reps=0)
    assert rep.estimate == 0.0
    with pytest.raises(EstimationError):
        estimate_did(_data(a=np.ones(4), pre=y[:4], post=y[:4]), "a", "pre", "post", bootstrap_reps=0)


def test_rdd_needs_both_sides():
    x = np.linspace(0.01, 1, 50)
    with pytest.raises(EstimationError):
        estimate_rdd(_data(x=x, y=x), "x", "y", bandwidth=0.5, bootstrap_reps=0)
    xs = np.linspace(-1, 1, 201)
    rep = estimate_rdd(_data(x=xs, y=xs + 2 * (xs >= 0)), "x", "y", bandwidth=0.5, bootstrap_reps=0)
    assert rep.estimate == pytest.approx(2.0, abs=1e-9)


def test_dml():
    gen = np.random.default_rng(8)
    x = gen.normal(size=2000)
    with pytest.raises(EstimationError):
        estimate_dml(_data(x=x, a=x, y=x), "a", "y", ["x"], bootstrap_reps=0, rng=1)
    a = gen.normal(size=2000)
    y = 1.5 * a + x + gen.normal(size=2000)
    d = _data(x=x, a=a, y=y)
    dml = estimate_dml(d, "a", "y", ["x"], bootstrap_reps=0, rng=1)
    ols = estimate_ols(d, "a", "y", ["x"], bootstrap_reps=0)
    assert dml.estimate == pytest.approx(ols.estimate, abs=0.02)


def test_bootstrap_is_seeded(vaccine_data):
    small = vaccine_data.take(np.arange(2000))
    a = estimate_naive(small, "a", "y", bootstrap_reps=50, rng=4)
    b = estimate_naive(small, "a", "y", bootstrap_reps=50, rng=4)
    assert a.std_error == b.std_error and a.std_error > 0


def test_report_json_has_no_nan():
    d = _data(z=np.ones(50), a=np.arange(50.0), y=np.arange(50.0))
    assert '"estimate": null' in estimate_iv_2sls(d, "a", "y", "z", bootstrap_reps=0).to_json()


def test_method_registry():
    assert set(METHODS) == {"naive", "ols", "regression", "ipw", "dr", "matching", "iv", "did", "rdd", "dml"}


@given(st.floats(-5, 5), st.floats(0.1, 5), st.integers(0, 1000))
def test_ols_is_affine_equivariant(shift, scale, seed):
    gen = np.random.default_rng(seed)
    a = gen.integers(0, 2, 60).astype(float)
    a[:2] = (0, 1)
    y = gen.normal(size=60) + a
    base = estimate_ols(_data(a=a, y=y), "a", "y", bootstrap_reps=0).estimate
    moved = estimate_ols(_data(a=a, y=scale * y + shift), "a", "y", bootstrap_reps=0).estimate
    assert moved == pytest.approx(scale * base, abs=1e-9)
