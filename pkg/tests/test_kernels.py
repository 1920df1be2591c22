import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from causal_kit import _fallback

try:
    from causal_kit import _kernels
except ImportError:  # extension not built
    _kernels = None

pytestmark = pytest.mark.skipif(_kernels is None, reason="compiled kernels not built")

betas = st.sampled_from([0.0, math.inf, 0.05, 1.0, 7.5])


def _run(mod, outcomes, cells, ue, ua, eps, beta, ema, eta, conditional, n_cells):
    t, k = outcomes.shape
    state = [np.zeros(k) for _ in range(4)] + [np.zeros((n_cells, k)), np.zeros((n_cells, k))]
    out = [np.empty(t, dtype=np.int8), np.empty(t, dtype=np.int64), np.empty(t)]
    total = mod.run_block(outcomes, cells, ue, ua, eps, beta, ema, eta, conditional, *state, *out)
    return total, state, out


@given(
    st.integers(1, 200), st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**32),
    betas, st.booleans(), st.sampled_from([0.0, 0.5, 0.9]), st.booleans(),
)
def test_compiled_trial_block_is_bit_identical(t, k, n_cells, seed, beta, ema, eta, conditional):
    gen = np.random.default_rng(seed)
    outcomes = np.ascontiguousarray(gen.normal(size=(t, k)))
    cells = gen.integers(0, n_cells, size=t).astype(np.int64)
    ue, ua = gen.random(t), gen.random(t)
    eps = gen.random(t) * (gen.random() < 0.7)
    beta_arr = np.full(t, beta)
    a = _run(_fallback, outcomes, cells, ue, ua, eps, beta_arr, int(ema), eta, int(conditional), n_cells)
    b = _run(_kernels, outcomes, cells, ue, ua, eps, beta_arr, int(ema), eta, int(conditional), n_cells)
    assert a[0] == b[0]
    for x, y in zip(a[1] + a[2], b[1] + b[2]):
        assert np.array_equal(x, y)


def test_greedy_breaks_ties_on_first_arm():
    t = 5
    outcomes = np.zeros((t, 3))
    total, state, (e, a, y) = _run(_kernels, outcomes, np.zeros(t, dtype=np.int64), np.full(t, 0.9),
                                   np.full(t, 0.99), np.zeros(t), np.zeros(t), 0, 0.0, 0, 1)
    assert list(a) == [0] * t and not e.any()
