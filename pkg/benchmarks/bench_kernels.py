"""Time the compiled kernels against their pure-Python twins.

    python3 benchmarks/bench_kernels.py [--steps N] [--draws N]

Both backends must agree bit for bit; the script checks that before timing.
"""
import argparse
import time

import numpy as np

from causal_kit import _fallback, rng

try:
    from causal_kit import _kernels
except ImportError:  # extension not built
    _kernels = None


def best_of(fn, repeat=3):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def trial_inputs(steps, arms=3, cells=2, seed=1):
    key = rng.stream_key(seed, "bench")
    u = rng.uniforms(key, 0, steps * (arms + 3)).reshape(steps, arms + 3)
    outcomes = np.ascontiguousarray(u[:, :arms] < np.linspace(0.3, 0.7, arms))
    cell = (u[:, arms] < 0.5).astype(np.int64)
    eps = np.maximum(0.05, 0.999 ** np.arange(steps))
    beta = np.full(steps, 0.1)
    return outcomes.astype(np.float64), cell, np.ascontiguousarray(u[:, arms + 1]), np.ascontiguousarray(u[:, arms + 2]), eps, beta, arms, cells


def run_trial_block(mod, inputs, conditional=1):
    outcomes, cell, ue, ua, eps, beta, k, c = inputs
    n = outcomes.shape[0]
    state = [np.zeros(k) for _ in range(4)] + [np.zeros((c, k)), np.zeros((c, k))]
    out = (np.empty(n, dtype=np.int8), np.empty(n, dtype=np.int64), np.empty(n))
    total = mod.run_block(outcomes, cell, ue, ua, eps, beta, 0, 0.0, conditional, *state, *out)
    return total, state, out


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--draws", type=int, default=2_000_000)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled kernels unavailable; only the fallback can run")
        return
    key = rng.stream_key(7, "bench")
    assert np.array_equal(_kernels.splitmix_block(key, 0, 1000), _fallback.splitmix_block(key, 0, 1000))
    inputs = trial_inputs(args.steps)
    small = tuple(x[:5000] if isinstance(x, np.ndarray) else x for x in inputs)
    ref, fast = run_trial_block(_fallback, small), run_trial_block(_kernels, small)
    assert ref[0] == fast[0] and all(np.array_equal(a, b) for a, b in zip(ref[1] + list(ref[2]), fast[1] + list(fast[2])))

    rows = []
    for name, mod in (("cython", _kernels), ("python", _fallback)):
        t_rng = best_of(lambda: mod.splitmix_block(key, 0, args.draws))
        t_trial = best_of(lambda: run_trial_block(mod, inputs), repeat=1 if mod is _fallback else 3)
        rows.append((name, t_rng, t_trial))
    print(f"{'backend':<8} {'splitmix (' + str(args.draws) + ')':>22} {'trial steps (' + str(args.steps) + ')':>24}")
    for name, t_rng, t_trial in rows:
        print(f"{name:<8} {t_rng * 1e3:>19.1f} ms {t_trial * 1e3:>21.1f} ms")
    print(f"speedup  {rows[1][1] / rows[0][1]:>20.1f}x {rows[1][2] / rows[0][2]:>23.1f}x")


if __name__ == "__main__":
    main()
