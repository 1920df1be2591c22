"""Pure-Python twins of the compiled kernels in ``_kernels.pyx``.

The arithmetic is written in the same order as the Cython code so both paths
produce bit-identical results.
"""
import math

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def splitmix_block(key, start, stop):
    n = max(int(stop) - int(start), 0)
    counter = np.arange(int(start) + 1, int(start) + 1 + n, dtype=np.uint64)
    z = np.uint64(key) + counter * _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _update(counts, est, a, y, ema, eta):
    n = counts[a] + 1.0
    counts[a] = n
    if ema:
        est[a] = eta * est[a] + (1.0 - eta) * y
    else:
        est[a] = est[a] + (y - est[a]) / n


def run_block(outcomes, cells, u_explore, u_action, eps, beta, ema, eta,
              conditional, counts, est, xcounts, xest, ccounts, cest,
              out_e, out_a, out_y):
    T, K = outcomes.shape
    # plain lists are much faster than numpy scalars in this loop
    Y = outcomes.tolist()
    cells_l = cells.tolist()
    ue = u_explore.tolist()
    ua = u_action.tolist()
    eps_l = eps.tolist()
    beta_l = beta.tolist()
    cnt = counts.tolist()
    est_l = est.tolist()
    xcnt = xcounts.tolist()
    xest_l = xest.tolist()
    ccnt = ccounts.tolist()
    cest_l = cest.tolist()
    e_out = [0] * T
    a_out = [0] * T
    y_out = [0.0] * T
    total = 0.0
    exp = math.exp
    inf = math.inf

    for t in range(T):
        c = cells_l[t]
        if conditional:
            ref_est = cest_l[c]
            ref_cnt = ccnt[c]
        else:
            ref_est = est_l
            ref_cnt = cnt

        any_known = False
        top = 0.0
        for i in range(K):
            if ref_cnt[i] > 0.0:
                if not any_known or ref_est[i] > top:
                    top = ref_est[i]
                any_known = True
        view = [ref_est[i] if ref_cnt[i] > 0.0 else top for i in range(K)]

        if ue[t] < eps_l[t]:
            e = 1
            a = int(ua[t] * K)
            if a >= K:
                a = K - 1
        else:
            e = 0
            b = beta_l[t]
            if b == 0.0:
                a = 0
                for i in range(1, K):
                    if view[i] > view[a]:
                        a = i
            else:
                top = view[0]
                for i in range(1, K):
                    if view[i] > top:
                        top = view[i]
                s = 0.0
                w = [0.0] * K
                for i in range(K):
                    if b == inf:
                        w[i] = 1.0
                    else:
                        w[i] = exp((view[i] - top) / b)
                    s = s + w[i]
                a = K - 1
                cum = 0.0
                for i in range(K):
                    cum = cum + w[i] / s
                    if ua[t] < cum:
                        a = i
                        break

        y = Y[t][a]
        e_out[t] = e
        a_out[t] = a
        y_out[t] = y
        total = total + y
        _update(cnt, est_l, a, y, ema, eta)
        _update(ccnt[c], cest_l[c], a, y, ema, eta)
        if e:
            _update(xcnt, xest_l, a, y, ema, eta)

    counts[:] = cnt
    est[:] = est_l
    xcounts[:] = xcnt
    xest[:] = xest_l
    if ccounts.size:
        ccounts[:, :] = ccnt
        cest[:, :] = cest_l
    out_e[:] = e_out
    out_a[:] = a_out
    out_y[:] = y_out
    return total
