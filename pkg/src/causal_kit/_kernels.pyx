# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Every routine here has a line-for-line twin in _fallback.py."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, INFINITY
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t MIX1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t MIX2 = 0x94D049BB133111EBULL


def splitmix_block(uint64_t key, int64_t start, int64_t stop):
    cdef int64_t n = stop - start
    if n < 0:
        n = 0
    out = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] view = out
    cdef int64_t i
    cdef uint64_t z
    for i in range(n):
        z = key + <uint64_t>(start + i + 1) * GOLDEN
        z = (z ^ (z >> 30)) * MIX1
        z = (z ^ (z >> 27)) * MIX2
        view[i] = z ^ (z >> 31)
    return out


cdef inline void _update(double[::1] counts, double[::1] est, Py_ssize_t a,
                         double y, int ema, double eta) noexcept nogil:
    cdef double n = counts[a] + 1.0
    counts[a] = n
    if ema:
        est[a] = eta * est[a] + (1.0 - eta) * y
    else:
        est[a] = est[a] + (y - est[a]) / n


def run_block(const double[:, ::1] outcomes,
              const int64_t[::1] cells,
              const double[::1] u_explore,
              const double[::1] u_action,
              const double[::1] eps,
              const double[::1] beta,
              int ema, double eta, int conditional,
              double[::1] counts, double[::1] est,
              double[::1] xcounts, double[::1] xest,
              double[:, ::1] ccounts, double[:, ::1] cest,
              signed char[::1] out_e, int64_t[::1] out_a, double[::1] out_y):
    """Run consecutive trial steps in place; returns the summed outcome."""
    cdef Py_ssize_t T = outcomes.shape[0]
    cdef Py_ssize_t K = outcomes.shape[1]
    cdef Py_ssize_t t, i, a, c
    cdef double top, s, cum, y, b, total = 0.0
    cdef int any_known
    cdef double[::1] ref_est
    cdef double[::1] ref_cnt
    cdef double[::1] view = np.empty(K, dtype=np.float64)
    cdef double[::1] w = np.empty(K, dtype=np.float64)

    for t in range(T):
        c = cells[t]
        if conditional:
            ref_est = cest[c]
            ref_cnt = ccounts[c]
        else:
            ref_est = est
            ref_cnt = counts

        # unestimated arms borrow the current best estimate (optimistic start)
        any_known = 0
        top = 0.0
        for i in range(K):
            if ref_cnt[i] > 0.0:
                if not any_known or ref_est[i] > top:
                    top = ref_est[i]
                any_known = 1
        for i in range(K):
            if ref_cnt[i] > 0.0:
                view[i] = ref_est[i]
            else:
                view[i] = top

        if u_explore[t] < eps[t]:
            out_e[t] = 1
            a = <Py_ssize_t>(u_action[t] * K)
            if a >= K:
                a = K - 1
        else:
            out_e[t] = 0
            b = beta[t]
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
                for i in range(K):
                    if b == INFINITY:
                        w[i] = 1.0
                    else:
                        w[i] = exp((view[i] - top) / b)
                    s = s + w[i]
                a = K - 1
                cum = 0.0
                for i in range(K):
                    cum = cum + w[i] / s
                    if u_action[t] < cum:
                        a = i
                        break

        y = outcomes[t, a]
        out_a[t] = a
        out_y[t] = y
        total = total + y
        _update(counts, est, a, y, ema, eta)
        _update(ccounts[c], cest[c], a, y, ema, eta)
        if out_e[t]:
            _update(xcounts, xest, a, y, ema, eta)
    return total
