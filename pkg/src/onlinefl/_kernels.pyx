# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Must stay operation-for-operation identical to _pykernels."""

from libc.math cimport INFINITY

import numpy as np


cdef inline double _prob(double d, double q, double f, bint piecewise) noexcept nogil:
    cdef double x
    if d == INFINITY:
        return 1.0
    x = d / f
    if piecewise:
        if x <= 1.0:
            return q * x
        return 1.0
    x = q * x
    if x < 1.0:
        return x
    return 1.0


def rofl_matrix(const double[:, ::1] D, const long[::1] seq, const double[::1] u,
                double q, bint piecewise, double f,
                double[::1] dist_out, double[::1] prob_out,
                unsigned char[::1] opened_out, double[::1] assign_out):
    cdef Py_ssize_t n = seq.shape[0], L = D.shape[0]
    cdef Py_ssize_t t, j, loc
    cdef long n_open = 0
    cdef double total = 0.0, d, p, a
    cdef double[::1] best = np.full(L, INFINITY)
    with nogil:
        for t in range(n):
            loc = seq[t]
            d = best[loc]
            p = _prob(d, q, f, piecewise)
            dist_out[t] = d
            prob_out[t] = p
            if u[t] < p:
                opened_out[t] = 1
                n_open += 1
                a = 0.0
                for j in range(L):
                    if D[loc, j] < best[j]:
                        best[j] = D[loc, j]
            else:
                opened_out[t] = 0
                a = d
            assign_out[t] = a
            total += a
    return n_open, total


def rofl_hub(const double[::1] w, const long[::1] seq, const double[::1] u,
             double q, bint piecewise, double f,
             double[::1] dist_out, double[::1] prob_out,
             unsigned char[::1] opened_out, double[::1] assign_out):
    cdef Py_ssize_t n = seq.shape[0], L = w.shape[0]
    cdef Py_ssize_t t, loc
    cdef long n_open = 0
    cdef double total = 0.0, d, p, a
    cdef double minw = INFINITY
    cdef unsigned char[::1] is_open = np.zeros(L, dtype=np.uint8)
    with nogil:
        for t in range(n):
            loc = seq[t]
            if is_open[loc]:
                d = 0.0
            else:
                d = w[loc] + minw
            p = _prob(d, q, f, piecewise)
            dist_out[t] = d
            prob_out[t] = p
            if u[t] < p:
                opened_out[t] = 1
                n_open += 1
                a = 0.0
                is_open[loc] = 1
                if w[loc] < minw:
                    minw = w[loc]
            else:
                opened_out[t] = 0
                a = d
            assign_out[t] = a
            total += a
    return n_open, total


def rofl_instrumented(const double[:, ::1] D, const long[::1] dem, const long[::1] loc_of,
                      const long[::1] cluster_of, const double[::1] dstar,
                      const long[::1] members, const long[::1] offsets,
                      const double[::1] u, const double[::1] u_ana,
                      double q, bint piecewise, double f,
                      long[::1] T_out, long[::1] size_out, double[::1] dvt_out,
                      double[::1] sum_ct_out, double[::1] p_before_out, double[::1] d_before_out):
    """Replay one run while flipping the analysis coin.

    ``dem`` is the arrival order as demand ids and ``loc_of`` maps a demand id
    to its row of ``D``. ``members[offsets[c]:offsets[c+1]]`` lists the demand ids of cluster ``c``.
    ``T_out[c] == n`` means no balanced facility opened in cluster ``c``.
    """
    cdef Py_ssize_t n = dem.shape[0], L = D.shape[0], C = offsets.shape[0] - 1
    cdef Py_ssize_t t, j, loc, c, i, k, m
    cdef long n_open = 0
    cdef double total = 0.0, d, p, a, pw, pu, s
    cdef double[::1] best = np.full(L, INFINITY)
    cdef Py_ssize_t N = cluster_of.shape[0]
    cdef unsigned char[::1] arrived = np.zeros(N + 1, dtype=np.uint8)
    cdef unsigned char[::1] stopped = np.zeros(C + 1, dtype=np.uint8)
    with nogil:
        for c in range(C):
            T_out[c] = n
            size_out[c] = 0
            dvt_out[c] = 0.0
            sum_ct_out[c] = 0.0
            p_before_out[c] = 0.0
            d_before_out[c] = 0.0
        for t in range(n):
            i = dem[t]
            loc = loc_of[i]
            c = cluster_of[i]
            d = best[loc]
            p = _prob(d, q, f, piecewise)
            if not stopped[c]:
                p_before_out[c] += p
                d_before_out[c] += dstar[i]
            if u[t] < p:
                if not stopped[c]:
                    pw = p
                    for k in range(offsets[c], offsets[c + 1]):
                        m = members[k]
                        if arrived[m] or dstar[m] > dstar[i]:
                            continue
                        pu = _prob(best[loc_of[m]], q, f, piecewise)
                        if pu < pw:
                            pw = pu
                    if u_ana[t] < pw / p:
                        stopped[c] = 1
                        T_out[c] = t
                        dvt_out[c] = dstar[i]
                        s = 0.0
                        for k in range(offsets[c], offsets[c + 1]):
                            m = members[k]
                            if not arrived[m]:
                                size_out[c] += 1
                                s += dstar[m]
                        sum_ct_out[c] = s
                n_open += 1
                a = 0.0
                for j in range(L):
                    if D[loc, j] < best[j]:
                        best[j] = D[loc, j]
            else:
                a = d
            total += a
            arrived[i] = 1
    return n_open, total
