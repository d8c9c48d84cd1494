# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the pure-numpy kernels.

Every arithmetic expression mirrors pure.py operation for operation, and the
extension is compiled without FMA contraction, so results are bit-identical
across backends. Keep changes in lockstep with pure.py.
"""

from libc.math cimport INFINITY

import numpy as np

cimport numpy as cnp

NAME = "fast"

# path buffers for the tree recursion; depth is capped well below this
DEF MAX_PATH = 64


def best_split_column(const double[:] xs, const double[:] gs, const double[:] hs,
                      double lam, double gamma, double min_child_weight):
    """Scan one presorted feature column for the highest-gain split.

    Same contract as the pure twin: (gain, threshold, n_left), first best
    position wins, gain = -inf when no admissible split exists.
    """
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t i, best_i = -1
    cdef double total_g = 0.0, total_h = 0.0
    cdef double gl = 0.0, hl = 0.0, gr, hr
    cdef double parent, raw, gain, best = -INFINITY
    if n < 2:
        return -INFINITY, 0.0, 0
    with nogil:
        for i in range(n):
            total_g += gs[i]
            total_h += hs[i]
        parent = total_g * total_g / (total_h + lam)
        for i in range(n - 1):
            gl += gs[i]
            hl += hs[i]
            if not xs[i] < xs[i + 1]:
                continue
            hr = total_h - hl
            if hl < min_child_weight or hr < min_child_weight:
                continue
            gr = total_g - gl
            raw = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent
            gain = 0.5 * raw - gamma
            if gain > best:
                best = gain
                best_i = i
    if best_i < 0:
        return -INFINITY, 0.0, 0
    return best, 0.5 * (xs[best_i] + xs[best_i + 1]), <int> (best_i + 1)


def svr_select(const double[:] f, const double[:] beta, double c, double eps):
    """Maximal violating pair over the dual variables; see the pure twin."""
    cdef Py_ssize_t n = f.shape[0]
    cdef Py_ssize_t k, i = 0, j = 0
    cdef double v, up = -INFINITY, down = INFINITY
    with nogil:
        for k in range(n):
            if beta[k] < c:
                v = f[k] - eps if beta[k] >= 0.0 else f[k] + eps
                if v > up:
                    up = v
                    i = k
            if beta[k] > -c:
                v = f[k] + eps if beta[k] <= 0.0 else f[k] - eps
                if v < down:
                    down = v
                    j = k
    return <int> i, up, <int> j, down


cdef void _recurse(Py_ssize_t node,
                   Py_ssize_t* d_par, double* z_par, double* o_par, double* w_par,
                   int plen, double pz, double po, Py_ssize_t pi,
                   const cnp.int64_t[:] left, const cnp.int64_t[:] right,
                   const cnp.int64_t[:] feature, const double[:] threshold,
                   const double[:] value, const double[:] cover,
                   const double[:] x, double[:] phi, double scale) noexcept nogil:
    cdef Py_ssize_t d[MAX_PATH]
    cdef double z[MAX_PATH]
    cdef double o[MAX_PATH]
    cdef double w[MAX_PATH]
    cdef int i, j, k, length
    cdef double s, nxt, t, one, zero, leaf, iz, io, rc
    cdef Py_ssize_t f, hot, cold

    for i in range(plen):
        d[i] = d_par[i]
        z[i] = z_par[i]
        o[i] = o_par[i]
        w[i] = w_par[i]
    # extend with the incoming edge fractions
    d[plen] = pi
    z[plen] = pz
    o[plen] = po
    w[plen] = 1.0 if plen == 0 else 0.0
    for i in range(plen - 1, -1, -1):
        w[i + 1] += po * w[i] * <double> (i + 1) / <double> (plen + 1)
        w[i] = pz * w[i] * <double> (plen - i) / <double> (plen + 1)
    length = plen + 1

    if left[node] < 0:
        leaf = value[node]
        for i in range(1, length):
            one = o[i]
            zero = z[i]
            s = 0.0
            if one != 0.0:
                nxt = w[length - 1]
                for j in range(length - 2, -1, -1):
                    t = nxt * <double> length / (<double> (j + 1) * one)
                    s += t
                    nxt = w[j] - t * zero * <double> (length - 1 - j) / <double> length
            else:
                for j in range(length - 2, -1, -1):
                    s += w[j] * <double> length / (zero * <double> (length - 1 - j))
            phi[d[i]] += scale * s * (o[i] - z[i]) * leaf
        return

    f = feature[node]
    if x[f] < threshold[node]:
        hot = left[node]
        cold = right[node]
    else:
        hot = right[node]
        cold = left[node]
    iz = 1.0
    io = 1.0
    k = -1
    for i in range(length):
        if d[i] == f:
            k = i
            break
    if k >= 0:
        iz = z[k]
        io = o[k]
        # unwind element k out of the path
        one = o[k]
        zero = z[k]
        nxt = w[length - 1]
        if one != 0.0:
            for j in range(length - 2, -1, -1):
                t = w[j]
                w[j] = nxt * <double> length / (<double> (j + 1) * one)
                nxt = t - w[j] * zero * <double> (length - 1 - j) / <double> length
        else:
            for j in range(length - 2, -1, -1):
                w[j] = w[j] * <double> length / (zero * <double> (length - 1 - j))
        for j in range(k, length - 1):
            d[j] = d[j + 1]
            z[j] = z[j + 1]
            o[j] = o[j + 1]
        length -= 1
    rc = cover[node]
    _recurse(hot, d, z, o, w, length, iz * cover[hot] / rc, io, f,
             left, right, feature, threshold, value, cover, x, phi, scale)
    _recurse(cold, d, z, o, w, length, iz * cover[cold] / rc, 0.0, f,
             left, right, feature, threshold, value, cover, x, phi, scale)


def shap_tree_sample(const cnp.int64_t[:] left, const cnp.int64_t[:] right,
                     const cnp.int64_t[:] feature, const double[:] threshold,
                     const double[:] value, const double[:] cover,
                     const double[:] x, double[:] phi, double scale):
    """Accumulate one tree's Shapley contributions for one sample into phi."""
    cdef Py_ssize_t d0[1]
    cdef double z0[1]
    cdef double o0[1]
    cdef double w0[1]
    with nogil:
        _recurse(0, d0, z0, o0, w0, 0, 1.0, 1.0, -1,
                 left, right, feature, threshold, value, cover, x, phi, scale)
