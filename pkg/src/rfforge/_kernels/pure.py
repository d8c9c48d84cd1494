"""Numpy implementations of the hot inner loops.

The compiled backend mirrors these routines operation for operation (and is
built without FMA contraction), so both produce bit-identical results. Keep
any change here in lockstep with the .pyx twin.
"""

from __future__ import annotations

import numpy as np

NAME = "pure"


def best_split_column(xs, gs, hs, lam, gamma, min_child_weight):
    """Scan one presorted feature column for the highest-gain split.

    xs ascending, gs/hs aligned. Returns (gain, threshold, n_left); the first
    position attaining the best gain wins, so equal-gain ties resolve to the
    lowest threshold. gain = -inf means no admissible split.
    """
    n = xs.shape[0]
    if n < 2:
        return -np.inf, 0.0, 0
    cg = np.cumsum(gs)
    ch = np.cumsum(hs)
    total_g = cg[n - 1]
    total_h = ch[n - 1]
    gl = cg[: n - 1]
    hl = ch[: n - 1]
    gr = total_g - gl
    hr = total_h - hl
    valid = (xs[: n - 1] < xs[1:]) & (hl >= min_child_weight) & (hr >= min_child_weight)
    if not valid.any():
        return -np.inf, 0.0, 0
    parent = total_g * total_g / (total_h + lam)
    raw = gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent
    gains = 0.5 * raw - gamma
    gains[~valid] = -np.inf
    k = int(np.argmax(gains))
    return float(gains[k]), float(0.5 * (xs[k] + xs[k + 1])), k + 1


def svr_select(f, beta, c, eps):
    """Pick the maximal violating pair for the pairwise dual update.

    f holds y - K @ beta. Returns (i, up_i, j, down_j); optimality holds when
    up_i - down_j is within tolerance. Ties take the lowest index.
    """
    up = np.where(beta >= 0.0, f - eps, f + eps)
    up = np.where(beta < c, up, -np.inf)
    down = np.where(beta <= 0.0, f + eps, f - eps)
    down = np.where(beta > -c, down, np.inf)
    i = int(np.argmax(up))
    j = int(np.argmin(down))
    return i, float(up[i]), j, float(down[j])


def _extend(d, z, o, w, pz, po, pi):
    length = len(d)
    d.append(pi)
    z.append(pz)
    o.append(po)
    w.append(1.0 if length == 0 else 0.0)
    for i in range(length - 1, -1, -1):
        w[i + 1] += po * w[i] * (i + 1) / (length + 1)
        w[i] = pz * w[i] * (length - i) / (length + 1)


def _unwound_sum(z, o, w, i):
    length = len(w)
    one = o[i]
    zero = z[i]
    total = 0.0
    if one != 0.0:
        nxt = w[length - 1]
        for j in range(length - 2, -1, -1):
            t = nxt * length / ((j + 1) * one)
            total += t
            nxt = w[j] - t * zero * (length - 1 - j) / length
    else:
        for j in range(length - 2, -1, -1):
            total += w[j] * length / (zero * (length - 1 - j))
    return total


def _unwind(d, z, o, w, i):
    length = len(w)
    one = o[i]
    zero = z[i]
    nxt = w[length - 1]
    if one != 0.0:
        for j in range(length - 2, -1, -1):
            t = w[j]
            w[j] = nxt * length / ((j + 1) * one)
            nxt = t - w[j] * zero * (length - 1 - j) / length
    else:
        for j in range(length - 2, -1, -1):
            w[j] = w[j] * length / (zero * (length - 1 - j))
    for j in range(i, length - 1):
        d[j] = d[j + 1]
        z[j] = z[j + 1]
        o[j] = o[j + 1]
    d.pop()
    z.pop()
    o.pop()
    w.pop()


def _shap_recurse(node, d, z, o, w, pz, po, pi, left, right, feature, threshold, value, cover, x, phi, scale):
    d = d[:]
    z = z[:]
    o = o[:]
    w = w[:]
    _extend(d, z, o, w, pz, po, pi)
    if left[node] < 0:
        leaf = value[node]
        for i in range(1, len(d)):
            s = _unwound_sum(z, o, w, i)
            phi[d[i]] += scale * s * (o[i] - z[i]) * leaf
        return
    f = feature[node]
    if x[f] < threshold[node]:
        hot, cold = left[node], right[node]
    else:
        hot, cold = right[node], left[node]
    iz = 1.0
    io = 1.0
    k = -1
    for idx in range(len(d)):
        if d[idx] == f:
            k = idx
            break
    if k >= 0:
        iz = z[k]
        io = o[k]
        _unwind(d, z, o, w, k)
    rc = cover[node]
    _shap_recurse(hot, d, z, o, w, iz * cover[hot] / rc, io, f,
                  left, right, feature, threshold, value, cover, x, phi, scale)
    _shap_recurse(cold, d, z, o, w, iz * cover[cold] / rc, 0.0, f,
                  left, right, feature, threshold, value, cover, x, phi, scale)


def shap_tree_sample(left, right, feature, threshold, value, cover, x, phi, scale):
    """Accumulate one tree's Shapley contributions for one sample into phi.

    Path-weight recursion over the tree; cover gives the per-node routing
    counts used as conditional weights, scale is the ensemble shrinkage.
    """
    _shap_recurse(0, [], [], [], [], 1.0, 1.0, -1,
                  left, right, feature, threshold, value, cover, x, phi, scale)
