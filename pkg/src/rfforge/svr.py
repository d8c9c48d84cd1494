"""Epsilon-insensitive support vector regression trained by pairwise dual
coordinate ascent (maximal-violating-pair selection).

The dual is expressed in beta_i = alpha_i - alpha_i*: maximize
    sum y_i beta_i - eps sum |beta_i| - 1/2 beta' K beta
subject to sum beta_i = 0 and |beta_i| <= c. Each iteration picks the worst
violating pair and solves the 1-d subproblem exactly (the restriction is a
concave piecewise quadratic, so the maximum sits at a breakpoint, a box end,
or a stationary point of one piece).
"""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from ._kernels import svr_select
from .errors import ConfigError, ConvergenceError, DataError, ShapeError

KERNELS = ("rbf", "linear")


@dataclass(frozen=True)
class SvrParams:
    c: float = 10.0
    epsilon: float = 0.1
    gamma: float = 1.0
    kernel: str = "rbf"
    tol: float = 1e-3
    max_passes: int = 200
    cache_mb: float = 64.0

    def __post_init__(self):
        if self.c <= 0:
            raise ConfigError(f"box constraint c must be positive, got {self.c}")
        if self.epsilon < 0:
            raise ConfigError(f"epsilon cannot be negative, got {self.epsilon}")
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if self.kernel not in KERNELS:
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.tol <= 0:
            raise ConfigError("tolerance must be positive")
        if self.max_passes < 1:
            raise ConfigError("max_passes must be at least 1")


@dataclass
class SvrModel:
    support_vectors: np.ndarray  # (n_sv, m)
    dual_coefficients: np.ndarray  # beta per support vector
    bias: float
    params: SvrParams
    sv_indices: np.ndarray  # training-row positions of the support vectors
    n_train: int


def rbf_kernel(a, b, gamma: float) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"kernel arguments differ in shape: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.exp(-gamma * np.dot(d, d)))


class _KernelCache:
    """LRU cache of kernel-matrix rows, bounded in megabytes."""

    def __init__(self, X: np.ndarray, params: SvrParams):
        self.X = X
        self.params = params
        self.sq = (X * X).sum(axis=1)
        row_bytes = 8 * X.shape[0]
        self.capacity = max(2, int(params.cache_mb * 1e6 / max(row_bytes, 1)))
        self.rows: OrderedDict[int, np.ndarray] = OrderedDict()
        self.hits = 0
        self.misses = 0

    def row(self, i: int) -> np.ndarray:
        got = self.rows.get(i)
        if got is not None:
            self.rows.move_to_end(i)
            self.hits += 1
            return got
        self.misses += 1
        if self.params.kernel == "rbf":
            d2 = self.sq + self.sq[i] - 2.0 * (self.X @ self.X[i])
            k = np.exp(-self.params.gamma * np.maximum(d2, 0.0))
        else:
            k = self.X @ self.X[i]
        if len(self.rows) >= self.capacity:
            self.rows.popitem(last=False)
        self.rows[i] = k
        return k


def _best_step(bi, bj, fi, fj, c, eps, eta):
    """Exactly maximize the pair objective along beta_i += t, beta_j -= t.

    delta(t) = t (fi - fj) - eta t^2 / 2 - eps(|bi + t| - |bi|)
                                         - eps(|bj - t| - |bj|)
    over the box-feasible interval. Returns (t, gain).
    """
    t_lo = max(-c - bi, bj - c)
    t_hi = min(c - bi, bj + c)
    if t_lo > t_hi:
        return 0.0, 0.0

    def val(t):
        return (
            t * (fi - fj)
            - 0.5 * eta * t * t
            - eps * (abs(bi + t) - abs(bi))
            - eps * (abs(bj - t) - abs(bj))
        )

    cands = [t_lo, t_hi]
    for b in (-bi, bj):  # kinks where a dual variable crosses zero
        if t_lo < b < t_hi:
            cands.append(b)
    if eta > 0.0:
        for si in (-1.0, 1.0):
            for sj in (-1.0, 1.0):
                t = (fi - fj - eps * si + eps * sj) / eta
                if t_lo < t < t_hi:
                    cands.append(t)
    best_t, best_v = 0.0, 0.0
    for t in cands:
        v = val(t)
        if v > best_v:
            best_t, best_v = t, v
    return best_t, best_v


def train(X, y, params: SvrParams) -> SvrModel:
    """Solve the dual to KKT tolerance params.tol.

    Raises ConvergenceError (carrying the final violation) if the violating
    pair is not cleared within max_passes sweeps of n iterations.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ShapeError(f"bad training shapes {X.shape} / {y.shape}")
    n = X.shape[0]
    if n < 2:
        raise ConfigError(f"training needs at least 2 rows, got {n}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("training data contains non-finite values")

    p = params
    beta = np.zeros(n)
    f = y.copy()  # f_i = y_i - sum_j beta_j K_ij
    cache = _KernelCache(X, p)
    max_iter = p.max_passes * n
    it = 0
    # converge a shade inside tol: the independent primal checker recomputes
    # predictions from scratch and must still certify <= tol after roundoff
    target = p.tol * 0.999
    while True:
        i, up, j, down = svr_select(f, beta, p.c, p.epsilon)
        violation = up - down
        if violation <= target:
            break
        if it >= max_iter:
            raise ConvergenceError(
                f"no convergence after {max_iter} pair updates "
                f"(violation {violation:.3e} > tol {p.tol:.1e})",
                violation=float(violation),
            )
        ki = cache.row(i)
        kj = cache.row(j)
        eta = ki[i] + kj[j] - 2.0 * ki[j]
        t, gain = _best_step(beta[i], beta[j], f[i], f[j], p.c, p.epsilon, eta)
        if t == 0.0 or gain <= 0.0:
            raise ConvergenceError(
                f"solver stalled at violation {violation:.3e}", violation=float(violation)
            )
        # exact box values when the step lands on an end, so eligibility
        # checks in later selections see the bound, not a 1-ulp neighbor
        new_bi = beta[i] + t
        new_bj = beta[j] - t
        if t == p.c - beta[i]:
            new_bi = p.c
        elif t == -p.c - beta[i]:
            new_bi = -p.c
        if t == beta[j] + p.c:
            new_bj = -p.c
        elif t == beta[j] - p.c:
            new_bj = p.c
        beta[i] = new_bi
        beta[j] = new_bj
        f = f - t * ki + t * kj
        it += 1

    free = (beta != 0.0) & (np.abs(beta) < p.c)
    if free.any():
        conds = np.where(beta[free] > 0.0, f[free] - p.epsilon, f[free] + p.epsilon)
        bias = float(conds.mean())
    else:
        bias = float(0.5 * (up + down)) if np.isfinite(up) and np.isfinite(down) else 0.0

    sv = beta != 0.0
    return SvrModel(
        support_vectors=X[sv].copy(),
        dual_coefficients=beta[sv].copy(),
        bias=bias,
        params=p,
        sv_indices=np.flatnonzero(sv),
        n_train=n,
    )


def _kernel_block(A: np.ndarray, B: np.ndarray, params: SvrParams) -> np.ndarray:
    if params.kernel == "rbf":
        d2 = (
            (A * A).sum(axis=1)[:, None]
            + (B * B).sum(axis=1)[None, :]
            - 2.0 * (A @ B.T)
        )
        return np.exp(-params.gamma * np.maximum(d2, 0.0))
    return A @ B.T


def predict(model: SvrModel, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"feature matrix must be 2-d, got {X.shape}")
    if model.support_vectors.shape[0] == 0:
        return np.full(X.shape[0], model.bias)
    if X.shape[1] != model.support_vectors.shape[1]:
        raise ShapeError(
            f"model expects {model.support_vectors.shape[1]} features, got {X.shape[1]}"
        )
    k = _kernel_block(X, model.support_vectors, model.params)
    return k @ model.dual_coefficients + model.bias


def kkt_violation(model: SvrModel, X, y) -> float:
    """Worst optimality violation on the training set, from primal residuals.

    Recomputes predictions from scratch; independent of any solver state.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.shape[0] != model.n_train:
        raise ShapeError(
            f"expected the {model.n_train}-row training matrix, got {X.shape[0]} rows"
        )
    beta = np.zeros(model.n_train)
    beta[model.sv_indices] = model.dual_coefficients
    r = y - predict(model, X)  # r_i = y_i - f(x_i)
    eps, c = model.params.epsilon, model.params.c
    viol = np.zeros(model.n_train)
    at_zero = beta == 0.0
    at_up = beta == c
    at_lo = beta == -c
    free_pos = (beta > 0.0) & ~at_up
    free_neg = (beta < 0.0) & ~at_lo
    viol[at_zero] = np.maximum(np.abs(r[at_zero]) - eps, 0.0)
    viol[at_up] = np.maximum(eps - r[at_up], 0.0)
    viol[at_lo] = np.maximum(r[at_lo] + eps, 0.0)
    viol[free_pos] = np.abs(r[free_pos] - eps)
    viol[free_neg] = np.abs(r[free_neg] + eps)
    return float(viol.max()) if viol.size else 0.0


def dual_objective(beta: np.ndarray, X: np.ndarray, y: np.ndarray, params: SvrParams) -> float:
    """Value of the maximized dual at a full-length beta vector."""
    K = _kernel_block(X, X, params)
    return float(
        y @ beta - params.epsilon * np.abs(beta).sum() - 0.5 * beta @ K @ beta
    )


def to_json(model: SvrModel) -> str:
    doc = {
        "version": 1,
        "kind": "svr",
        "params": {k: getattr(model.params, k) for k in SvrParams.__dataclass_fields__},
        "support_vectors": model.support_vectors.tolist(),
        "dual_coefficients": model.dual_coefficients.tolist(),
        "bias": model.bias,
        "sv_indices": model.sv_indices.tolist(),
        "n_train": model.n_train,
    }
    return json.dumps(doc)


def from_json(text: str) -> SvrModel:
    doc = json.loads(text)
    if doc.get("kind") != "svr" or doc.get("version") != 1:
        raise ConfigError("not a recognized support-vector model document")
    n_sv = len(doc["dual_coefficients"])
    sv = np.asarray(doc["support_vectors"], dtype=np.float64)
    return SvrModel(
        support_vectors=sv.reshape(n_sv, -1) if n_sv else sv.reshape(0, 0),
        dual_coefficients=np.asarray(doc["dual_coefficients"], dtype=np.float64),
        bias=float(doc["bias"]),
        params=SvrParams(**doc["params"]),
        sv_indices=np.asarray(doc["sv_indices"], dtype=np.int64),
        n_train=int(doc["n_train"]),
    )
