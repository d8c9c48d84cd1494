"""Per-estimate feature attributions and aggregate importance ranking.

Tree ensembles get exact path-weight attributions using per-node routing
counts as conditional weights. Kernel models get a weighted-least-squares
game approximation whose additivity is enforced exactly by eliminating one
unknown. Linear models report their coefficients directly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb

import numpy as np

from . import gbdt, mlr
from ._kernels import shap_tree_sample
from .errors import ConfigError, DataError, ShapeError


@dataclass(frozen=True)
class Attribution:
    """Additive decomposition: base_value + row-sum of values ~= estimate."""

    base_value: float
    values: np.ndarray  # (n, m)
    feature_names: tuple[str, ...]
    variances: np.ndarray | None = None  # sampling uncertainty, None when exact


@dataclass(frozen=True)
class ImportanceSummary:
    feature_names: tuple[str, ...]  # sorted by score, descending
    scores: tuple[float, ...]
    signs: tuple[int, ...]  # +1 pushes estimates up with the feature, -1 down

    def to_rows(self) -> list[dict]:
        return [
            {"feature": n, "score": s, "sign": g}
            for n, s, g in zip(self.feature_names, self.scores, self.signs)
        ]


# ---------------------------------------------------------------------------
# tree attributions


def _covers_from(tree: gbdt.Tree, B: np.ndarray) -> np.ndarray:
    cover = np.zeros(tree.n_nodes())
    stack = [(0, np.ones(B.shape[0], dtype=bool))]
    while stack:
        node, mask = stack.pop()
        cover[node] = float(mask.sum())
        if tree.left[node] >= 0:
            col = B[:, tree.feature[node]]
            go = mask & (col < tree.threshold[node])
            stack.append((int(tree.left[node]), go))
            stack.append((int(tree.right[node]), mask & ~(col < tree.threshold[node])))
    return cover


def _expected_leaf(tree: gbdt.Tree, cover: np.ndarray) -> float:
    leaves = tree.left < 0
    return float(np.sum(cover[leaves] * tree.value[leaves]) / cover[0])


def tree_shap(model: gbdt.TreeEnsemble, X, feature_names=None, background=None) -> Attribution:
    """Exact additive attributions for a boosted tree ensemble.

    Conditional weights come from the per-node routing counts stored at
    training time, or from a replacement background table when one is given.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ShapeError(
            f"expected shape (n, {model.n_features}), got {X.shape}"
        )
    if feature_names is None:
        feature_names = tuple(f"f{j}" for j in range(model.n_features))
    feature_names = tuple(feature_names)
    if len(feature_names) != model.n_features:
        raise ShapeError("one name per feature required")

    covers = []
    for t, tree in enumerate(model.trees):
        if background is not None:
            B = np.ascontiguousarray(background, dtype=np.float64)
            if B.ndim != 2 or B.shape[1] != model.n_features:
                raise ShapeError(f"background shape {B.shape} does not fit the model")
            cov = _covers_from(tree, B)
            if (cov == 0.0).any():
                raise DataError(
                    f"background routes no rows through some node of tree {t}; "
                    "attribution weights undefined"
                )
        else:
            cov = tree.cover
        covers.append(cov)

    lr = model.params.learning_rate
    base = model.params.base_score + lr * sum(
        _expected_leaf(tree, cov) for tree, cov in zip(model.trees, covers)
    )
    phi = np.zeros((X.shape[0], model.n_features))
    for i in range(X.shape[0]):
        x = X[i]
        row = phi[i]
        for tree, cov in zip(model.trees, covers):
            shap_tree_sample(
                tree.left, tree.right, tree.feature, tree.threshold,
                tree.value, cov, x, row, lr,
            )
    return Attribution(base_value=float(base), values=phi,
                       feature_names=feature_names, variances=None)


# ---------------------------------------------------------------------------
# model-agnostic attributions


def _shapley_kernel_weight(m: int, s: int) -> float:
    return (m - 1) / (comb(m, s) * s * (m - s))


def _coalition_plan(m: int, budget: int, rng: np.random.Generator):
    """Choose coalition rows and weights.

    Full enumeration with exact kernel weights for small feature counts or
    whenever the budget covers every proper subset; otherwise sizes are
    sampled in kernel proportion and the subsets drawn uniformly within each
    size (all weight 1).
    """
    total = 2 ** m - 2 if m <= 30 else None
    if total is not None and (m <= 12 or budget >= total):
        z = np.zeros((total, m))
        w = np.empty(total)
        r = 0
        for s in range(1, m):
            for combo in itertools.combinations(range(m), s):
                z[r, list(combo)] = 1.0
                w[r] = _shapley_kernel_weight(m, s)
                r += 1
        return z, w, True
    sizes = np.arange(1, m)
    p = (m - 1) / (sizes * (m - sizes))
    p = p / p.sum()
    counts = np.floor(p * budget).astype(int)
    short = budget - counts.sum()
    if short > 0:
        frac = p * budget - np.floor(p * budget)
        for k in np.argsort(-frac, kind="stable")[:short]:
            counts[k] += 1
    z = np.zeros((budget, m))
    r = 0
    for s, c in zip(sizes, counts):
        for _ in range(c):
            z[r, rng.choice(m, size=int(s), replace=False)] = 1.0
            r += 1
    return z, np.ones(budget), False


def kernel_shap(predict_fn, background, X, feature_names=None,
                n_coalitions: int = 2048, seed: int = 0, chunk: int = 8192) -> Attribution:
    """Game-theoretic attributions for a black-box estimator.

    Coalition values replace absent features with background rows and average
    the estimates. The least-squares fit eliminates the last feature, so the
    attribution row always sums exactly to estimate minus base value.
    """
    B = np.ascontiguousarray(background, dtype=np.float64)
    X = np.ascontiguousarray(X, dtype=np.float64)
    if B.ndim != 2 or X.ndim != 2 or B.shape[1] != X.shape[1]:
        raise ShapeError(
            f"background {B.shape} and samples {X.shape} must share feature width"
        )
    if B.shape[0] == 0:
        raise ConfigError("background table is empty")
    n, m = X.shape
    if m == 0:
        raise ConfigError("no features to attribute")
    if feature_names is None:
        feature_names = tuple(f"f{j}" for j in range(m))
    feature_names = tuple(feature_names)
    if len(feature_names) != m:
        raise ShapeError("one name per feature required")

    def call(matrix, what):
        try:
            out = np.asarray(predict_fn(matrix), dtype=np.float64)
        except Exception as exc:  # surface the caller's model failure with context
            raise DataError(f"estimator failed on {what}: {exc}") from exc
        if out.shape != (matrix.shape[0],):
            raise ShapeError(f"estimator returned shape {out.shape} for {what}")
        return out

    base = float(np.mean(call(B, "background table")))
    full = call(X, "explained samples")

    if m == 1:
        phi = (full - base).reshape(-1, 1)
        return Attribution(base, phi, feature_names, np.zeros_like(phi))

    if n_coalitions < 2 * m:
        raise ConfigError(
            f"coalition budget {n_coalitions} is below the minimum {2 * m}"
        )
    rng = np.random.default_rng(seed)
    z, w, exact = _coalition_plan(m, n_coalitions, rng)
    nc = z.shape[0]
    nb = B.shape[0]

    # design with the last feature eliminated to pin the additivity constraint
    a = z[:, :-1] - z[:, -1:]
    sw = np.sqrt(w)
    awa = (a * w[:, None]).T @ a
    phi = np.zeros((n, m))
    var = np.zeros((n, m))
    rows_per_block = max(1, chunk // nb)
    for i in range(n):
        v = np.empty(nc)
        for lo in range(0, nc, rows_per_block):
            hi = min(lo + rows_per_block, nc)
            block = z[lo:hi]
            masked = np.where(block[:, None, :] == 1.0, X[i][None, None, :], B[None, :, :])
            preds = call(masked.reshape(-1, m), f"coalition block {lo}..{hi - 1}")
            v[lo:hi] = preds.reshape(hi - lo, nb).mean(axis=1)
        delta = full[i] - base
        y = (v - base) - z[:, -1] * delta
        sol, *_ = np.linalg.lstsq(sw[:, None] * a, sw * y, rcond=None)
        phi[i, :-1] = sol
        phi[i, -1] = delta - sol.sum()
        if not exact:
            resid = y - a @ sol
            dof = max(nc - (m - 1), 1)
            s2 = float(np.sum(w * resid * resid)) / dof
            cov = s2 * np.linalg.pinv(awa)
            var[i, :-1] = np.diag(cov)
            var[i, -1] = float(np.sum(cov))
    return Attribution(base, phi, feature_names, var)


# ---------------------------------------------------------------------------
# ranking


def _ranked(names, scores, signs) -> ImportanceSummary:
    order = np.argsort(-np.asarray(scores), kind="stable")
    return ImportanceSummary(
        feature_names=tuple(names[k] for k in order),
        scores=tuple(float(scores[k]) for k in order),
        signs=tuple(int(signs[k]) for k in order),
    )


def summarize_attribution(att: Attribution, X=None) -> ImportanceSummary:
    """Rank features by mean absolute attribution.

    The sign reports whether larger feature values push estimates up: the
    correlation between the feature and its attribution column (0 when
    either side is constant). Ties keep the original feature order.
    """
    scores = np.mean(np.abs(att.values), axis=0)
    signs = np.zeros(len(att.feature_names), dtype=int)
    if X is not None:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.shape != att.values.shape:
            raise ShapeError(
                f"feature matrix {X.shape} does not match attributions {att.values.shape}"
            )
        for j in range(X.shape[1]):
            a = X[:, j] - X[:, j].mean()
            b = att.values[:, j] - att.values[:, j].mean()
            denom = np.sqrt(float(a @ a)) * np.sqrt(float(b @ b))
            if denom > 0.0:
                c = float((a @ b) / denom)
                signs[j] = 1 if c > 0 else (-1 if c < 0 else 0)
    return _ranked(att.feature_names, scores, signs)


def summarize_coefficients(model: mlr.LinearModel, feature_names) -> ImportanceSummary:
    """Rank features by absolute coefficient; unselected features score zero."""
    names = tuple(feature_names)
    scores = np.zeros(len(names))
    signs = np.zeros(len(names), dtype=int)
    for i, name in enumerate(names):
        coef = model.coefficients.get(name)
        if coef is not None:
            scores[i] = abs(coef)
            signs[i] = 1 if coef > 0 else (-1 if coef < 0 else 0)
    return _ranked(names, scores, signs)
