"""Gradient-boosted regression trees with second-order split gain.

Squared-error objective: per round the gradient is pred - y and the hessian
is 1. Split search is exact greedy over presorted columns; leaf weights use
soft-thresholded L1 plus L2 shrinkage. Trees also carry per-node routing
counts of the full training set, which the attribution module uses as
conditional weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._kernels import best_split_column
from .errors import ConfigError, DataError, ShapeError


@dataclass(frozen=True)
class GbdtParams:
    max_depth: int = 4
    min_child_weight: float = 6.0
    learning_rate: float = 0.05
    subsample: float = 0.9
    colsample_bytree: float = 1.0
    colsample_bylevel: float = 1.0
    alpha: float = 0.3
    lambda_: float = 0.04
    gamma: float = 0.01
    max_delta_step: float = 0.1
    n_rounds: int = 999
    base_score: float = 0.5
    seed: int = 0
    early_stopping_rounds: int = 0  # 0 = run all rounds

    def __post_init__(self):
        if not 0 <= self.max_depth <= 40:
            raise ConfigError(f"max_depth must lie in [0, 40], got {self.max_depth}")
        if self.min_child_weight < 0:
            raise ConfigError("min_child_weight cannot be negative")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate cannot be negative")
        for name in ("subsample", "colsample_bytree", "colsample_bylevel"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1], got {v}")
        for name in ("alpha", "lambda_", "gamma", "max_delta_step"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} cannot be negative")
        if self.n_rounds < 1:
            raise ConfigError(f"n_rounds must be at least 1, got {self.n_rounds}")
        if self.early_stopping_rounds < 0:
            raise ConfigError("early_stopping_rounds cannot be negative")


@dataclass
class Tree:
    """Flat node arrays; feature/left/right are -1 at leaves."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    cover: np.ndarray

    def n_nodes(self) -> int:
        return self.feature.shape[0]


@dataclass
class TreeEnsemble:
    trees: list[Tree]
    params: GbdtParams
    n_features: int


def _soft_threshold(g: float, alpha: float) -> float:
    if g > alpha:
        return g - alpha
    if g < -alpha:
        return g + alpha
    return 0.0


def _leaf_weight(g_sum: float, h_sum: float, params: GbdtParams) -> float:
    w = -_soft_threshold(g_sum, params.alpha) / (h_sum + params.lambda_)
    if params.max_delta_step > 0.0:
        w = min(max(w, -params.max_delta_step), params.max_delta_step)
    return w


class _TreeBuilder:
    def __init__(self, Xs, gs, hs, params, level_cols, sort_order):
        self.Xs = Xs
        self.gs = gs
        self.hs = hs
        self.params = params
        self.level_cols = level_cols
        self.sort_order = sort_order  # feature -> presorted row order over Xs
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []

    def build(self, rows_mask, depth) -> int:
        p = self.params
        node = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)

        n_node = int(rows_mask.sum())
        best = (-np.inf, -1, 0.0)  # gain, feature, threshold
        if depth < p.max_depth and n_node >= 2:
            for j in self.level_cols[depth]:
                order = self.sort_order[j]
                idx = order[rows_mask[order]]
                gain, thr, _ = best_split_column(
                    np.ascontiguousarray(self.Xs[idx, j]),
                    np.ascontiguousarray(self.gs[idx]),
                    np.ascontiguousarray(self.hs[idx]),
                    p.lambda_, p.gamma, p.min_child_weight,
                )
                if gain > best[0]:
                    best = (gain, int(j), thr)
        if best[0] > 0.0:
            gain, j, thr = best
            go_left = rows_mask & (self.Xs[:, j] < thr)
            go_right = rows_mask & ~(self.Xs[:, j] < thr)
            self.feature[node] = j
            self.threshold[node] = thr
            self.left[node] = self.build(go_left, depth + 1)
            self.right[node] = self.build(go_right, depth + 1)
        else:
            g_sum = float(np.sum(self.gs[rows_mask]))
            h_sum = float(np.sum(self.hs[rows_mask]))
            self.value[node] = _leaf_weight(g_sum, h_sum, p)
        return node

    def finish(self) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int64),
            threshold=np.asarray(self.threshold, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value, dtype=np.float64),
            cover=np.zeros(len(self.feature), dtype=np.float64),
        )


def _route_leaves(tree: Tree, X: np.ndarray) -> np.ndarray:
    """Leaf node index for every row, by iterative descent."""
    idx = np.zeros(X.shape[0], dtype=np.int64)
    while True:
        internal = tree.left[idx] >= 0
        if not internal.any():
            return idx
        f = tree.feature[idx]
        t = tree.threshold[idx]
        go_left = X[np.arange(X.shape[0]), np.maximum(f, 0)] < t
        nxt = np.where(go_left, tree.left[idx], tree.right[idx])
        idx = np.where(internal, nxt, idx)


def _fill_covers(tree: Tree, X: np.ndarray) -> None:
    """Count the rows of X routed through every node."""
    stack = [(0, np.ones(X.shape[0], dtype=bool))]
    while stack:
        node, mask = stack.pop()
        tree.cover[node] = float(mask.sum())
        if tree.left[node] >= 0:
            col = X[:, tree.feature[node]]
            go_left = mask & (col < tree.threshold[node])
            stack.append((int(tree.left[node]), go_left))
            stack.append((int(tree.right[node]), mask & ~(col < tree.threshold[node])))


def _check_matrix(X, y=None):
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"feature matrix must be 2-d, got shape {X.shape}")
    if X.size and not np.isfinite(X).all():
        raise DataError("feature matrix contains non-finite values")
    if y is None:
        return X
    y = np.ascontiguousarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ShapeError(f"target length {y.shape} does not match rows {X.shape[0]}")
    if y.size and not np.isfinite(y).all():
        raise DataError("target vector contains non-finite values")
    return X, y


def train(X, y, params: GbdtParams, eval_set=None) -> TreeEnsemble:
    """Boost params.n_rounds trees on (X, y). Deterministic in the seed.

    When early_stopping_rounds > 0 and an (X_val, y_val) pair is given,
    boosting stops once validation RMSE has not improved for that many
    rounds and the ensemble is truncated at its best round.
    """
    X, y = _check_matrix(X, y)
    n, m = X.shape
    if n == 0 or m == 0:
        raise ConfigError("training needs at least one row and one feature")
    p = params
    stopping = p.early_stopping_rounds > 0 and eval_set is not None
    if stopping:
        X_val, y_val = _check_matrix(eval_set[0], eval_set[1])
        val_pred = np.full(X_val.shape[0], p.base_score)
        best_rmse = np.inf
        best_round = 0
    rng = np.random.default_rng(p.seed)
    pred = np.full(n, p.base_score)
    trees: list[Tree] = []

    for _ in range(p.n_rounds):
        g = pred - y
        h = np.ones(n)

        if p.subsample < 1.0:
            k = max(1, int(round(p.subsample * n)))
            rows = np.sort(rng.choice(n, size=k, replace=False))
        else:
            rows = np.arange(n)
        if p.colsample_bytree < 1.0:
            k = max(1, int(round(p.colsample_bytree * m)))
            tree_cols = np.sort(rng.choice(m, size=k, replace=False))
        else:
            tree_cols = np.arange(m)
        level_cols = []
        for _lvl in range(p.max_depth):
            if p.colsample_bylevel < 1.0:
                k = max(1, int(round(p.colsample_bylevel * tree_cols.size)))
                level_cols.append(np.sort(rng.choice(tree_cols, size=k, replace=False)))
            else:
                level_cols.append(tree_cols)

        Xs = X[rows]
        sort_order = {int(j): np.argsort(Xs[:, j], kind="stable") for j in tree_cols}
        builder = _TreeBuilder(Xs, g[rows], h[rows], p, level_cols, sort_order)
        builder.build(np.ones(rows.size, dtype=bool), 0)
        tree = builder.finish()
        _fill_covers(tree, X)
        trees.append(tree)
        pred = pred + p.learning_rate * tree.value[_route_leaves(tree, X)]

        if stopping:
            val_pred = val_pred + p.learning_rate * tree.value[
                _route_leaves(tree, X_val)
            ]
            rmse = float(np.sqrt(np.mean((val_pred - y_val) ** 2)))
            if rmse < best_rmse:
                best_rmse = rmse
                best_round = len(trees)
            elif len(trees) - best_round >= p.early_stopping_rounds:
                trees = trees[:best_round]
                break

    return TreeEnsemble(trees=trees, params=p, n_features=m)


def predict(model: TreeEnsemble, X) -> np.ndarray:
    X = _check_matrix(X)
    if X.shape[1] != model.n_features:
        raise ShapeError(
            f"model expects {model.n_features} features, got {X.shape[1]}"
        )
    out = np.full(X.shape[0], model.params.base_score)
    for tree in model.trees:
        out = out + model.params.learning_rate * tree.value[_route_leaves(tree, X)]
    return out


def to_json(model: TreeEnsemble) -> str:
    doc = {
        "version": 1,
        "kind": "gbdt",
        "n_features": model.n_features,
        "params": {
            k: getattr(model.params, k)
            for k in GbdtParams.__dataclass_fields__
        },
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
                "cover": t.cover.tolist(),
            }
            for t in model.trees
        ],
    }
    return json.dumps(doc)


def from_json(text: str) -> TreeEnsemble:
    doc = json.loads(text)
    if doc.get("kind") != "gbdt" or doc.get("version") != 1:
        raise ConfigError("not a recognized boosted-tree model document")
    params = GbdtParams(**doc["params"])
    trees = [
        Tree(
            feature=np.asarray(t["feature"], dtype=np.int64),
            threshold=np.asarray(t["threshold"], dtype=np.float64),
            left=np.asarray(t["left"], dtype=np.int64),
            right=np.asarray(t["right"], dtype=np.int64),
            value=np.asarray(t["value"], dtype=np.float64),
            cover=np.asarray(t["cover"], dtype=np.float64),
        )
        for t in doc["trees"]
    ]
    return TreeEnsemble(trees=trees, params=params, n_features=int(doc["n_features"]))
