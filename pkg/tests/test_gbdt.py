"""Boosted-tree training against brute-force split enumeration."""

import numpy as np
import pytest

from rfforge.errors import ConfigError, DataError, ShapeError
from rfforge.gbdt import (
    GbdtParams,
    TreeEnsemble,
    from_json,
    predict,
    to_json,
    train,
)
from rfforge._kernels import best_split_column


# --- independent split oracle -----------------------------------------------
# Exhaustive enumeration over every (feature, midpoint-threshold) candidate
# with per-side sums computed by boolean masking. Ties resolve to the lowest
# feature index, then the lowest threshold, matching the scan order.

def oracle_split(X, g, h, lam, gamma, mcw):
    best = None
    for j in range(X.shape[1]):
        levels = np.unique(X[:, j])
        for a, b in zip(levels[:-1], levels[1:]):
            thr = 0.5 * (a + b)
            left = X[:, j] < thr
            hl = float(h[left].sum())
            hr = float(h[~left].sum())
            if hl < mcw or hr < mcw:
                continue
            gl = float(g[left].sum())
            gr = float(g[~left].sum())
            gain = 0.5 * (
                gl * gl / (hl + lam)
                + gr * gr / (hr + lam)
                - (gl + gr) ** 2 / (hl + hr + lam)
            ) - gamma
            if best is None or gain > best[0]:
                best = (gain, j, thr)
    return best


def oracle_leaf(g, h, p: GbdtParams) -> float:
    G = float(g.sum())
    H = float(h.sum())
    if G > p.alpha:
        num = G - p.alpha
    elif G < -p.alpha:
        num = G + p.alpha
    else:
        num = 0.0
    w = -num / (H + p.lambda_)
    if p.max_delta_step > 0.0:
        w = min(max(w, -p.max_delta_step), p.max_delta_step)
    return w


def oracle_build(X, g, h, p: GbdtParams, depth=0):
    best = None
    if depth < p.max_depth and g.shape[0] >= 2:
        best = oracle_split(X, g, h, p.lambda_, p.gamma, p.min_child_weight)
    if best is not None and best[0] > 0.0:
        _, j, thr = best
        mask = X[:, j] < thr
        return {
            "feature": j,
            "threshold": thr,
            "left": oracle_build(X[mask], g[mask], h[mask], p, depth + 1),
            "right": oracle_build(X[~mask], g[~mask], h[~mask], p, depth + 1),
        }
    return {"leaf": oracle_leaf(g, h, p)}


def assert_tree_matches(tree, node, oracle):
    if "leaf" in oracle:
        assert tree.feature[node] == -1
        assert tree.value[node] == pytest.approx(oracle["leaf"], abs=1e-10)
    else:
        assert tree.feature[node] == oracle["feature"]
        assert tree.threshold[node] == oracle["threshold"]
        assert_tree_matches(tree, int(tree.left[node]), oracle["left"])
        assert_tree_matches(tree, int(tree.right[node]), oracle["right"])


def test_split_kernel_matches_enumeration():
    rng = np.random.default_rng(11)
    for trial in range(120):
        n = int(rng.integers(2, 40))
        xs = rng.random(n)
        if trial % 3 == 0:
            xs = np.round(xs, 1)  # force duplicate feature values
        xs = np.sort(xs)
        g = rng.normal(size=n)
        h = np.ones(n)
        lam = float(rng.choice([0.0, 0.04, 1.0]))
        gamma = float(rng.choice([0.0, 0.01, 0.2]))
        mcw = float(rng.choice([0.0, 1.0, 3.0]))
        gain, thr, n_left = best_split_column(xs, g, h, lam, gamma, mcw)
        want = oracle_split(xs[:, None], g, h, lam, gamma, mcw)
        if want is None:
            assert gain == -np.inf
        else:
            assert thr == want[2]
            assert gain == pytest.approx(want[0], abs=1e-9)
            assert n_left == int(np.sum(xs < thr))


def test_split_kernel_rejects_thin_children():
    xs = np.array([0.0, 1.0, 2.0, 3.0])
    g = np.array([-5.0, 1.0, 1.0, 1.0])
    h = np.ones(4)
    # unconstrained best isolates the -5 row; mcw 2 forces the middle cut
    gain, thr, _ = best_split_column(xs, g, h, 0.0, 0.0, 2.0)
    assert thr == 1.5
    want = oracle_split(xs[:, None], g, h, 0.0, 0.0, 2.0)
    assert want[2] == 1.5
    assert gain == pytest.approx(want[0], abs=1e-12)


def test_single_round_trees_match_oracle():
    rng = np.random.default_rng(7)
    for _ in range(40):
        n = int(rng.integers(4, 33))
        m = int(rng.integers(1, 4))
        X = rng.random((n, m))
        if rng.random() < 0.4:
            X[:, 0] = np.round(X[:, 0], 1)
        y = rng.random(n)
        p = GbdtParams(
            max_depth=int(rng.integers(1, 5)),
            min_child_weight=float(rng.choice([0.0, 1.0, 2.0])),
            learning_rate=1.0,
            subsample=1.0,
            colsample_bytree=1.0,
            colsample_bylevel=1.0,
            alpha=float(rng.choice([0.0, 0.1])),
            lambda_=float(rng.choice([0.0, 1.0])),
            gamma=float(rng.choice([0.0, 0.01])),
            max_delta_step=float(rng.choice([0.0, 0.05])),
            n_rounds=1,
        )
        model = train(X, y, p)
        g = np.full(n, p.base_score) - y
        assert_tree_matches(model.trees[0], 0, oracle_build(X, g, np.ones(n), p))


def test_mean_target_single_leaf():
    X = np.array([[0.1], [0.4], [0.6], [0.9]])
    y = np.array([2.0, 2.0, 2.0, 2.0])
    p = GbdtParams(max_depth=0, alpha=0.0, lambda_=0.0, learning_rate=1.0,
                   subsample=1.0, max_delta_step=0.0, n_rounds=1, base_score=0.0)
    model = train(X, y, p)
    assert model.trees[0].value[0] == pytest.approx(2.0, abs=1e-12)
    assert predict(model, X) == pytest.approx([2.0] * 4, abs=1e-12)


def test_separable_depth_one_leaves():
    X = np.array([[0.1], [0.2], [0.8], [0.9]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    p = GbdtParams(max_depth=1, min_child_weight=0.0, learning_rate=1.0,
                   subsample=1.0, alpha=0.0, lambda_=1.0, gamma=0.0,
                   max_delta_step=0.0, n_rounds=1, base_score=0.5)
    model = train(X, y, p)
    tree = model.trees[0]
    assert tree.feature[0] == 0
    assert tree.threshold[0] == pytest.approx(0.5, abs=1e-12)
    # per side: G = +-1, H = 2, weight = -G / (H + 1)
    assert tree.value[tree.left[0]] == pytest.approx(-1.0 / 3.0, abs=1e-12)
    assert tree.value[tree.right[0]] == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert predict(model, X) == pytest.approx(
        [0.5 - 1 / 3, 0.5 - 1 / 3, 0.5 + 1 / 3, 0.5 + 1 / 3], abs=1e-12
    )


def test_large_gamma_forces_single_leaf():
    X = np.array([[0.1], [0.2], [0.8], [0.9]])
    y = np.array([0.0, 0.0, 1.0, 1.0])
    p = GbdtParams(max_depth=3, min_child_weight=0.0, learning_rate=1.0,
                   subsample=1.0, alpha=0.0, lambda_=1.0, gamma=5.0,
                   max_delta_step=0.0, n_rounds=1, base_score=0.5)
    model = train(X, y, p)
    assert model.trees[0].n_nodes() == 1
    # balanced residuals, G = 0, so the lone leaf is exactly the base score
    assert predict(model, X) == pytest.approx([0.5] * 4, abs=1e-12)


def test_alpha_soft_threshold_zeroes_leaves():
    rng = np.random.default_rng(3)
    X = rng.random((12, 2))
    y = rng.random(12) * 0.1 + 0.45
    p = GbdtParams(max_depth=2, min_child_weight=0.0, subsample=1.0,
                   alpha=50.0, lambda_=0.0, gamma=0.0, max_delta_step=0.0,
                   n_rounds=3)
    model = train(X, y, p)
    for tree in model.trees:
        assert np.all(tree.value == 0.0)
    assert predict(model, X) == pytest.approx([p.base_score] * 12, abs=1e-15)


def test_empty_ensemble_predicts_base_score():
    p = GbdtParams()
    model = TreeEnsemble(trees=[], params=p, n_features=2)
    out = predict(model, np.array([[0.0, 1.0], [0.5, 0.5]]))
    assert out == pytest.approx([0.5, 0.5], abs=0.0)


def test_single_leaf_scaled_by_learning_rate():
    X = np.array([[0.2], [0.8]])
    y = np.array([0.5, 0.5])
    p = GbdtParams(max_depth=0, learning_rate=0.3, subsample=1.0, alpha=0.0,
                   lambda_=1.0, max_delta_step=0.0, n_rounds=1, base_score=0.0)
    model = train(X, y, p)
    w = model.trees[0].value[0]
    assert predict(model, X) == pytest.approx([0.3 * w, 0.3 * w], abs=1e-15)


def test_lambda_shrinks_leaf_weights():
    X = np.array([[0.2], [0.8]])
    y = np.array([0.5, 0.5])
    base = dict(max_depth=0, learning_rate=1.0, subsample=1.0, alpha=0.0,
                max_delta_step=0.0, n_rounds=1, base_score=0.0)
    # G = -1, H = 2: lambda 1 gives 1/3, lambda 2 gives 1/4
    w1 = train(X, y, GbdtParams(lambda_=1.0, **base)).trees[0].value[0]
    w2 = train(X, y, GbdtParams(lambda_=2.0, **base)).trees[0].value[0]
    assert w1 == pytest.approx(1.0 / 3.0, abs=1e-12)
    assert w2 == pytest.approx(1.0 / 4.0, abs=1e-12)
    assert abs(w2) < abs(w1)


def test_max_delta_step_clips_weights():
    rng = np.random.default_rng(5)
    X = rng.random((30, 2))
    y = rng.random(30) * 10.0  # residuals far beyond the clip
    p = GbdtParams(max_depth=3, min_child_weight=1.0, subsample=1.0,
                   alpha=0.0, max_delta_step=0.1, n_rounds=5)
    model = train(X, y, p)
    leaf_mags = [
        np.abs(t.value[t.feature == -1]).max() for t in model.trees
    ]
    assert all(m <= 0.1 + 1e-15 for m in leaf_mags)
    assert max(leaf_mags) == pytest.approx(0.1, abs=1e-15)


def test_min_child_weight_bounds_routed_rows():
    rng = np.random.default_rng(9)
    X = rng.random((40, 3))
    y = rng.random(40)
    p = GbdtParams(max_depth=4, min_child_weight=5.0, subsample=1.0,
                   learning_rate=0.3, n_rounds=10)
    model = train(X, y, p)
    for tree in model.trees:
        for node in range(tree.n_nodes()):
            if tree.feature[node] >= 0:
                assert tree.cover[tree.left[node]] >= 5.0
                assert tree.cover[tree.right[node]] >= 5.0


def test_training_rmse_non_increasing():
    rng = np.random.default_rng(21)
    X = rng.random((80, 4))
    y = 0.3 * X[:, 0] + 0.5 * X[:, 1] ** 2 + 0.05 * rng.normal(size=80)
    p = GbdtParams(max_depth=3, min_child_weight=1.0, learning_rate=0.1,
                   subsample=1.0, alpha=0.0, gamma=0.0, max_delta_step=0.0,
                   n_rounds=50)
    model = train(X, y, p)
    pred = np.full(80, p.base_score)
    last = np.sqrt(np.mean((pred - y) ** 2))
    for tree in model.trees:
        leaf = np.zeros(80)
        for i in range(80):
            node = 0
            while tree.feature[node] >= 0:
                if X[i, tree.feature[node]] < tree.threshold[node]:
                    node = int(tree.left[node])
                else:
                    node = int(tree.right[node])
            leaf[i] = tree.value[node]
        pred = pred + p.learning_rate * leaf
        cur = np.sqrt(np.mean((pred - y) ** 2))
        assert cur <= last + 1e-12
        last = cur


def test_depth_limit_honored():
    rng = np.random.default_rng(13)
    X = rng.random((60, 3))
    y = rng.random(60)
    model = train(X, y, GbdtParams(max_depth=2, min_child_weight=1.0,
                                   subsample=1.0, n_rounds=4))
    for tree in model.trees:
        depths = {0: 0}
        for node in range(tree.n_nodes()):
            if tree.feature[node] >= 0:
                depths[int(tree.left[node])] = depths[node] + 1
                depths[int(tree.right[node])] = depths[node] + 1
                assert depths[node] < 2
    assert any(t.n_nodes() > 1 for t in model.trees)


def test_deterministic_under_subsampling():
    rng = np.random.default_rng(17)
    X = rng.random((50, 4))
    y = rng.random(50)
    p = GbdtParams(subsample=0.8, colsample_bytree=0.75, colsample_bylevel=0.75,
                   min_child_weight=1.0, n_rounds=6, seed=42)
    a = train(X, y, p)
    b = train(X, y, p)
    assert to_json(a) == to_json(b)
    c = train(X, y, GbdtParams(subsample=0.8, colsample_bytree=0.75,
                               colsample_bylevel=0.75, min_child_weight=1.0,
                               n_rounds=6, seed=43))
    assert to_json(a) != to_json(c)


def test_json_round_trip():
    rng = np.random.default_rng(19)
    X = rng.random((25, 3))
    y = rng.random(25)
    model = train(X, y, GbdtParams(min_child_weight=1.0, n_rounds=5,
                                   learning_rate=0.2))
    clone = from_json(to_json(model))
    assert clone.params == model.params
    assert clone.n_features == model.n_features
    assert len(clone.trees) == len(model.trees)
    probe = rng.random((40, 3))
    assert np.array_equal(predict(clone, probe), predict(model, probe))
    with pytest.raises(ConfigError):
        from_json('{"version": 1, "kind": "other"}')


def test_input_validation():
    with pytest.raises(ConfigError):
        train(np.empty((0, 2)), np.empty(0), GbdtParams())
    with pytest.raises(DataError):
        train(np.array([[0.1], [np.nan]]), np.array([0.0, 1.0]), GbdtParams())
    with pytest.raises(DataError):
        train(np.array([[0.1], [0.2]]), np.array([0.0, np.inf]), GbdtParams())
    with pytest.raises(ShapeError):
        train(np.array([[0.1], [0.2]]), np.array([0.0, 1.0, 2.0]), GbdtParams())
    model = train(np.array([[0.1], [0.9]]), np.array([0.0, 1.0]),
                  GbdtParams(min_child_weight=1.0, n_rounds=1))
    with pytest.raises(ShapeError):
        predict(model, np.array([[0.1, 0.2]]))


def test_param_range_validation():
    with pytest.raises(ConfigError):
        GbdtParams(max_depth=-1)
    with pytest.raises(ConfigError):
        GbdtParams(subsample=0.0)
    with pytest.raises(ConfigError):
        GbdtParams(colsample_bytree=1.5)
    with pytest.raises(ConfigError):
        GbdtParams(lambda_=-0.1)
    with pytest.raises(ConfigError):
        GbdtParams(n_rounds=0)
    with pytest.raises(ConfigError):
        GbdtParams(early_stopping_rounds=-1)


def test_early_stopping_truncates_at_best_round():
    rng = np.random.default_rng(29)
    X = rng.random((60, 3))
    y = 0.6 * X[:, 0] + 0.1 * rng.normal(size=60)
    Xv = rng.random((20, 3))
    yv = 0.6 * Xv[:, 0] + 0.1 * rng.normal(size=20)
    base = dict(max_depth=3, min_child_weight=1.0, learning_rate=0.5,
                subsample=1.0, alpha=0.0, gamma=0.0, max_delta_step=0.0,
                n_rounds=120, seed=4)
    full = train(X, y, GbdtParams(**base))
    # replay the stopping rule over the full run's per-round validation rmse
    es = 5
    pred = np.full(20, full.params.base_score)
    best, best_round, expect = np.inf, 0, len(full.trees)
    for k, tree in enumerate(full.trees, start=1):
        leaf = np.zeros(20)
        for i in range(20):
            node = 0
            while tree.feature[node] >= 0:
                if Xv[i, tree.feature[node]] < tree.threshold[node]:
                    node = int(tree.left[node])
                else:
                    node = int(tree.right[node])
            leaf[i] = tree.value[node]
        pred = pred + full.params.learning_rate * leaf
        r = float(np.sqrt(np.mean((pred - yv) ** 2)))
        if r < best:
            best, best_round = r, k
        elif k - best_round >= es:
            expect = best_round
            break
    stopped = train(X, y, GbdtParams(early_stopping_rounds=es, **base),
                    eval_set=(Xv, yv))
    assert len(stopped.trees) == expect
    assert expect < 120
    for ours, ref in zip(stopped.trees, full.trees):
        assert np.array_equal(ours.value, ref.value)
        assert np.array_equal(ours.threshold, ref.threshold)


def test_early_stopping_off_by_default():
    rng = np.random.default_rng(31)
    X = rng.random((30, 2))
    y = rng.random(30)
    p = GbdtParams(min_child_weight=1.0, n_rounds=15)
    plain = train(X, y, p)
    ignored = train(X, y, p, eval_set=(X, y))  # es = 0, eval set ignored
    assert to_json(plain) == to_json(ignored)
    no_eval = train(
        X, y, GbdtParams(min_child_weight=1.0, n_rounds=15,
                         early_stopping_rounds=3)
    )
    assert len(no_eval.trees) == 15
