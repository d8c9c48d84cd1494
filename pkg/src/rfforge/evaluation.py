"""Metrics, cross-validated grid tuning, and learning curves.

Metric conventions: sample statistics use the n-1 denominator; the
correlation is reported as undefined (None) when either side has zero
variance, while a constant measured vector makes the determination
coefficient an error because its denominator vanishes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np

from . import gbdt, mlr, svr
from .dataset import FoldPlan, SplitIndex, fold_rows
from .errors import ConfigError, ConvergenceError, DegenerateDataError, RfForgeError, ShapeError


@dataclass(frozen=True)
class EvalVectors:
    """Measured/estimated pair with shared length."""

    x_m: np.ndarray
    x_e: np.ndarray

    def __post_init__(self):
        x_m = np.ascontiguousarray(self.x_m, dtype=np.float64)
        x_e = np.ascontiguousarray(self.x_e, dtype=np.float64)
        if x_m.ndim != 1 or x_m.shape != x_e.shape:
            raise ShapeError(f"vectors must be 1-d and equal length: {x_m.shape} vs {x_e.shape}")
        if x_m.shape[0] < 1:
            raise ConfigError("need at least one sample")
        if not (np.isfinite(x_m).all() and np.isfinite(x_e).all()):
            raise ShapeError("metric inputs must be finite")
        object.__setattr__(self, "x_m", x_m)
        object.__setattr__(self, "x_e", x_e)

    @property
    def n(self) -> int:
        return self.x_m.shape[0]


def _vec(v, x_e=None) -> EvalVectors:
    return v if isinstance(v, EvalVectors) else EvalVectors(v, x_e)


def rmse(v, x_e=None) -> float:
    v = _vec(v, x_e)
    d = v.x_m - v.x_e
    return float(np.sqrt(np.mean(d * d)))


def pearson_r(v, x_e=None):
    """Sample correlation; None when either standard deviation is zero."""
    v = _vec(v, x_e)
    if v.n < 2:
        raise ConfigError("correlation needs at least 2 samples")
    a = v.x_m - v.x_m.mean()
    b = v.x_e - v.x_e.mean()
    denom = np.sqrt(float(a @ a)) * np.sqrt(float(b @ b))
    if denom == 0.0:
        return None
    return float((a @ b) / denom)


def cd(v, x_e=None) -> float:
    """Determination coefficient 1 - SS_res/SS_tot; negative when the
    residuals exceed the spread of the measurements."""
    v = _vec(v, x_e)
    if v.n < 2:
        raise ConfigError("determination coefficient needs at least 2 samples")
    d = v.x_m - v.x_e
    ss_res = float(np.sum(d * d))
    c = v.x_m - v.x_m.mean()
    ss_tot = float(np.sum(c * c))
    if ss_tot == 0.0:
        raise DegenerateDataError("measured vector is constant; determination undefined")
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class EvalReport:
    label: str
    n: int
    rmse: float
    cd: float | None
    r: float | None
    ss_res: float
    ss_tot: float
    cov: float
    sd_m: float
    sd_e: float

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "n": self.n,
            "rmse": self.rmse,
            "cd": self.cd,
            "r": self.r,
            "ss_res": self.ss_res,
            "ss_tot": self.ss_tot,
            "cov": self.cov,
            "sd_m": self.sd_m,
            "sd_e": self.sd_e,
        }


def evaluate(y_true, y_pred, label: str = "") -> EvalReport:
    v = _vec(y_true, y_pred)
    d = v.x_m - v.x_e
    ss_res = float(np.sum(d * d))
    c = v.x_m - v.x_m.mean()
    ss_tot = float(np.sum(c * c))
    if v.n >= 2:
        e = v.x_e - v.x_e.mean()
        cov = float((c @ e) / (v.n - 1))
        sd_m = float(np.sqrt(ss_tot / (v.n - 1)))
        sd_e = float(np.sqrt(float(e @ e) / (v.n - 1)))
        r = pearson_r(v)
        cd_val = (1.0 - ss_res / ss_tot) if ss_tot > 0.0 else None
    else:
        cov = sd_m = sd_e = 0.0
        r = None
        cd_val = None
    return EvalReport(
        label=label,
        n=v.n,
        rmse=rmse(v),
        cd=cd_val,
        r=r,
        ss_res=ss_res,
        ss_tot=ss_tot,
        cov=cov,
        sd_m=sd_m,
        sd_e=sd_e,
    )


# ---------------------------------------------------------------------------
# model family adapters


class GbdtFamily:
    name = "gbdt"

    def __init__(self, base: gbdt.GbdtParams | None = None):
        self.base = base if base is not None else gbdt.GbdtParams()

    def fit(self, X, y, overrides: dict, seed: int):
        params = replace(self.base, **overrides, seed=seed)
        return gbdt.train(X, y, params)

    def predict(self, model, X):
        return gbdt.predict(model, X)

    def default_grid(self) -> "GridSpec":
        return GridSpec(
            stages=(
                GridStage((("max_depth", (3, 4, 5, 6)), ("min_child_weight", (1.0, 3.0, 6.0)))),
                GridStage((("learning_rate", (0.05, 0.1, 0.3)), ("subsample", (0.8, 0.9, 1.0)))),
                GridStage((("colsample_bytree", (0.9, 1.0)), ("alpha", (0.0, 0.3, 0.8)))),
                GridStage((("lambda_", (0.04, 0.08, 1.0)), ("colsample_bylevel", (0.9, 1.0)))),
                GridStage((("gamma", (0.0, 0.01)), ("max_delta_step", (0.0, 0.1)))),
            )
        )


class SvrFamily:
    name = "svr"

    def __init__(self, base: svr.SvrParams | None = None):
        self.base = base if base is not None else svr.SvrParams()

    def fit(self, X, y, overrides: dict, seed: int):
        params = replace(self.base, **overrides)
        return svr.train(X, y, params)

    def predict(self, model, X):
        return svr.predict(model, X)

    def default_grid(self) -> "GridSpec":
        return GridSpec(
            stages=(
                GridStage(
                    (
                        ("c", (0.1, 1.0, 10.0, 100.0)),
                        ("epsilon", (0.01, 0.1, 0.5)),
                        ("gamma", (0.01, 0.1, 1.0, 10.0)),
                    )
                ),
            )
        )


class MlrFamily:
    name = "mlr"

    def __init__(self, p_enter: float = 0.05, names=None):
        self.p_enter = p_enter
        self.names = names

    def fit(self, X, y, overrides: dict, seed: int):
        p_enter = overrides.get("p_enter", self.p_enter)
        return mlr.forward_stepwise(X, y, p_enter=p_enter, names=self.names)

    def predict(self, model, X):
        return mlr.predict(model, X)

    def default_grid(self) -> "GridSpec":
        return GridSpec(stages=())


# ---------------------------------------------------------------------------
# grid search


@dataclass(frozen=True)
class GridStage:
    """One tuning stage: up to a few axes searched jointly."""

    axes: tuple[tuple[str, tuple], ...]

    def __post_init__(self):
        if not self.axes:
            raise ConfigError("a grid stage needs at least one axis")
        for name, values in self.axes:
            if len(values) == 0:
                raise ConfigError(f"axis {name!r} has no candidate values")


@dataclass(frozen=True)
class GridSpec:
    stages: tuple[GridStage, ...] = ()


@dataclass(frozen=True)
class CvCell:
    stage: int
    overrides: dict
    mean_rmse: float | None
    std_rmse: float | None
    failed: bool
    error: str | None = None


@dataclass(frozen=True)
class CvResult:
    cells: tuple[CvCell, ...]
    chosen: dict  # accumulated winning overrides across stages
    chosen_mean_rmse: float | None


def _cell_seed(seed: int, stage: int, cell: int, fold: int) -> int:
    return int(np.random.SeedSequence((seed, stage, cell, fold)).generate_state(1)[0])


# seed namespace for curve fits, outside any plausible grid-stage index
_CURVE_STAGE = 1_000_003


def grid_search_cv(family, grid: GridSpec, folds: FoldPlan, X, y, seed: int = 0) -> CvResult:
    """Staged grid search: each stage fixes its winners before the next.

    Per cell, validation root-mean-square error is averaged across folds;
    the winning cell has minimal mean (first cell wins ties). Cells whose
    trainer fails on any fold are excluded; a stage with no surviving cell
    aborts the search.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    fold_pairs = [fold_rows(folds, k) for k in range(folds.k)]
    chosen: dict = {}
    cells: list[CvCell] = []
    chosen_mean = None
    for si, stage in enumerate(grid.stages):
        names = [a[0] for a in stage.axes]
        best_cell = None
        best_mean = None
        for ci, combo in enumerate(itertools.product(*(a[1] for a in stage.axes))):
            overrides = dict(chosen)
            overrides.update(dict(zip(names, combo)))
            fold_scores = []
            err = None
            for fi, (fit_idx, val_idx) in enumerate(fold_pairs):
                try:
                    model = family.fit(
                        X[fit_idx], y[fit_idx], overrides, _cell_seed(seed, si, ci, fi)
                    )
                    pred = family.predict(model, X[val_idx])
                    fold_scores.append(rmse(y[val_idx], pred))
                except RfForgeError as exc:
                    err = f"fold {fi}: {exc}"
                    break
            if err is not None:
                cells.append(CvCell(si, dict(zip(names, combo)), None, None, True, err))
                continue
            mean = float(np.mean(fold_scores))
            std = float(np.std(fold_scores, ddof=1)) if len(fold_scores) > 1 else 0.0
            cells.append(CvCell(si, dict(zip(names, combo)), mean, std, False))
            if best_mean is None or mean < best_mean:
                best_mean = mean
                best_cell = dict(zip(names, combo))
        if best_cell is None:
            raise ConvergenceError(
                f"tuning stage {si} ({'/'.join(names)}): every cell failed"
            )
        chosen.update(best_cell)
        chosen_mean = best_mean
    return CvResult(cells=tuple(cells), chosen=chosen, chosen_mean_rmse=chosen_mean)


# ---------------------------------------------------------------------------
# learning curves


@dataclass(frozen=True)
class LearningCurve:
    sizes: tuple[int, ...]
    train_rmse: tuple[float, ...]  # nan where the model could not fit
    test_rmse: tuple[float, ...]  # on the size-matched test prefix
    test_rmse_full: tuple[float, ...]  # extension: the whole test set


def learning_curve(family, split: SplitIndex, X, y, stride: int = 25,
                   overrides: dict | None = None, seed: int = 0) -> LearningCurve:
    """Incremental-training curve over prefixes of the shuffled train rows.

    For each size s (1, 1+stride, ... and always the full train size), the
    model is trained on the first s train rows and scored on those same rows
    and on the first min(s, |test|) test rows; the full test set is recorded
    as an extra column. Sizes where the family cannot fit yield nan points.
    """
    if stride < 1:
        raise ConfigError(f"stride must be at least 1, got {stride}")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    overrides = overrides or {}
    train_order = np.asarray(split.train_rows, dtype=np.intp)
    test_order = np.asarray(split.test_rows, dtype=np.intp)
    n_train = train_order.size
    sizes = list(range(1, n_train + 1, stride))
    if sizes[-1] != n_train:
        sizes.append(n_train)
    tr, te, tf = [], [], []
    for idx, s in enumerate(sizes):
        rows = train_order[:s]
        try:
            model = family.fit(
                X[rows], y[rows], overrides, _cell_seed(seed, _CURVE_STAGE, idx, 0)
            )
        except RfForgeError:
            tr.append(np.nan)
            te.append(np.nan)
            tf.append(np.nan)
            continue
        tr.append(rmse(y[rows], family.predict(model, X[rows])))
        sub = test_order[: min(s, test_order.size)]
        te.append(rmse(y[sub], family.predict(model, X[sub])) if sub.size else np.nan)
        tf.append(
            rmse(y[test_order], family.predict(model, X[test_order]))
            if test_order.size
            else np.nan
        )
    return LearningCurve(
        sizes=tuple(sizes),
        train_rmse=tuple(tr),
        test_rmse=tuple(te),
        test_rmse_full=tuple(tf),
    )
