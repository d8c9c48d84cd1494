"""Batch command line driver for the full estimation workflow.

One directory per run with stage-named subdirectories. Every stage reads
its inputs from the previous stage's files and writes its own, so any stage
can be re-run or resumed in isolation and the whole pipeline is a plain
sequence of stage calls. All numeric outputs are determined by the config
and seed alone.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import click
import numpy as np
import scipy
import yaml

from . import __version__, evaluation, explain, gbdt, mlr, prep, shift, svr, synth, transform
from ._kernels import BACKEND
from .dataset import (
    DataTable,
    SplitIndex,
    gas_schema,
    load_csv,
    load_schema,
    make_folds,
    merge_dedupe,
    oil_schema,
    save_schema,
    split_train_test,
    to_csv,
)
from .errors import ConfigError, DataError, RfForgeError

STAGES = ("prep", "tune", "train", "eval", "curve", "explain", "audit")
FAMILIES = ("gbdt", "svr", "mlr")


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    train_tables: tuple[str, ...]
    schema: str = "oil"
    independent_table: str | None = None
    out_dir: str | None = None
    seed: int = 0
    split_fraction: float = 0.90
    folds: int | None = None  # None: 10, or 3 below 2000 training rows
    alpha: float = 0.05
    impute_window: int = 10
    impute_ratio: float = 0.1
    sparse_threshold: float = 0.55
    curve_stride: int = 25
    screen_threshold: float = 0.9
    apply_screen_to: tuple[str, ...] = ("svr", "mlr")
    families: tuple[str, ...] = FAMILIES
    tune: bool = True
    grids: dict = field(default_factory=dict)
    gbdt_params: dict = field(default_factory=dict)
    svr_params: dict = field(default_factory=dict)
    p_enter: float = 0.05
    cap_percentiles: tuple[float, float] = (0.01, 0.99)
    transform_range: tuple[float, float] = (0.0, 1.0)
    transform_order: str = "gauss_then_minmax"
    curve_families: tuple[str, ...] = ("gbdt",)
    explain_rows: int = 20
    explain_background: int = 10
    explain_coalitions: int = 2048
    threads: int = 1


def validate_config(path) -> tuple[RunConfig | None, list[str]]:
    """Parse and fully validate a run config, collecting every violation."""
    errors: list[str] = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        return None, [f"cannot read config: {exc}"]
    except yaml.YAMLError as exc:
        return None, [f"config is not valid YAML: {exc}"]
    if not isinstance(doc, dict):
        return None, ["config must be a mapping"]

    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(doc) - known)
    for key in unknown:
        errors.append(f"unknown config key {key!r}")
    doc = {k: v for k, v in doc.items() if k in known}

    raw_tables = doc.get("train_tables")
    if not isinstance(raw_tables, (list, tuple)) or not raw_tables:
        errors.append("train_tables must be a non-empty list of CSV paths")
        raw_tables = []
    for p in raw_tables:
        if not Path(str(p)).is_file():
            errors.append(f"train table not found: {p}")
    doc["train_tables"] = tuple(str(p) for p in raw_tables)

    ind = doc.get("independent_table")
    if ind is not None:
        doc["independent_table"] = str(ind)
        if not Path(str(ind)).is_file():
            errors.append(f"independent table not found: {ind}")

    schema_ref = str(doc.get("schema", "oil"))
    doc["schema"] = schema_ref
    if schema_ref not in ("oil", "gas") and not Path(schema_ref).is_file():
        errors.append(f"schema must be 'oil', 'gas' or an existing file, got {schema_ref!r}")

    def number(key, lo, hi, lo_open=False, hi_open=False):
        if key not in doc:
            return
        try:
            v = float(doc[key])
        except (TypeError, ValueError):
            errors.append(f"{key} must be a number, got {doc[key]!r}")
            return
        ok_lo = v > lo if lo_open else v >= lo
        ok_hi = v < hi if hi_open else v <= hi
        if not (ok_lo and ok_hi):
            l, r = "(" if lo_open else "[", ")" if hi_open else "]"
            errors.append(f"{key} must lie in {l}{lo}, {hi}{r}, got {v}")

    number("split_fraction", 0.0, 1.0, lo_open=True)
    number("alpha", 0.0, 1.0, lo_open=True, hi_open=True)
    number("impute_ratio", 0.0, 1.0, lo_open=True)
    number("sparse_threshold", 0.0, 1.0)
    number("screen_threshold", 0.0, 1.0)
    number("p_enter", 0.0, 1.0, lo_open=True, hi_open=True)

    for key, minimum in (
        ("folds", 2), ("impute_window", 1), ("curve_stride", 1), ("seed", 0),
        ("explain_rows", 1), ("explain_background", 1), ("explain_coalitions", 2),
        ("threads", 1),
    ):
        if key not in doc:
            continue
        if not isinstance(doc[key], int) or isinstance(doc[key], bool):
            errors.append(f"{key} must be an integer, got {doc[key]!r}")
        elif minimum is not None and doc[key] < minimum:
            errors.append(f"{key} must be at least {minimum}, got {doc[key]}")

    for key in ("families", "apply_screen_to", "curve_families"):
        if key not in doc:
            continue
        vals = doc[key]
        if not isinstance(vals, (list, tuple)):
            errors.append(f"{key} must be a list")
            continue
        bad = sorted(set(str(v) for v in vals) - set(FAMILIES))
        if bad:
            errors.append(f"{key} contains unknown families {bad}")
        doc[key] = tuple(str(v) for v in vals)
    if "families" in doc and not doc["families"]:
        errors.append("families must not be empty")

    if "tune" in doc and not isinstance(doc["tune"], bool):
        errors.append(f"tune must be true or false, got {doc['tune']!r}")

    if "grids" in doc:
        grids = doc["grids"]
        if not isinstance(grids, dict):
            errors.append("grids must map family name to a list of stages")
        else:
            for fam, stages in grids.items():
                if fam not in FAMILIES:
                    errors.append(f"grids: unknown family {fam!r}")
                    continue
                if not isinstance(stages, list):
                    errors.append(f"grids.{fam} must be a list of stages")
                    continue
                for i, stage in enumerate(stages):
                    if not isinstance(stage, dict) or not stage:
                        errors.append(f"grids.{fam}[{i}] must be a non-empty mapping")
                        continue
                    for axis, vals in stage.items():
                        if not isinstance(vals, (list, tuple)) or not vals:
                            errors.append(
                                f"grids.{fam}[{i}].{axis} must be a non-empty list"
                            )

    for key, width in (("cap_percentiles", 2), ("transform_range", 2)):
        if key not in doc:
            continue
        v = doc[key]
        if not isinstance(v, (list, tuple)) or len(v) != width:
            errors.append(f"{key} must be a pair of numbers")
        else:
            doc[key] = tuple(float(x) for x in v)
    if "transform_order" in doc and doc["transform_order"] not in transform.ORDERS:
        errors.append(
            f"transform_order must be one of {list(transform.ORDERS)}, "
            f"got {doc['transform_order']!r}"
        )
    for key in ("gbdt_params", "svr_params"):
        if key in doc and not isinstance(doc[key], dict):
            errors.append(f"{key} must be a mapping")
    if "out_dir" in doc and doc["out_dir"] is not None:
        doc["out_dir"] = str(doc["out_dir"])

    if errors:
        return None, errors
    cfg = RunConfig(**doc)
    try:
        _gbdt_base(cfg)
        _svr_base(cfg)
    except ConfigError as exc:
        errors.append(str(exc))
    return (cfg, []) if not errors else (None, errors)


def load_config(path) -> RunConfig:
    cfg, errors = validate_config(path)
    if cfg is None:
        raise ConfigError("invalid config:\n  " + "\n  ".join(errors))
    return cfg


def _gbdt_base(cfg: RunConfig) -> gbdt.GbdtParams:
    try:
        return gbdt.GbdtParams(**cfg.gbdt_params)
    except TypeError as exc:
        raise ConfigError(f"gbdt_params: {exc}") from exc


def _svr_base(cfg: RunConfig) -> svr.SvrParams:
    try:
        return svr.SvrParams(**cfg.svr_params)
    except TypeError as exc:
        raise ConfigError(f"svr_params: {exc}") from exc


def _schema_for(ref: str):
    if ref == "oil":
        return oil_schema()
    if ref == "gas":
        return gas_schema()
    return load_schema(ref)


# ---------------------------------------------------------------------------
# small I/O helpers


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating,)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _require(path: Path, stage: str) -> Path:
    if not path.exists():
        raise ConfigError(
            f"missing artifact {path}; run the {stage} stage first"
        )
    return path


def emit_scatter(y_true, y_pred, path) -> None:
    """Two-column measured/estimated CSV plus reference-line metadata."""
    y_true = np.asarray(y_true, dtype=np.float64).ravel()
    y_pred = np.asarray(y_pred, dtype=np.float64).ravel()
    if y_true.shape != y_pred.shape:
        raise ConfigError(
            f"scatter vectors differ in length: {y_true.shape} vs {y_pred.shape}"
        )
    path = Path(path)
    _write_csv(path, ["measured", "estimated"], zip(y_true, y_pred))
    meta = {
        "columns": ["measured", "estimated"],
        "n": int(y_true.size),
        "reference_line": {"slope": 1.0, "intercept": 0.0},
    }
    _write_json(path.with_name(path.stem + ".meta.json"), meta)


# ---------------------------------------------------------------------------
# stage implementations


def _overlap_count(merged: DataTable, other: DataTable) -> int:
    def keys(t: DataTable):
        vals = t.values.copy()
        vals[t.missing] = 0.0
        return {
            (vals[i].tobytes(), t.missing[i].tobytes()) for i in range(t.row_count)
        }

    return len(keys(merged) & keys(other.project(merged.names)))


def _family_features(cfg: RunConfig, family: str, input_names, dropped) -> list[str]:
    if family in cfg.apply_screen_to:
        return [n for n in input_names if n not in dropped]
    return list(input_names)


def _matrix(table: DataTable, feature_names) -> tuple[np.ndarray, np.ndarray]:
    cols = [table.column_index(n) for n in feature_names]
    X = np.ascontiguousarray(table.values[:, cols])
    y = np.ascontiguousarray(table.values[:, table.column_index(table.target_name)])
    return X, y


def stage_prep(cfg: RunConfig, out: Path) -> list[str]:
    d = out / "prep"
    d.mkdir(parents=True, exist_ok=True)
    schema = _schema_for(cfg.schema)
    tables = [load_csv(p, schema) for p in cfg.train_tables]
    merged = merge_dedupe(tables)

    independent = None
    if cfg.independent_table is not None:
        independent = load_csv(cfg.independent_table, schema)
        n_overlap = _overlap_count(merged, independent)
        if n_overlap:
            raise ConfigError(
                f"independent table shares {n_overlap} rows with the training "
                "tables; the evaluation would not be independent"
            )

    counts = {"merged": merged.row_count}
    cleaned = prep.drop_missing_target(merged)
    counts["after_target_drop"] = cleaned.row_count
    cleaned, cap_report = prep.cap_features(cleaned, percentiles=cfg.cap_percentiles)
    counts["after_cap"] = cleaned.row_count
    cleaned = prep.drop_sparse_rows(cleaned, cfg.sparse_threshold)
    counts["after_sparse_drop"] = cleaned.row_count

    split = split_train_test(cleaned, cfg.split_fraction, seed=cfg.seed)
    train_raw = cleaned.take(split.train_rows)
    test_raw = cleaned.take(split.test_rows)
    counts["train"] = train_raw.row_count
    counts["test"] = test_raw.row_count

    plan = prep.ImputePlan(base_window=cfg.impute_window, max_missing_ratio=cfg.impute_ratio)
    train_imp, audit_train = prep.windowed_mode_impute(train_raw, plan)
    if test_raw.row_count:
        test_imp, audit_test = prep.windowed_mode_impute(test_raw, plan)
    else:
        test_imp, audit_test = test_raw, None

    screen = prep.screen_collinear(train_imp, cfg.screen_threshold)
    ft = transform.fit(train_imp, range_ends=cfg.transform_range, order=cfg.transform_order)
    train_scaled = transform.apply(ft, train_imp)
    test_scaled = transform.apply(ft, test_imp) if test_imp.row_count else test_imp

    save_schema(schema, d / "schema.yaml")
    to_csv(train_raw, d / "train_raw.csv")
    to_csv(test_raw, d / "test_raw.csv")
    to_csv(train_imp, d / "train.csv")
    to_csv(test_imp, d / "test.csv")
    to_csv(train_scaled, d / "train_scaled.csv")
    to_csv(test_scaled, d / "test_scaled.csv")
    with open(d / "transform.json", "w", encoding="utf-8") as fh:
        fh.write(ft.to_json())

    if independent is not None:
        ind = independent.project(merged.names)
        ind = prep.drop_missing_target(ind)
        # replay the exact limits resolved on the training side
        ind, _ = prep.cap_features(ind, percentiles=None, bounds=cap_report.bounds)
        ind = prep.drop_incomplete_rows(ind)
        counts["independent"] = ind.row_count
        if ind.row_count == 0:
            raise DataError("independent table has no complete in-range rows left")
        to_csv(ind, d / "independent.csv")
        to_csv(transform.apply(ft, ind), d / "independent_scaled.csv")

    info = {
        "counts": counts,
        "cap": cap_report.to_dict(),
        "screen": screen.to_dict(),
        "impute_train": audit_train.to_dict(),
        "impute_test": audit_test.to_dict() if audit_test is not None else None,
        "split": {
            "fraction": cfg.split_fraction,
            "seed": split.seed,
            "train_rows": list(split.train_rows),
            "test_rows": list(split.test_rows),
        },
        "transform_fingerprint": ft.fingerprint(),
        "has_independent": independent is not None,
    }
    _write_json(d / "prep.json", info)
    names = [
        "schema.yaml", "train_raw.csv", "test_raw.csv", "train.csv", "test.csv",
        "train_scaled.csv", "test_scaled.csv", "transform.json", "prep.json",
    ]
    if independent is not None:
        names += ["independent.csv", "independent_scaled.csv"]
    return [f"prep/{n}" for n in names]


def _load_prep(out: Path):
    d = out / "prep"
    _require(d / "prep.json", "prep")
    schema = load_schema(d / "schema.yaml")
    info = _read_json(d / "prep.json")
    return d, schema, info


def _grid_from_config(raw_stages) -> evaluation.GridSpec:
    stages = []
    for stage in raw_stages:
        axes = tuple((str(axis), tuple(vals)) for axis, vals in stage.items())
        stages.append(evaluation.GridStage(axes))
    return evaluation.GridSpec(stages=tuple(stages))


def _adapter(cfg: RunConfig, family: str, feature_names):
    if family == "gbdt":
        return evaluation.GbdtFamily(_gbdt_base(cfg))
    if family == "svr":
        return evaluation.SvrFamily(_svr_base(cfg))
    return evaluation.MlrFamily(cfg.p_enter, names=list(feature_names))


def stage_tune(cfg: RunConfig, out: Path) -> list[str]:
    d = out / "tune"
    d.mkdir(parents=True, exist_ok=True)
    pd, schema, info = _load_prep(out)
    train_scaled = load_csv(pd / "train_scaled.csv", schema)
    dropped = set(info["screen"]["dropped"])
    n = train_scaled.row_count
    split = SplitIndex(train_rows=tuple(range(n)), test_rows=(), seed=cfg.seed)
    k = cfg.folds if cfg.folds is not None else (10 if n >= 2000 else 3)
    folds = make_folds(split, k, seed=cfg.seed)

    result: dict = {"folds": k}
    for family in cfg.families:
        features = _family_features(cfg, family, train_scaled.input_names, dropped)
        adapter = _adapter(cfg, family, features)
        if family in cfg.grids:
            grid = _grid_from_config(cfg.grids[family])
        else:
            grid = adapter.default_grid()
        if not cfg.tune or not grid.stages:
            result[family] = {"chosen": {}, "chosen_mean_rmse": None, "cells": []}
            continue
        X, y = _matrix(train_scaled, features)
        cv = evaluation.grid_search_cv(adapter, grid, folds, X, y, seed=cfg.seed)
        result[family] = {
            "chosen": cv.chosen,
            "chosen_mean_rmse": cv.chosen_mean_rmse,
            "cells": [
                {
                    "stage": c.stage,
                    "overrides": c.overrides,
                    "mean_rmse": c.mean_rmse,
                    "std_rmse": c.std_rmse,
                    "failed": c.failed,
                    "error": c.error,
                }
                for c in cv.cells
            ],
        }
    _write_json(d / "tuning.json", result)
    return ["tune/tuning.json"]


def _chosen_overrides(out: Path, family: str) -> dict:
    path = out / "tune" / "tuning.json"
    if not path.exists():
        return {}
    doc = _read_json(path)
    return doc.get(family, {}).get("chosen", {})


def stage_train(cfg: RunConfig, out: Path) -> list[str]:
    d = out / "train"
    d.mkdir(parents=True, exist_ok=True)
    pd, schema, info = _load_prep(out)
    train_scaled = load_csv(pd / "train_scaled.csv", schema)
    dropped = set(info["screen"]["dropped"])
    artifacts = []
    for family in cfg.families:
        features = _family_features(cfg, family, train_scaled.input_names, dropped)
        X, y = _matrix(train_scaled, features)
        chosen = _chosen_overrides(out, family)
        if family == "gbdt":
            params = replace(_gbdt_base(cfg), **chosen, seed=cfg.seed)
            payload = json.loads(gbdt.to_json(gbdt.train(X, y, params)))
        elif family == "svr":
            params = replace(_svr_base(cfg), **chosen)
            payload = json.loads(svr.to_json(svr.train(X, y, params)))
        else:
            p_enter = chosen.get("p_enter", cfg.p_enter)
            model = mlr.forward_stepwise(X, y, p_enter=p_enter, names=features)
            payload = json.loads(mlr.to_json(model))
        doc = {"family": family, "features": features, "overrides": chosen,
               "payload": payload}
        name = f"model_{family}.json"
        _write_json(d / name, doc)
        artifacts.append(f"train/{name}")
    return artifacts


def _load_model(out: Path, family: str):
    doc = _read_json(_require(out / "train" / f"model_{family}.json", "train"))
    payload = json.dumps(doc["payload"])
    if family == "gbdt":
        model = gbdt.from_json(payload)
        predictor = lambda X: gbdt.predict(model, X)
    elif family == "svr":
        model = svr.from_json(payload)
        predictor = lambda X: svr.predict(model, X)
    else:
        model = mlr.from_json(payload)
        predictor = lambda X: mlr.predict(model, X)
    return model, predictor, doc["features"]


def stage_eval(cfg: RunConfig, out: Path) -> list[str]:
    d = out / "eval"
    d.mkdir(parents=True, exist_ok=True)
    pd, schema, info = _load_prep(out)
    with open(pd / "transform.json", "r", encoding="utf-8") as fh:
        ft = transform.FittedTransform.from_json(fh.read())
    lo, hi = ft.range_ends

    splits = [("train", "train.csv", "train_scaled.csv")]
    if (out / "prep" / "test.csv").exists():
        test = load_csv(pd / "test.csv", schema)
        if test.row_count:
            splits.append(("test", "test.csv", "test_scaled.csv"))
    if info.get("has_independent"):
        splits.append(("independent", "independent.csv", "independent_scaled.csv"))

    rows = []
    artifacts = []
    for family in cfg.families:
        model, predictor, features = _load_model(out, family)
        for label, native_name, scaled_name in splits:
            native = load_csv(pd / native_name, schema)
            scaled = load_csv(pd / scaled_name, schema)
            X, y_scaled = _matrix(scaled, features)
            y_native, _ = native.column(native.target_name)
            pred_scaled = np.clip(predictor(X), lo, hi)
            pred_native = transform.invert_target(ft, pred_scaled)
            rep_n = evaluation.evaluate(y_native, pred_native, label)
            rep_s = evaluation.evaluate(y_scaled, pred_scaled, label)
            rows.append([
                family, label, rep_n.n,
                rep_n.rmse, rep_n.cd, rep_n.r,
                rep_s.rmse, rep_s.cd, rep_s.r,
            ])
            scatter = d / f"scatter_{family}_{label}.csv"
            emit_scatter(y_native, pred_native, scatter)
            artifacts += [
                f"eval/{scatter.name}",
                f"eval/{scatter.stem}.meta.json",
            ]
    _write_csv(
        d / "metrics.csv",
        ["family", "split", "n", "rmse", "cd", "r",
         "rmse_scaled", "cd_scaled", "r_scaled"],
        rows,
    )
    _write_json(d / "eval.json", {"transform_fingerprint": ft.fingerprint()})
    return ["eval/metrics.csv", "eval/eval.json"] + artifacts


def stage_curve(cfg: RunConfig, out: Path) -> list[str]:
    d = out / "curve"
    d.mkdir(parents=True, exist_ok=True)
    pd, schema, info = _load_prep(out)
    train_scaled = load_csv(pd / "train_scaled.csv", schema)
    test_scaled = load_csv(pd / "test_scaled.csv", schema)
    dropped = set(info["screen"]["dropped"])
    artifacts = []
    for family in cfg.curve_families:
        features = _family_features(cfg, family, train_scaled.input_names, dropped)
        Xa, ya = _matrix(train_scaled, features)
        Xb, yb = _matrix(test_scaled, features)
        X = np.vstack([Xa, Xb]) if Xb.size else Xa
        y = np.concatenate([ya, yb]) if yb.size else ya
        split = SplitIndex(
            train_rows=tuple(range(Xa.shape[0])),
            test_rows=tuple(range(Xa.shape[0], X.shape[0])),
            seed=cfg.seed,
        )
        adapter = _adapter(cfg, family, features)
        curve = evaluation.learning_curve(
            adapter, split, X, y, stride=cfg.curve_stride,
            overrides=_chosen_overrides(out, family), seed=cfg.seed,
        )
        name = f"curve_{family}.csv"
        _write_csv(
            d / name,
            ["size", "train_rmse", "test_rmse", "test_rmse_full"],
            zip(curve.sizes, curve.train_rmse, curve.test_rmse, curve.test_rmse_full),
        )
        artifacts.append(f"curve/{name}")
    return artifacts


def stage_explain(cfg: RunConfig, out: Path) -> list[str]:
    d = out / "explain"
    d.mkdir(parents=True, exist_ok=True)
    pd, schema, info = _load_prep(out)
    train_scaled = load_csv(pd / "train_scaled.csv", schema)
    test_scaled = load_csv(pd / "test_scaled.csv", schema)
    sample_table = test_scaled if test_scaled.row_count else train_scaled
    dropped = set(info["screen"]["dropped"])
    artifacts = []
    for family in cfg.families:
        model, predictor, features = _load_model(out, family)
        Xs, _ = _matrix(sample_table, features)
        Xs = Xs[: cfg.explain_rows]
        if family == "mlr":
            summary = explain.summarize_coefficients(model, features)
            att = None
        elif family == "gbdt":
            att = explain.tree_shap(model, Xs, feature_names=features)
            summary = explain.summarize_attribution(att, Xs)
        else:
            Xb, _ = _matrix(train_scaled, features)
            att = explain.kernel_shap(
                predictor, Xb[: cfg.explain_background], Xs,
                feature_names=features, n_coalitions=cfg.explain_coalitions,
                seed=cfg.seed,
            )
            summary = explain.summarize_attribution(att, Xs)
        imp_name = f"importance_{family}.csv"
        _write_csv(d / imp_name, ["feature", "score", "sign"],
                   [[r["feature"], r["score"], r["sign"]] for r in summary.to_rows()])
        artifacts.append(f"explain/{imp_name}")
        if att is not None:
            att_name = f"attributions_{family}.csv"
            _write_csv(d / att_name, list(att.feature_names), att.values)
            _write_json(d / f"attributions_{family}.meta.json",
                        {"base_value": att.base_value, "n": int(att.values.shape[0])})
            artifacts += [f"explain/{att_name}", f"explain/attributions_{family}.meta.json"]
    return artifacts


def stage_audit(cfg: RunConfig, out: Path) -> list[str]:
    d = out / "audit"
    d.mkdir(parents=True, exist_ok=True)
    pd, schema, info = _load_prep(out)
    train_raw = load_csv(pd / "train_raw.csv", schema)
    comparisons = []
    test_raw = load_csv(pd / "test_raw.csv", schema)
    if test_raw.row_count:
        comparisons.append(("test", test_raw))
    if info.get("has_independent"):
        comparisons.append(("independent", load_csv(pd / "independent.csv", schema)))
    artifacts = []
    for label, other in comparisons:
        report = shift.audit(train_raw, other, alpha=cfg.alpha, label=f"train_vs_{label}")
        rows = []
        for r in report.rows:
            rows.append([r.column, "welch_t", r.t, r.df, r.t_p, r.t_reject, r.error])
            rows.append([r.column, "ks", r.ks_stat, r.ks_crit, r.ks_p, r.ks_reject, r.error])
        name = f"shift_{label}"
        _write_csv(d / f"{name}.csv",
                   ["column", "test", "statistic", "reference", "p", "reject", "error"],
                   rows)
        _write_json(d / f"{name}.json", report.to_dict())
        artifacts += [f"audit/{name}.csv", f"audit/{name}.json"]
    return artifacts


_STAGE_FNS = {
    "prep": stage_prep,
    "tune": stage_tune,
    "train": stage_train,
    "eval": stage_eval,
    "curve": stage_curve,
    "explain": stage_explain,
    "audit": stage_audit,
}


def run_pipeline(cfg: RunConfig, out, config_digest: str = "", resume: str | None = None) -> dict:
    """Execute the staged workflow and write the manifest.

    A stage failure still writes the manifest with the artifacts completed
    so far plus the failing stage name, then re-raises.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if resume is not None and resume not in STAGES:
        raise ConfigError(f"unknown resume stage {resume!r}; stages are {list(STAGES)}")
    start = STAGES.index(resume) if resume is not None else 0
    manifest: dict = {
        "config_sha256": config_digest,
        "seed": cfg.seed,
        "threads": cfg.threads,
        "backend": BACKEND,
        "versions": {
            "rfforge": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "stages": [],
        "completed": False,
    }
    for name in STAGES[start:]:
        t0 = time.perf_counter()
        try:
            artifacts = _STAGE_FNS[name](cfg, out)
        except Exception as exc:
            manifest["failed_stage"] = name
            manifest["error"] = str(exc)
            _write_json(out / "manifest.json", manifest)
            raise
        manifest["stages"].append({
            "name": name,
            "seconds": round(time.perf_counter() - t0, 3),
            "artifacts": artifacts,
        })
    prep_info = _read_json(out / "prep" / "prep.json")
    manifest["transform_fingerprint"] = prep_info["transform_fingerprint"]
    eval_info_path = out / "eval" / "eval.json"
    if eval_info_path.exists():
        manifest["eval_transform_fingerprint"] = _read_json(eval_info_path)[
            "transform_fingerprint"
        ]
    manifest["completed"] = True
    _write_json(out / "manifest.json", manifest)
    return manifest


# ---------------------------------------------------------------------------
# command definitions


def _resolve(cfg: RunConfig, out, seed, threads) -> tuple[RunConfig, Path]:
    if out is None:
        out = cfg.out_dir
    if out is None:
        raise ConfigError("no output directory: pass --out or set out_dir in the config")
    updates = {}
    if seed is not None:
        updates["seed"] = seed
    if threads is not None:
        updates["threads"] = threads
    elif os.environ.get("RF_FORGE_THREADS"):
        try:
            updates["threads"] = int(os.environ["RF_FORGE_THREADS"])
        except ValueError:
            raise ConfigError(
                f"RF_FORGE_THREADS must be an integer, got {os.environ['RF_FORGE_THREADS']!r}"
            ) from None
    if updates:
        cfg = replace(cfg, **updates)
    return cfg, Path(out)


def _digest(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


_shared = [
    click.option("--config", "config_path", required=True,
                 type=click.Path(exists=True, dir_okay=False), help="Run config YAML."),
    click.option("--out", "out", default=None, type=click.Path(file_okay=False),
                 help="Output directory (overrides out_dir in the config)."),
    click.option("--seed", type=int, default=None, help="Override the config seed."),
    click.option("--threads", type=int, default=None,
                 help="Worker threads (falls back to RF_FORGE_THREADS)."),
]


def _with_shared(fn):
    for opt in reversed(_shared):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(version=__version__, prog_name="rfforge")
def cli_group():
    """Recovery-factor estimation toolkit: staged batch pipeline."""


def _stage_command(name: str, help_text: str):
    @cli_group.command(name=name, help=help_text)
    @_with_shared
    def _cmd(config_path, out, seed, threads, _stage=name):
        cfg, out_path = _resolve(load_config(config_path), out, seed, threads)
        artifacts = _STAGE_FNS[_stage](cfg, out_path)
        click.echo(f"{_stage}: wrote {len(artifacts)} artifacts under {out_path}")
    return _cmd


_stage_command("prep", "Ingest, merge, clean, split, impute, screen and scale.")
_stage_command("tune", "Cross-validated staged grid search on the prepared train split.")
_stage_command("train", "Train final models with the tuned parameters.")
_stage_command("eval", "Score all splits and emit metric tables and scatter data.")
_stage_command("curve", "Incremental-training learning curves.")
_stage_command("explain", "Per-estimate attributions and importance rankings.")
_stage_command("audit", "Distribution-shift tests between train and the other splits.")


@cli_group.command(name="run", help="Execute every stage in order and write the manifest.")
@_with_shared
@click.option("--resume", default=None, type=click.Choice(STAGES),
              help="Skip stages before this one, reusing their artifacts.")
def _run_cmd(config_path, out, seed, threads, resume):
    cfg, out_path = _resolve(load_config(config_path), out, seed, threads)
    manifest = run_pipeline(cfg, out_path, config_digest=_digest(config_path), resume=resume)
    click.echo(f"run complete: {len(manifest['stages'])} stages, manifest at "
               f"{out_path / 'manifest.json'}")


@cli_group.command(name="synth", help="Generate synthetic fixture databases from a spec.")
@_with_shared
def _synth_cmd(config_path, out, seed, threads):
    with open(config_path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict) or "databases" not in doc:
        raise ConfigError("synth config must be a mapping with a 'databases' list")
    doc = dict(doc)
    base_seed = int(doc.pop("seed", 0))
    if seed is not None:
        base_seed = seed
    databases = doc.pop("databases")
    if doc:
        raise ConfigError(f"unknown synth config keys {sorted(doc)}")
    out_path = Path(out) if out is not None else Path(".")
    out_path.mkdir(parents=True, exist_ok=True)
    for i, entry in enumerate(databases):
        if not isinstance(entry, dict) or "file" not in entry or "rows" not in entry:
            raise ConfigError(f"databases[{i}] needs 'file' and 'rows'")
        entry = dict(entry)
        file_name = str(entry.pop("file"))
        rows = int(entry.pop("rows"))
        db_seed = int(entry.pop("seed", base_seed + i))
        spec = synth.spec_from_dict(entry.pop("spec", {"preset": "oil"}))
        if entry:
            raise ConfigError(f"databases[{i}]: unknown keys {sorted(entry)}")
        table = synth.synth_generate(spec, rows, seed=db_seed)
        to_csv(table, out_path / file_name)
        click.echo(f"synth: wrote {rows} rows to {out_path / file_name}")


def main() -> None:
    """Console entry point with stable exit codes."""
    try:
        cli_group(standalone_mode=False)
    except click.exceptions.Exit as exc:
        sys.exit(exc.exit_code)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.exceptions.ClickException as exc:
        exc.show()
        sys.exit(2)
    except RfForgeError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(exc.exit_code)
    except OSError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        sys.exit(5)


if __name__ == "__main__":
    main()
