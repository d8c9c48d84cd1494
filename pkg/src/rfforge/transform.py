"""Rank-gaussianization and range scaling fitted on training data only.

The default composition maps each column through its training empirical
ranks into normal quantiles, then linearly onto a fixed output range using
the training extremes of the gaussianized values. Applying a fitted
transform to any other table reuses the stored training tables, so nothing
about the scaling can leak from evaluation data.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np
from scipy.special import ndtr, ndtri

from .dataset import DataTable
from .errors import ConfigError, DataError, DegenerateDataError, RangeError, SchemaError

ORDERS = ("gauss_then_minmax", "minmax_raw")


class FittedTransform:
    """Per-column state learned from one training table.

    rank_tables: sorted training values per column (the interpolation grid)
    x_min/x_max: extremes of the intermediate values (gaussianized under the
    default order, raw otherwise) that the final range scaling stretches.
    """

    def __init__(self, feature_names, target_name, rank_tables, x_min, x_max,
                 range_ends=(0.0, 1.0), order: str = "gauss_then_minmax"):
        if order not in ORDERS:
            raise ConfigError(f"unknown transform order {order!r}")
        lo, hi = float(range_ends[0]), float(range_ends[1])
        if not lo < hi:
            raise ConfigError(f"range ends must increase, got ({lo}, {hi})")
        self.feature_names = tuple(feature_names)
        self.target_name = str(target_name)
        if self.target_name not in self.feature_names:
            raise ConfigError(f"target {self.target_name!r} missing from feature list")
        self.rank_tables = tuple(
            np.ascontiguousarray(t, dtype=np.float64) for t in rank_tables
        )
        if len(self.rank_tables) != len(self.feature_names):
            raise ConfigError("one rank table per feature required")
        self.x_min = tuple(float(v) for v in x_min)
        self.x_max = tuple(float(v) for v in x_max)
        self.range_ends = (lo, hi)
        self.order = order

    def column_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise SchemaError(f"transform has no column {name!r}") from None

    def to_json(self) -> str:
        payload = {
            "version": 1,
            "order": self.order,
            "range_ends": list(self.range_ends),
            "target": self.target_name,
            "features": [
                {
                    "name": n,
                    "table": [float(v) for v in t],
                    "x_min": self.x_min[i],
                    "x_max": self.x_max[i],
                }
                for i, (n, t) in enumerate(zip(self.feature_names, self.rank_tables))
            ],
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "FittedTransform":
        payload = json.loads(text)
        if payload.get("version") != 1:
            raise ConfigError(f"unsupported transform version {payload.get('version')!r}")
        feats = payload["features"]
        return cls(
            feature_names=[f["name"] for f in feats],
            target_name=payload["target"],
            rank_tables=[np.asarray(f["table"], dtype=np.float64) for f in feats],
            x_min=[f["x_min"] for f in feats],
            x_max=[f["x_max"] for f in feats],
            range_ends=tuple(payload["range_ends"]),
            order=payload["order"],
        )

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


def _gauss(values: np.ndarray, table: np.ndarray) -> np.ndarray:
    n = table.shape[0]
    ranks = np.interp(values, table, np.arange(1, n + 1, dtype=np.float64))
    return ndtri((ranks - 0.5) / n)


def fit(table: DataTable, range_ends=(0.0, 1.0),
        order: str = "gauss_then_minmax") -> FittedTransform:
    """Learn per-column rank tables and scaling extremes from a complete table."""
    if table.missing.any():
        bad = [table.names[j] for j in np.nonzero(table.missing.any(axis=0))[0]]
        raise DataError(f"transform fitting needs complete columns, missing in {bad}")
    if table.row_count == 0:
        raise DegenerateDataError("cannot fit a transform on an empty table")
    tables, mins, maxs = [], [], []
    for j, name in enumerate(table.names):
        col = np.sort(table.values[:, j])
        if col[0] == col[-1]:
            raise DegenerateDataError(
                f"column {name!r} is constant; rank transform undefined"
            )
        tables.append(col)
        mid = _gauss(col, col) if order == "gauss_then_minmax" else col
        mins.append(float(mid.min()))
        maxs.append(float(mid.max()))
    return FittedTransform(table.names, table.target_name, tables, mins, maxs,
                           range_ends, order)


def apply(ft: FittedTransform, table: DataTable) -> DataTable:
    """Map every column of a table through the fitted transform.

    Column names and order must match the fit exactly. Missing cells stay
    missing. Out-of-range values saturate at the training extremes, so the
    output always lies inside the configured range.
    """
    if table.names != ft.feature_names:
        raise SchemaError(
            f"table columns {list(table.names)} do not match fitted columns "
            f"{list(ft.feature_names)}"
        )
    lo, hi = ft.range_ends
    out = np.empty_like(table.values)
    for j in range(len(ft.feature_names)):
        v = table.values[:, j]
        mid = _gauss(v, ft.rank_tables[j]) if ft.order == "gauss_then_minmax" else v
        span = ft.x_max[j] - ft.x_min[j]
        z = lo + (mid - ft.x_min[j]) * (hi - lo) / span
        out[:, j] = np.clip(z, lo, hi)
    return table.replace_values(out, table.missing)


def apply_column(ft: FittedTransform, name: str, values) -> np.ndarray:
    """Transform one column of raw values (used for targets fed to trainers)."""
    j = ft.column_index(name)
    v = np.ascontiguousarray(values, dtype=np.float64)
    lo, hi = ft.range_ends
    mid = _gauss(v, ft.rank_tables[j]) if ft.order == "gauss_then_minmax" else v
    span = ft.x_max[j] - ft.x_min[j]
    return np.clip(lo + (mid - ft.x_min[j]) * (hi - lo) / span, lo, hi)


def invert_target(ft: FittedTransform, values) -> np.ndarray:
    """Map transformed target values back to the physical scale.

    Only the target column supports inversion; estimates must already sit
    inside the configured output range.
    """
    j = ft.column_index(ft.target_name)
    v = np.ascontiguousarray(values, dtype=np.float64)
    lo, hi = ft.range_ends
    if v.size and (np.min(v) < lo or np.max(v) > hi):
        raise RangeError(
            f"values to invert must lie in [{lo}, {hi}]; "
            f"got range [{np.min(v)}, {np.max(v)}]"
        )
    span = ft.x_max[j] - ft.x_min[j]
    mid = ft.x_min[j] + (v - lo) * span / (hi - lo)
    table = ft.rank_tables[j]
    n = table.shape[0]
    if ft.order == "gauss_then_minmax":
        ranks = ndtr(mid) * n + 0.5
        return np.interp(ranks, np.arange(1, n + 1, dtype=np.float64), table)
    return mid
