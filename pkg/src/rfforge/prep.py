"""Cleaning, capping, sparse-row removal, windowed mode imputation, and the
rank-correlation collinearity screen."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import DataTable
from .errors import ConfigError, DataError, DegenerateDataError, ShapeError


@dataclass(frozen=True)
class ImputePlan:
    base_window: int = 10
    max_missing_ratio: float = 0.1
    sort_key: str | None = None  # None = the table's target column

    def __post_init__(self):
        if self.base_window < 1:
            raise ConfigError(f"base window must be at least 1, got {self.base_window}")
        if not 0.0 < self.max_missing_ratio < 1.0:
            raise ConfigError(
                f"max missing ratio must lie in (0, 1), got {self.max_missing_ratio}"
            )


@dataclass(frozen=True)
class WindowRecord:
    start: int  # positions in target-sorted order
    end: int
    missing: int
    mode: float
    warned: bool  # ratio still violated at end of table


@dataclass(frozen=True)
class ImputeAudit:
    windows: dict[str, tuple[WindowRecord, ...]]
    warnings: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "windows": {
                name: [
                    {
                        "start": w.start,
                        "end": w.end,
                        "missing": w.missing,
                        "mode": w.mode,
                        "warned": w.warned,
                    }
                    for w in ws
                ]
                for name, ws in self.windows.items()
            },
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class CapReport:
    bounds: dict[str, tuple[float, float]]
    removed_rows: int

    def to_dict(self) -> dict:
        return {
            "bounds": {k: [lo, hi] for k, (lo, hi) in self.bounds.items()},
            "removed_rows": self.removed_rows,
        }


@dataclass(frozen=True)
class ScreenPair:
    feature_a: str
    feature_b: str
    rho: float | None
    error: str | None = None


@dataclass(frozen=True)
class ScreenReport:
    pairs: tuple[ScreenPair, ...]
    dropped: tuple[str, ...]
    threshold: float

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "pairs": [
                {"a": p.feature_a, "b": p.feature_b, "rho": p.rho, "error": p.error}
                for p in self.pairs
            ],
            "dropped": list(self.dropped),
        }


def drop_missing_target(table: DataTable) -> DataTable:
    """Remove rows whose target cell is missing; order preserved."""
    _, miss = table.column(table.target_name)
    return table.take(np.flatnonzero(~miss))


def drop_incomplete_rows(table: DataTable) -> DataTable:
    """Remove rows with any missing input or target cell (no imputation path)."""
    cols = [table.column_index(n) for n in table.input_names + (table.target_name,)]
    keep = ~table.missing[:, cols].any(axis=1)
    return table.take(np.flatnonzero(keep))


def cap_features(table: DataTable, percentiles=(0.01, 0.99), bounds=None):
    """Remove rows with present values outside per-feature limits.

    Limits resolve per feature as: explicit bounds argument, else schema
    bounds, else empirical percentiles of the present values. A feature with
    neither schema bounds nor a percentile rule is a configuration error
    (targets without bounds are simply left uncapped).

    Returns (table, CapReport) so the resolved limits can be recorded and
    replayed on an independent database.
    """
    if percentiles is not None:
        p_lo, p_hi = percentiles
        if not 0.0 <= p_lo < p_hi <= 1.0:
            raise ConfigError(f"percentiles must satisfy 0 <= lo < hi <= 1, got {percentiles}")
    resolved: dict[str, tuple[float, float]] = {}
    for f in table.schema:
        if f.role == "excluded":
            continue
        name = f.name
        if bounds is not None and name in bounds:
            lo, hi = bounds[name]
        elif f.lower_bound is not None or f.upper_bound is not None:
            lo = -np.inf if f.lower_bound is None else f.lower_bound
            hi = np.inf if f.upper_bound is None else f.upper_bound
        elif f.role == "target":
            continue
        elif percentiles is None:
            raise ConfigError(f"no capping policy resolvable for feature {name!r}")
        else:
            vals, miss = table.column(name)
            present = vals[~miss]
            if present.size == 0:
                raise ConfigError(
                    f"feature {name!r} has no present values to resolve percentiles from"
                )
            lo, hi = np.percentile(present, [p_lo * 100.0, p_hi * 100.0])
        resolved[name] = (float(lo), float(hi))
    keep = np.ones(table.row_count, dtype=bool)
    for name, (lo, hi) in resolved.items():
        vals, miss = table.column(name)
        bad = ~miss & ((vals < lo) | (vals > hi))
        keep &= ~bad
    capped = table.take(np.flatnonzero(keep))
    return capped, CapReport(bounds=resolved, removed_rows=int((~keep).sum()))


def drop_sparse_rows(table: DataTable, max_missing_fraction: float = 0.55) -> DataTable:
    """Remove rows missing strictly more than the given fraction of inputs."""
    if not 0.0 <= max_missing_fraction <= 1.0:
        raise ConfigError(
            f"max missing fraction must lie in [0, 1], got {max_missing_fraction}"
        )
    cols = [table.column_index(n) for n in table.input_names]
    if not cols:
        return table
    frac = table.missing[:, cols].sum(axis=1) / len(cols)
    return table.take(np.flatnonzero(~(frac > max_missing_fraction)))


def _window_spans(miss: np.ndarray, base: int, ratio: float) -> list[tuple[int, int]]:
    """Partition positions 0..n into consecutive windows.

    Each window starts at base size and extends rightward while its missing
    ratio is violated; a final stretch shorter than base merges into the
    previous window.
    """
    n = miss.shape[0]
    spans: list[tuple[int, int]] = []
    start = 0
    while start < n:
        if n - start < base and spans:
            s, _ = spans.pop()
            spans.append((s, n))
            break
        end = min(start + base, n)
        while end < n and miss[start:end].sum() / (end - start) > ratio:
            end += 1
        spans.append((start, end))
        start = end
    return spans


def windowed_mode_impute(table: DataTable, plan: ImputePlan = ImputePlan()):
    """Fill every missing cell with the mode of its target-sorted window.

    Rows are ordered by ascending target (stable, so ties keep file order)
    and each feature column is cut into consecutive windows per the plan. A
    window that reaches the end of the table while still violating the
    missing ratio is imputed anyway and flagged. Mode ties resolve to the
    smallest value. Returns (table, ImputeAudit); row order is restored.
    """
    sort_name = plan.sort_key or table.target_name
    key_vals, key_miss = table.column(sort_name)
    if key_miss.any():
        raise DataError(
            f"sort column {sort_name!r} has {int(key_miss.sum())} missing values; "
            "drop those rows before imputing"
        )
    n = table.row_count
    if n == 0:
        return table, ImputeAudit(windows={}, warnings=())
    order = np.argsort(key_vals, kind="stable")
    values = table.values[order].copy()
    missing = table.missing[order].copy()

    audit_windows: dict[str, tuple[WindowRecord, ...]] = {}
    warnings: list[str] = []
    for j, f in enumerate(table.schema):
        if f.name == sort_name:
            continue
        col_miss = missing[:, j]
        if not col_miss.any():
            continue
        records = []
        for start, end in _window_spans(col_miss, plan.base_window, plan.max_missing_ratio):
            wm = col_miss[start:end]
            n_miss = int(wm.sum())
            if n_miss == 0:
                continue
            present = values[start:end, j][~wm]
            if present.size == 0:
                raise DegenerateDataError(
                    f"feature {f.name!r}: window rows {start}..{end} (target-sorted) "
                    "has no present values to take a mode from"
                )
            uniq, counts = np.unique(present, return_counts=True)
            mode = float(uniq[np.argmax(counts)])  # first max = smallest value
            warned = n_miss / (end - start) > plan.max_missing_ratio
            if warned:
                warnings.append(
                    f"feature {f.name!r}: terminal window rows {start}..{end} still has "
                    f"missing ratio {n_miss / (end - start):.3f} > {plan.max_missing_ratio}; "
                    "imputed anyway"
                )
            values[start:end, j][wm] = mode
            col_miss[start:end] = False
            records.append(WindowRecord(start, end, n_miss, mode, warned))
        audit_windows[f.name] = tuple(records)

    # restore the original row order
    inverse = np.empty(n, dtype=np.intp)
    inverse[order] = np.arange(n)
    out = table.replace_values(values[inverse], missing[inverse])
    return out, ImputeAudit(windows=audit_windows, warnings=tuple(warnings))


def _average_ranks(v: np.ndarray) -> np.ndarray:
    """1-based ranks, ties sharing the average of their positions."""
    n = v.shape[0]
    order = np.argsort(v, kind="stable")
    sv = v[order]
    edges = np.flatnonzero(np.r_[True, sv[1:] != sv[:-1], True])
    ranks_sorted = np.empty(n)
    for a, b in zip(edges[:-1], edges[1:]):
        ranks_sorted[a:b] = 0.5 * (a + b + 1)  # mean of ranks a+1 .. b
    ranks = np.empty(n)
    ranks[order] = ranks_sorted
    return ranks


def spearman_rho(x, y) -> float:
    """Rank correlation with average ranks for ties.

    Non-finite entries are treated as missing and removed pairwise.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or x.shape != y.shape:
        raise ShapeError(f"vectors must be 1-d and equal length, got {x.shape} and {y.shape}")
    keep = np.isfinite(x) & np.isfinite(y)
    if int(keep.sum()) < 2:
        raise DegenerateDataError(
            f"need at least 2 complete pairs for rank correlation, got {int(keep.sum())}"
        )
    rx = _average_ranks(x[keep])
    ry = _average_ranks(y[keep])
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sx = float(np.sqrt((dx * dx).sum()))
    sy = float(np.sqrt((dy * dy).sum()))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateDataError("rank correlation undefined: zero rank variance")
    return float((dx * dy).sum() / (sx * sy))


def screen_collinear(table: DataTable, threshold: float = 0.9) -> ScreenReport:
    """Flag highly rank-correlated input-feature pairs.

    For each pair at or above the threshold, the feature with more missing
    cells (tie: later schema order) is marked for dropping. Advisory only;
    callers decide whether to apply the drops. Per-pair failures are recorded
    in the report, not raised.
    """
    inputs = list(table.input_names)
    if len(inputs) < 2:
        raise ConfigError("collinearity screen needs at least 2 input features")
    miss_count = {name: int(table.column(name)[1].sum()) for name in inputs}
    pairs = []
    dropped: list[str] = []
    for ai in range(len(inputs)):
        for bi in range(ai + 1, len(inputs)):
            a, b = inputs[ai], inputs[bi]
            try:
                rho = spearman_rho(table.column(a)[0], table.column(b)[0])
            except DataError as exc:
                pairs.append(ScreenPair(a, b, None, str(exc)))
                continue
            pairs.append(ScreenPair(a, b, rho))
            if abs(rho) >= threshold:
                if miss_count[a] > miss_count[b]:
                    victim = a
                else:
                    victim = b  # fewer-or-equal missing in a: drop the later one
                if victim not in dropped:
                    dropped.append(victim)
    return ScreenReport(pairs=tuple(pairs), dropped=tuple(dropped), threshold=threshold)
