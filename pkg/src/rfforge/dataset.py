"""Tabular data model: schemas, tables, CSV round-trip, merging, splitting.

Tables are immutable. Values are float64 with NaN in missing slots, but the
boolean mask is the authority on missingness so bounds checks can never
confuse a sentinel with a measurement.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import yaml

from .errors import ConfigError, ParseError, SchemaError, ShapeError

ROLES = ("input", "target", "excluded")


@dataclass(frozen=True)
class FeatureSchema:
    """One column: identifier, unit, role, optional physical bounds."""

    name: str
    unit: str = ""
    role: str = "input"
    lower_bound: float | None = None
    upper_bound: float | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigError(f"feature {self.name!r}: unknown role {self.role!r}")
        if (
            self.lower_bound is not None
            and self.upper_bound is not None
            and self.lower_bound > self.upper_bound
        ):
            raise ConfigError(
                f"feature {self.name!r}: lower bound {self.lower_bound} exceeds "
                f"upper bound {self.upper_bound}"
            )


def _check_schema(schema: list[FeatureSchema]) -> tuple[FeatureSchema, ...]:
    schema = tuple(schema)
    names = [f.name for f in schema]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise SchemaError(f"duplicate feature names: {dupes}")
    targets = [f.name for f in schema if f.role == "target"]
    if len(targets) != 1:
        raise SchemaError(f"schema must have exactly one target, found {targets}")
    return schema


class DataTable:
    """Immutable columnar table with a per-cell missing mask.

    values: (n, m) float64, NaN where missing
    missing: (n, m) bool
    provenance: length-n tuple of database labels
    """

    def __init__(self, schema, values, missing, provenance=None):
        self.schema = _check_schema(schema)
        values = np.asarray(values, dtype=np.float64)
        missing = np.asarray(missing, dtype=bool)
        if values.ndim != 2 or values.shape[1] != len(self.schema):
            raise ShapeError(
                f"values shape {values.shape} does not match schema width {len(self.schema)}"
            )
        if missing.shape != values.shape:
            raise ShapeError(f"missing mask shape {missing.shape} != values shape {values.shape}")
        values = values.copy()
        values[missing] = np.nan
        if provenance is None:
            provenance = ("",) * values.shape[0]
        provenance = tuple(str(p) for p in provenance)
        if len(provenance) != values.shape[0]:
            raise ShapeError("provenance length does not match row count")
        values.flags.writeable = False
        missing = missing.copy()
        missing.flags.writeable = False
        self.values = values
        self.missing = missing
        self.provenance = provenance

    @property
    def row_count(self) -> int:
        return self.values.shape[0]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.schema)

    @property
    def target_name(self) -> str:
        return next(f.name for f in self.schema if f.role == "target")

    @property
    def input_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.schema if f.role == "input")

    def column_index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"no feature named {name!r}") from None

    def column(self, name: str) -> tuple[np.ndarray, np.ndarray]:
        """Return (values, missing) for one column."""
        j = self.column_index(name)
        return self.values[:, j], self.missing[:, j]

    def take(self, rows) -> "DataTable":
        """New table holding the given rows, in the given order."""
        rows = np.asarray(rows, dtype=np.intp)
        return DataTable(
            self.schema,
            self.values[rows],
            self.missing[rows],
            tuple(self.provenance[i] for i in rows),
        )

    def project(self, names) -> "DataTable":
        """New table holding the given columns, in the given order."""
        idx = [self.column_index(n) for n in names]
        return DataTable(
            [self.schema[j] for j in idx],
            self.values[:, idx],
            self.missing[:, idx],
            self.provenance,
        )

    def with_column(self, name: str, values, missing) -> "DataTable":
        """New table with one column replaced."""
        j = self.column_index(name)
        v = self.values.copy()
        m = self.missing.copy()
        v[:, j] = values
        m[:, j] = missing
        return DataTable(self.schema, v, m, self.provenance)

    def replace_values(self, values, missing) -> "DataTable":
        return DataTable(self.schema, values, missing, self.provenance)


@dataclass(frozen=True)
class SplitIndex:
    """Train/test partition. Rows are kept in shuffle order, so prefixes of
    train_rows give the reproducible incremental-training sequence."""

    train_rows: tuple[int, ...]
    test_rows: tuple[int, ...]
    seed: int


@dataclass(frozen=True)
class FoldPlan:
    fold_assignments: dict  # train row index -> fold id
    k: int


def oil_schema() -> list[FeatureSchema]:
    """Canonical oil-reservoir schema with the published physical bounds."""
    return [
        FeatureSchema("api_gravity", "deg API", "input"),
        FeatureSchema("bo", "RB/STB", "input", 1.0, 3.0),
        FeatureSchema("gor", "MSCF/RB", "input", 0.0, 60.0),
        FeatureSchema("sw", "-", "input", 0.0, 1.0),
        FeatureSchema("temperature", "F", "input"),
        FeatureSchema("pressure", "psi", "input"),
        FeatureSchema("thickness", "ft", "input"),
        FeatureSchema("reserves", "STB", "input", 0.0, 5.0e11),
        FeatureSchema("permeability", "mD", "input"),
        FeatureSchema("porosity", "ft3/ft3", "input", 0.0, 1.0),
        FeatureSchema("area", "acre", "input"),
        FeatureSchema("oil_rf", "-", "target", 0.0, 1.0),
    ]


def gas_schema() -> list[FeatureSchema]:
    """Canonical gas-reservoir schema (no API gravity or formation factor)."""
    return [
        FeatureSchema("gor", "MSCF/RB", "input", 0.0, 1.0e9),
        FeatureSchema("sw", "-", "input", 0.0, 1.0),
        FeatureSchema("temperature", "F", "input"),
        FeatureSchema("pressure", "psi", "input"),
        FeatureSchema("thickness", "ft", "input"),
        FeatureSchema("reserves", "MMSCF", "input", 0.0, 4.0e8),
        FeatureSchema("permeability", "mD", "input"),
        FeatureSchema("porosity", "ft3/ft3", "input", 0.0, 1.0),
        FeatureSchema("area", "acre", "input"),
        FeatureSchema("gas_rf", "-", "target", 0.0, 1.0),
    ]


def load_schema(path) -> list[FeatureSchema]:
    """Read a schema declaration: a YAML list of name/unit/role/bounds entries."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, list):
        raise SchemaError(f"{path}: schema file must contain a list of features")
    out = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict) or "name" not in entry:
            raise SchemaError(f"{path}: entry {i} must be a mapping with a 'name' key")
        unknown = set(entry) - {"name", "unit", "role", "lower_bound", "upper_bound"}
        if unknown:
            raise SchemaError(f"{path}: entry {entry['name']!r} has unknown keys {sorted(unknown)}")
        out.append(
            FeatureSchema(
                name=str(entry["name"]),
                unit=str(entry.get("unit", "")),
                role=str(entry.get("role", "input")),
                lower_bound=None if entry.get("lower_bound") is None else float(entry["lower_bound"]),
                upper_bound=None if entry.get("upper_bound") is None else float(entry["upper_bound"]),
            )
        )
    _check_schema(out)
    return out


def save_schema(schema, path) -> None:
    doc = [
        {
            "name": f.name,
            "unit": f.unit,
            "role": f.role,
            "lower_bound": f.lower_bound,
            "upper_bound": f.upper_bound,
        }
        for f in schema
    ]
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def load_csv(path, schema, provenance: str | None = None) -> DataTable:
    """Read a UTF-8 CSV with header row into a table.

    Columns are matched to the schema by name; extra file columns are ignored.
    Empty cells become missing. Row coordinates in errors are 1-based data
    rows (header excluded).
    """
    schema = _check_schema(schema)
    if provenance is None:
        import os

        provenance = os.path.splitext(os.path.basename(str(path)))[0]
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        col_of = {}
        for f in schema:
            if f.name not in header:
                raise SchemaError(f"{path}: required column {f.name!r} not found")
            col_of[f.name] = header.index(f.name)
        rows, mask = [], []
        for r, record in enumerate(reader, start=1):
            vrow = np.empty(len(schema))
            mrow = np.zeros(len(schema), dtype=bool)
            for j, f in enumerate(schema):
                c = col_of[f.name]
                text = record[c].strip() if c < len(record) else ""
                if text == "":
                    vrow[j] = np.nan
                    mrow[j] = True
                else:
                    try:
                        vrow[j] = float(text)
                    except ValueError:
                        raise ParseError(
                            f"{path}: cannot parse {text!r} as a number "
                            f"(row {r}, column {f.name!r})",
                            row=r,
                            column=f.name,
                        ) from None
            rows.append(vrow)
            mask.append(mrow)
    n = len(rows)
    values = np.vstack(rows) if n else np.empty((0, len(schema)))
    missing = np.vstack(mask) if n else np.empty((0, len(schema)), dtype=bool)
    return DataTable(schema, values, missing, (provenance,) * n)


def to_csv(table: DataTable, path) -> None:
    """Write a table using the same conventions load_csv reads.

    Floats are emitted with repr (shortest round-trip form), missing cells as
    empty strings, so load_csv(to_csv(t)) reproduces t bit for bit.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.names)
        for i in range(table.row_count):
            writer.writerow(
                ""
                if table.missing[i, j]
                else repr(float(table.values[i, j]))
                for j in range(len(table.schema))
            )


def merge_dedupe(tables) -> DataTable:
    """Concatenate tables, dropping rows already seen.

    Row identity is exact bit equality of the value vector, missing slots
    zeroed, together with the missing mask; the first occurrence wins.
    Tables are first projected onto their common features, whose schema
    entries must agree exactly.
    """
    tables = list(tables)
    if not tables:
        raise ConfigError("merge_dedupe needs at least one table")
    common = [n for n in tables[0].names if all(n in t.names for t in tables)]
    if not common:
        raise SchemaError("tables share no features")
    projected = [t.project(common) for t in tables]
    ref = projected[0].schema
    for t, proj in zip(tables, projected):
        if proj.schema != ref:
            raise SchemaError(
                "schema mismatch on common features between merged tables "
                f"(labels {sorted(set(t.provenance))})"
            )
    seen = set()
    keep_values, keep_missing, keep_prov = [], [], []
    for t in projected:
        vals = t.values.copy()
        vals[t.missing] = 0.0
        for i in range(t.row_count):
            key = (vals[i].tobytes(), t.missing[i].tobytes())
            if key in seen:
                continue
            seen.add(key)
            keep_values.append(t.values[i])
            keep_missing.append(t.missing[i])
            keep_prov.append(t.provenance[i])
    values = np.vstack(keep_values) if keep_values else np.empty((0, len(ref)))
    missing = np.vstack(keep_missing) if keep_missing else np.empty((0, len(ref)), dtype=bool)
    return DataTable(ref, values, missing, keep_prov)


def split_train_test(table: DataTable, fraction: float = 0.9, seed: int = 0) -> SplitIndex:
    """Random partition: seeded shuffle, then prefix cut at round(n * fraction).

    The prefix rule makes splits nested across fractions for a fixed seed.
    """
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"split fraction must lie in (0, 1), got {fraction}")
    n = table.row_count
    if n == 0:
        raise ConfigError("cannot split an empty table")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fraction * n))
    return SplitIndex(
        train_rows=tuple(int(i) for i in perm[:n_train]),
        test_rows=tuple(int(i) for i in perm[n_train:]),
        seed=seed,
    )


def make_folds(split: SplitIndex, k: int, seed: int = 0) -> FoldPlan:
    """Balanced random fold assignment over the train rows only."""
    train = list(split.train_rows)
    if k < 2:
        raise ConfigError(f"fold count must be at least 2, got {k}")
    if k > len(train):
        raise ConfigError(f"fold count {k} exceeds train size {len(train)}")
    perm = np.random.default_rng(seed).permutation(len(train))
    assignments = {train[int(p)]: int(i % k) for i, p in enumerate(perm)}
    return FoldPlan(fold_assignments=assignments, k=k)


def fold_rows(plan: FoldPlan, fold: int) -> tuple[list[int], list[int]]:
    """Train/validation row lists for one fold, each sorted ascending."""
    val = sorted(r for r, f in plan.fold_assignments.items() if f == fold)
    fit = sorted(r for r, f in plan.fold_assignments.items() if f != fold)
    return fit, val
