"""Synthetic reservoir databases.

The proprietary source databases are out of reach, so fixtures are drawn from
declarative specs: per-feature sampling distributions, a fixed-coefficient
target function with additive noise, and a shift knob that displaces or
stretches chosen features to fabricate an out-of-distribution database.

The target function uses constants baked into the spec (never estimated from
the sample), so shifted and unshifted databases share the same ground-truth
mechanism and differ only in where their features live.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import DataTable, FeatureSchema, gas_schema, load_schema, oil_schema
from .errors import ConfigError

DIST_KINDS = ("normal", "lognormal", "uniform")
TRANSFORMS = ("linear", "log10", "log10p")


@dataclass(frozen=True)
class FeatureDist:
    """Sampling distribution for one feature.

    normal: params = (mean, sd); lognormal: (mu, sigma) of the log;
    uniform: (low, high).
    """

    kind: str
    params: tuple

    def __post_init__(self):
        if self.kind not in DIST_KINDS:
            raise ConfigError(f"unknown distribution kind {self.kind!r}")
        if len(self.params) != 2:
            raise ConfigError(f"{self.kind} distribution needs 2 parameters, got {self.params}")
        a, b = self.params
        if self.kind == "uniform":
            if not a < b:
                raise ConfigError(f"uniform bounds must satisfy low < high, got {self.params}")
        elif not b > 0:
            raise ConfigError(f"{self.kind} scale must be positive, got {b}")

    def location(self) -> float:
        a, b = self.params
        if self.kind == "normal":
            return a
        if self.kind == "lognormal":
            return math.exp(a)  # median
        return 0.5 * (a + b)

    def scale(self) -> float:
        """Standard deviation in natural units."""
        a, b = self.params
        if self.kind == "normal":
            return b
        if self.kind == "lognormal":
            return math.sqrt((math.exp(b * b) - 1.0) * math.exp(2.0 * a + b * b))
        return (b - a) / math.sqrt(12.0)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        a, b = self.params
        if self.kind == "normal":
            return rng.normal(a, b, n)
        if self.kind == "lognormal":
            return rng.lognormal(a, b, n)
        return rng.uniform(a, b, n)


@dataclass(frozen=True)
class Shift:
    """Displacement applied to one feature's samples.

    translate is absolute; translate_sd is measured in unshifted standard
    deviations; scale stretches about the unshifted location. The identity
    shift (0, 0, 1) leaves samples bit-identical.
    """

    translate: float = 0.0
    translate_sd: float = 0.0
    scale: float = 1.0


@dataclass(frozen=True)
class TargetTerm:
    feature: str
    weight: float
    transform: str = "linear"
    center: float = 0.0
    spread: float = 1.0

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ConfigError(f"unknown target transform {self.transform!r}")
        if not self.spread > 0:
            raise ConfigError(f"target term spread must be positive, got {self.spread}")


@dataclass(frozen=True)
class TargetSpec:
    intercept: float
    terms: tuple[TargetTerm, ...]
    noise_sd: float = 0.0


@dataclass(frozen=True)
class SynthSpec:
    schema: tuple[FeatureSchema, ...]
    dists: dict[str, FeatureDist]
    target: TargetSpec
    shifts: dict[str, Shift] = field(default_factory=dict)
    missing_rate: float = 0.0
    target_missing_rate: float = 0.0
    label: str = "synth"


def _validate(spec: SynthSpec) -> None:
    names = {f.name for f in spec.schema}
    target = next(f for f in spec.schema if f.role == "target")
    for f in spec.schema:
        if f.role == "target":
            continue
        if f.name not in spec.dists:
            raise ConfigError(f"no distribution given for feature {f.name!r}")
    for name, dist in spec.dists.items():
        if name not in names:
            raise ConfigError(f"distribution for unknown feature {name!r}")
        f = next(s for s in spec.schema if s.name == name)
        loc = dist.location()
        if f.lower_bound is not None and loc < f.lower_bound:
            raise ConfigError(
                f"feature {name!r}: distribution location {loc:g} below bound {f.lower_bound:g}"
            )
        if f.upper_bound is not None and loc > f.upper_bound:
            raise ConfigError(
                f"feature {name!r}: distribution location {loc:g} above bound {f.upper_bound:g}"
            )
    for term in spec.target.terms:
        if term.feature not in names or term.feature == target.name:
            raise ConfigError(f"target term references bad feature {term.feature!r}")
    for name in spec.shifts:
        if name not in spec.dists:
            raise ConfigError(f"shift on feature {name!r} which has no distribution")
    if not 0.0 <= spec.missing_rate < 1.0 or not 0.0 <= spec.target_missing_rate < 1.0:
        raise ConfigError("missing rates must lie in [0, 1)")
    if spec.target.noise_sd < 0:
        raise ConfigError("noise sd cannot be negative")


def _term_value(term: TargetTerm, x: np.ndarray) -> np.ndarray:
    if term.transform == "log10":
        t = np.log10(np.maximum(x, 1e-300))
    elif term.transform == "log10p":
        t = np.log10(1.0 + np.maximum(x, 0.0))
    else:
        t = x
    return term.weight * (t - term.center) / term.spread


def synth_generate(spec: SynthSpec, n: int, seed: int) -> DataTable:
    """Draw n rows from the spec, deterministically in (spec, n, seed)."""
    _validate(spec)
    if n < 0:
        raise ConfigError(f"row count cannot be negative, got {n}")
    schema = tuple(spec.schema)
    m = len(schema)
    target_j = next(j for j, f in enumerate(schema) if f.role == "target")

    # one child stream per feature plus one for noise and one for masks, so
    # editing one feature's parameters cannot ripple into the others
    children = np.random.SeedSequence(seed).spawn(m + 2)
    noise_rng = np.random.default_rng(children[m])
    mask_rng = np.random.default_rng(children[m + 1])

    values = np.empty((n, m))
    missing = np.zeros((n, m), dtype=bool)
    for j, f in enumerate(schema):
        if j == target_j:
            continue
        dist = spec.dists[f.name]
        x = dist.sample(np.random.default_rng(children[j]), n)
        shift = spec.shifts.get(f.name)
        if shift is not None and (shift.translate, shift.translate_sd, shift.scale) != (0.0, 0.0, 1.0):
            loc = dist.location()
            x = loc + (x - loc) * shift.scale + shift.translate + shift.translate_sd * dist.scale()
        lo = -np.inf if f.lower_bound is None else f.lower_bound
        hi = np.inf if f.upper_bound is None else f.upper_bound
        values[:, j] = np.clip(x, lo, hi)

    y = np.full(n, spec.target.intercept)
    for term in spec.target.terms:
        jt = next(j for j, f in enumerate(schema) if f.name == term.feature)
        y = y + _term_value(term, values[:, jt])
    if spec.target.noise_sd > 0:
        y = y + noise_rng.normal(0.0, spec.target.noise_sd, n)
    tf = schema[target_j]
    lo = -np.inf if tf.lower_bound is None else tf.lower_bound
    hi = np.inf if tf.upper_bound is None else tf.upper_bound
    values[:, target_j] = np.clip(y, lo, hi)

    for j in range(m):
        rate = spec.target_missing_rate if j == target_j else spec.missing_rate
        # always draw, so toggling one rate cannot shift the other columns
        missing[:, j] = mask_rng.random(n) < rate

    return DataTable(schema, values, missing, (spec.label,) * n)


def default_oil_spec(**overrides) -> SynthSpec:
    """Plausible oil-reservoir generator at desk scale.

    Target weight is concentrated on reserves, area and thickness, echoing
    the importance ranking the real databases produce.
    """
    dists = {
        "api_gravity": FeatureDist("normal", (32.0, 6.0)),
        "bo": FeatureDist("normal", (1.3, 0.2)),
        "gor": FeatureDist("lognormal", (0.0, 0.8)),
        "sw": FeatureDist("normal", (0.35, 0.1)),
        "temperature": FeatureDist("normal", (160.0, 40.0)),
        "pressure": FeatureDist("normal", (3000.0, 1200.0)),
        "thickness": FeatureDist("lognormal", (math.log(50.0), 0.7)),
        "reserves": FeatureDist("lognormal", (math.log(5.0e6), 1.5)),
        "permeability": FeatureDist("lognormal", (math.log(100.0), 1.2)),
        "porosity": FeatureDist("normal", (0.22, 0.06)),
        "area": FeatureDist("lognormal", (math.log(2000.0), 1.0)),
    }
    target = TargetSpec(
        intercept=0.34,
        terms=(
            TargetTerm("reserves", 0.10, "log10", 6.70, 0.651),
            TargetTerm("area", 0.06, "log10", 3.30, 0.434),
            TargetTerm("thickness", 0.05, "log10", 1.70, 0.304),
            TargetTerm("porosity", 0.04, "linear", 0.22, 0.06),
            TargetTerm("permeability", 0.03, "log10", 2.00, 0.521),
            TargetTerm("sw", -0.03, "linear", 0.35, 0.10),
            TargetTerm("gor", 0.02, "log10p", 0.30, 0.30),
            TargetTerm("bo", 0.02, "linear", 1.30, 0.20),
            TargetTerm("pressure", 0.02, "log10", 3.43, 0.18),
            TargetTerm("temperature", 0.015, "linear", 160.0, 40.0),
            TargetTerm("api_gravity", 0.015, "linear", 32.0, 6.0),
        ),
        noise_sd=0.05,
    )
    base = dict(schema=tuple(oil_schema()), dists=dists, target=target)
    base.update(overrides)
    return SynthSpec(**base)


def default_gas_spec(**overrides) -> SynthSpec:
    dists = {
        "gor": FeatureDist("lognormal", (math.log(2000.0), 1.3)),
        "sw": FeatureDist("normal", (0.30, 0.1)),
        "temperature": FeatureDist("normal", (200.0, 50.0)),
        "pressure": FeatureDist("normal", (4000.0, 1500.0)),
        "thickness": FeatureDist("lognormal", (math.log(40.0), 0.7)),
        "reserves": FeatureDist("lognormal", (math.log(2.0e4), 1.4)),
        "permeability": FeatureDist("lognormal", (math.log(50.0), 1.2)),
        "porosity": FeatureDist("normal", (0.18, 0.05)),
        "area": FeatureDist("lognormal", (math.log(1500.0), 1.0)),
    }
    target = TargetSpec(
        intercept=0.55,
        terms=(
            TargetTerm("reserves", 0.09, "log10", 4.30, 0.608),
            TargetTerm("area", 0.06, "log10", 3.18, 0.434),
            TargetTerm("thickness", 0.05, "log10", 1.60, 0.304),
            TargetTerm("porosity", 0.03, "linear", 0.18, 0.05),
            TargetTerm("permeability", 0.03, "log10", 1.70, 0.521),
            TargetTerm("sw", -0.03, "linear", 0.30, 0.10),
            TargetTerm("gor", 0.02, "log10", 3.30, 0.565),
            TargetTerm("pressure", 0.02, "log10", 3.57, 0.17),
            TargetTerm("temperature", 0.015, "linear", 200.0, 50.0),
        ),
        noise_sd=0.05,
    )
    base = dict(schema=tuple(gas_schema()), dists=dists, target=target)
    base.update(overrides)
    return SynthSpec(**base)


def spec_from_dict(doc: dict) -> SynthSpec:
    """Build a SynthSpec from parsed configuration.

    `schema` is "oil", "gas", or a path to a schema file. `preset` selects a
    default spec whose fields the remaining keys override.
    """
    if not isinstance(doc, dict):
        raise ConfigError("synth spec must be a mapping")
    doc = dict(doc)
    preset = doc.pop("preset", None)
    overrides: dict = {}

    if "schema" in doc:
        ref = doc.pop("schema")
        if ref == "oil":
            overrides["schema"] = tuple(oil_schema())
        elif ref == "gas":
            overrides["schema"] = tuple(gas_schema())
        else:
            overrides["schema"] = tuple(load_schema(ref))
    if "dists" in doc:
        raw = doc.pop("dists")
        overrides["dists"] = {
            name: FeatureDist(str(d["kind"]), tuple(float(p) for p in d["params"]))
            for name, d in raw.items()
        }
    if "target" in doc:
        raw = doc.pop("target")
        overrides["target"] = TargetSpec(
            intercept=float(raw.get("intercept", 0.0)),
            terms=tuple(
                TargetTerm(
                    feature=str(t["feature"]),
                    weight=float(t["weight"]),
                    transform=str(t.get("transform", "linear")),
                    center=float(t.get("center", 0.0)),
                    spread=float(t.get("spread", 1.0)),
                )
                for t in raw.get("terms", [])
            ),
            noise_sd=float(raw.get("noise_sd", 0.0)),
        )
    if "shifts" in doc:
        raw = doc.pop("shifts")
        overrides["shifts"] = {
            name: Shift(
                translate=float(s.get("translate", 0.0)),
                translate_sd=float(s.get("translate_sd", 0.0)),
                scale=float(s.get("scale", 1.0)),
            )
            for name, s in raw.items()
        }
    for key in ("missing_rate", "target_missing_rate"):
        if key in doc:
            overrides[key] = float(doc.pop(key))
    if "label" in doc:
        overrides["label"] = str(doc.pop("label"))
    if doc:
        raise ConfigError(f"unknown synth spec keys {sorted(doc)}")

    if preset == "oil" or (preset is None and "dists" not in overrides):
        spec = default_oil_spec(**overrides)
    elif preset == "gas":
        spec = default_gas_spec(**overrides)
    elif preset is None:
        if "schema" not in overrides or "target" not in overrides:
            raise ConfigError("custom synth spec needs schema, dists and target")
        spec = SynthSpec(**overrides)
    else:
        raise ConfigError(f"unknown preset {preset!r}")
    _validate(spec)
    return spec
