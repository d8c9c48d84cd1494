"""Distribution-shift audit between a training table and another table.

Two tests per column over the present values: Welch's unequal-variance
t-test for a mean shift and the two-sample Kolmogorov-Smirnov statistic for
any distributional change. The report flags rejections at the configured
level and an overall verdict that only certifies compatibility when every
column passes both tests conclusively.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import log, sqrt

import numpy as np

from ._stats import kolmogorov_sf, t_two_sided_p
from .dataset import DataTable
from .errors import ConfigError, DegenerateDataError, RfForgeError


@dataclass(frozen=True)
class WelchResult:
    t: float
    df: float
    p: float


@dataclass(frozen=True)
class KsResult:
    stat: float
    d_crit: float
    p: float


def _clean(sample, name: str) -> np.ndarray:
    v = np.ascontiguousarray(sample, dtype=np.float64)
    if v.ndim != 1:
        raise ConfigError(f"{name} sample must be 1-d")
    if not np.isfinite(v).all():
        v = v[np.isfinite(v)]
    return v


def welch_t_test(a, b) -> WelchResult:
    """Unequal-variance two-sample t-test with Satterthwaite freedom."""
    a = _clean(a, "first")
    b = _clean(b, "second")
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise ConfigError(f"need at least 2 values per sample, got {na} and {nb}")
    va = float(np.var(a, ddof=1))
    vb = float(np.var(b, ddof=1))
    if va == 0.0 and vb == 0.0:
        raise DegenerateDataError("both samples are constant; t undefined")
    sa, sb = va / na, vb / nb
    t = (float(a.mean()) - float(b.mean())) / sqrt(sa + sb)
    df = (sa + sb) ** 2 / (sa * sa / (na - 1) + sb * sb / (nb - 1))
    return WelchResult(t=t, df=df, p=t_two_sided_p(t, df))


def ks_two_sample(a, b, alpha: float = 0.05) -> KsResult:
    """Two-sample Kolmogorov-Smirnov test.

    The statistic is the largest gap between the empirical distribution
    functions; the rejection threshold and p-value use the asymptotic
    Kolmogorov distribution of the scaled statistic.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    a = _clean(a, "first")
    b = _clean(b, "second")
    na, nb = a.size, b.size
    if na == 0 or nb == 0:
        raise ConfigError("both samples must be non-empty")
    a_sorted = np.sort(a)
    b_sorted = np.sort(b)
    grid = np.concatenate([a_sorted, b_sorted])
    cdf_a = np.searchsorted(a_sorted, grid, side="right") / na
    cdf_b = np.searchsorted(b_sorted, grid, side="right") / nb
    stat = float(np.max(np.abs(cdf_a - cdf_b)))
    d_crit = sqrt(-0.5 * log(alpha / 2.0)) * sqrt((na + nb) / (na * nb))
    ne = na * nb / (na + nb)
    p = kolmogorov_sf(sqrt(ne) * stat)
    return KsResult(stat=stat, d_crit=d_crit, p=p)


@dataclass(frozen=True)
class ShiftRow:
    column: str
    n_train: int
    n_other: int
    t: float | None
    df: float | None
    t_p: float | None
    t_reject: bool | None
    ks_stat: float | None
    ks_crit: float | None
    ks_p: float | None
    ks_reject: bool | None
    error: str | None = None

    @property
    def conclusive(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return {
            "column": self.column,
            "n_train": self.n_train,
            "n_other": self.n_other,
            "t": self.t,
            "df": self.df,
            "t_p": self.t_p,
            "t_reject": self.t_reject,
            "ks_stat": self.ks_stat,
            "ks_crit": self.ks_crit,
            "ks_p": self.ks_p,
            "ks_reject": self.ks_reject,
            "error": self.error,
        }


# report-header note: cross-database samples differ in size, so a paired
# test cannot apply; the unpaired Welch form is the coherent choice
_METHOD_NOTE = (
    "mean shift: Welch's unpaired unequal-variance t-test "
    "(pairing is impossible across samples of different sizes); "
    "distribution shift: asymptotic two-sample Kolmogorov-Smirnov test"
)


@dataclass(frozen=True)
class ShiftReport:
    label: str
    alpha: float
    rows: tuple[ShiftRow, ...]
    compatible: bool
    method_note: str = _METHOD_NOTE

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "alpha": self.alpha,
            "method_note": self.method_note,
            "compatible": self.compatible,
            "rows": [r.to_dict() for r in self.rows],
        }


def audit(train: DataTable, other: DataTable, columns=None,
          alpha: float = 0.05, label: str = "") -> ShiftReport:
    """Compare the two tables column by column on their present values.

    A column whose tests cannot run (too few values, constant data) is
    reported as inconclusive; inconclusive or rejecting columns both block
    the compatible verdict.
    """
    if columns is None:
        columns = list(train.input_names) + [train.target_name]
    rows = []
    compatible = True
    for name in columns:
        va, ma = train.column(name)
        vb, mb = other.column(name)
        a = va[~ma]
        b = vb[~mb]
        try:
            wt = welch_t_test(a, b)
            ks = ks_two_sample(a, b, alpha)
        except RfForgeError as exc:
            rows.append(ShiftRow(name, a.size, b.size, None, None, None, None,
                                 None, None, None, None, str(exc)))
            compatible = False
            continue
        t_reject = wt.p < alpha
        ks_reject = ks.p < alpha
        if t_reject or ks_reject:
            compatible = False
        rows.append(ShiftRow(
            column=name, n_train=a.size, n_other=b.size,
            t=wt.t, df=wt.df, t_p=wt.p, t_reject=t_reject,
            ks_stat=ks.stat, ks_crit=ks.d_crit, ks_p=ks.p, ks_reject=ks_reject,
        ))
    return ShiftReport(label=label, alpha=alpha, rows=tuple(rows), compatible=compatible)
