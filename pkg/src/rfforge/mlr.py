"""Forward stepwise linear regression with a t-test entry criterion.

Least squares goes through a pivoted QR factorization so rank problems are
detected (and the offending columns named) rather than silently absorbed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ._stats import t_two_sided_p
from .errors import ConfigError, DataError, DegenerateDataError, ShapeError

_RANK_TOL = 1e-10


@dataclass(frozen=True)
class OlsFit:
    coefficients: np.ndarray  # per column, intercept excluded
    intercept: float
    std_errors: np.ndarray  # aligned with coefficients
    t_stats: np.ndarray
    p_values: np.ndarray
    residual_variance: float
    dof: int


@dataclass
class LinearModel:
    intercept: float
    coefficients: dict[str, float]  # feature name -> coefficient
    selection_trace: list[tuple[str, float, float]]  # (feature, t, p) at entry
    feature_indices: dict[str, int]  # name -> column in the training matrix
    p_enter: float


def fit_ols(X, y, names=None) -> OlsFit:
    """Least squares of y on [1, X] via pivoted QR.

    Standard errors use the unbiased residual variance with n - p - 1
    degrees of freedom; p-values are two-sided.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise ShapeError(f"bad shapes {X.shape} / {y.shape}")
    n, p = X.shape
    if n <= p + 1:
        raise DegenerateDataError(
            f"need more rows than parameters: {n} rows for {p} features plus intercept"
        )
    if names is None:
        names = [f"x{j}" for j in range(p)]
    A = np.column_stack([np.ones(n), X])
    q, r, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = _RANK_TOL * (diag[0] if diag.size else 1.0)
    rank = int((diag > tol).sum())
    if rank < p + 1:
        dependent = sorted(piv[rank:].tolist())
        bad = [("intercept" if j == 0 else names[j - 1]) for j in dependent]
        raise DegenerateDataError(
            f"design matrix is rank deficient; dependent columns: {bad}"
        )
    coef_piv = scipy.linalg.solve_triangular(r, q.T @ y)
    coef = np.empty(p + 1)
    coef[piv] = coef_piv
    resid = y - A @ coef
    dof = n - p - 1
    s2 = float(resid @ resid) / dof
    r_inv = scipy.linalg.solve_triangular(r, np.eye(p + 1))
    cov_piv = s2 * (r_inv @ r_inv.T)
    var = np.empty(p + 1)
    var[piv] = np.diag(cov_piv)
    se = np.sqrt(np.maximum(var, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        # zero standard error (exact fit): infinite t for a nonzero
        # coefficient, zero t for a zero one
        t = np.where(
            se > 0.0,
            coef / se,
            np.where(coef > 0.0, np.inf, np.where(coef < 0.0, -np.inf, 0.0)),
        )
    pvals = np.array([t_two_sided_p(tk, dof) for tk in t])
    return OlsFit(
        coefficients=coef[1:],
        intercept=float(coef[0]),
        std_errors=se[1:],
        t_stats=t[1:],
        p_values=pvals[1:],
        residual_variance=s2,
        dof=dof,
    )


def forward_stepwise(X, y, p_enter: float = 0.05, names=None) -> LinearModel:
    """Add features greedily while some candidate's entry p-value < p_enter.

    Candidates are scored by the p-value of their own coefficient in the
    single-addition fit; ties prefer larger |t|, then earlier column order.
    Rank-deficient additions are skipped. The final model is refit on the
    selected columns.
    """
    if not 0.0 < p_enter <= 1.0:
        raise ConfigError(f"p_enter must lie in (0, 1], got {p_enter}")
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"feature matrix must be 2-d, got {X.shape}")
    p = X.shape[1]
    if names is None:
        names = [f"x{j}" for j in range(p)]
    names = list(names)
    if len(names) != p:
        raise ShapeError(f"{len(names)} names for {p} columns")

    selected: list[int] = []
    trace: list[tuple[str, float, float]] = []
    while len(selected) < p:
        best = None  # (p-value, -|t|, order, column, t)
        for j in range(p):
            if j in selected:
                continue
            cols = selected + [j]
            try:
                fit = fit_ols(X[:, cols], y)
            except DataError:
                continue
            tj = float(fit.t_stats[-1])
            pj = float(fit.p_values[-1])
            cand = (pj, -abs(tj), j)
            if best is None or cand < best[:3]:
                best = (pj, -abs(tj), j, tj)
        if best is None or best[0] >= p_enter:
            break
        pj, _, j, tj = best
        selected.append(j)
        trace.append((names[j], tj, pj))

    if selected:
        final = fit_ols(X[:, selected], y)
        intercept = final.intercept
        coeffs = {names[j]: float(c) for j, c in zip(selected, final.coefficients)}
    else:
        intercept = float(y.mean()) if y.size else 0.0
        coeffs = {}
    return LinearModel(
        intercept=intercept,
        coefficients=coeffs,
        selection_trace=trace,
        feature_indices={names[j]: j for j in selected},
        p_enter=p_enter,
    )


def predict(model: LinearModel, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError(f"feature matrix must be 2-d, got {X.shape}")
    out = np.full(X.shape[0], model.intercept)
    for name, coef in model.coefficients.items():
        j = model.feature_indices[name]
        if j >= X.shape[1]:
            raise ShapeError(
                f"model feature {name!r} expects column {j}, matrix has {X.shape[1]}"
            )
        out = out + coef * X[:, j]
    return out


def to_json(model: LinearModel) -> str:
    return json.dumps(
        {
            "version": 1,
            "kind": "mlr",
            "intercept": model.intercept,
            "coefficients": model.coefficients,
            "selection_trace": [list(t) for t in model.selection_trace],
            "feature_indices": model.feature_indices,
            "p_enter": model.p_enter,
        }
    )


def from_json(text: str) -> LinearModel:
    doc = json.loads(text)
    if doc.get("kind") != "mlr" or doc.get("version") != 1:
        raise ConfigError("not a recognized linear model document")
    return LinearModel(
        intercept=float(doc["intercept"]),
        coefficients={k: float(v) for k, v in doc["coefficients"].items()},
        selection_trace=[(a, float(b), float(c)) for a, b, c in doc["selection_trace"]],
        feature_indices={k: int(v) for k, v in doc["feature_indices"].items()},
        p_enter=float(doc["p_enter"]),
    )
