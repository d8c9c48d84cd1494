"""Small distribution helpers shared by the testing and regression modules."""

from __future__ import annotations

import math

from scipy.special import betainc


def t_two_sided_p(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t.

    Uses the incomplete-beta identity P(|T| > t) = I_{df/(df+t^2)}(df/2, 1/2).
    """
    if df <= 0:
        raise ValueError(f"degrees of freedom must be positive, got {df}")
    if not math.isfinite(t):
        return 0.0
    x = df / (df + t * t)
    return float(betainc(df / 2.0, 0.5, x))


def kolmogorov_sf(lam: float) -> float:
    """Survival function of the Kolmogorov distribution.

    Alternating series 2 * sum (-1)^(k-1) exp(-2 k^2 lam^2), truncated once a
    term drops below 1e-12; tiny lam short-circuits to 1.
    """
    if lam < 1e-8:
        return 1.0
    total = 0.0
    sign = 1.0
    for k in range(1, 100000):
        term = math.exp(-2.0 * k * k * lam * lam)
        total += sign * term
        if term < 1e-12:
            break
        sign = -sign
    return min(max(2.0 * total, 0.0), 1.0)
