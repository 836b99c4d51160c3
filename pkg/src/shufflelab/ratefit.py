"""Power-law fits of error against iteration count, and SGD/RandomShuffle crossover."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .rng import make_generator


@dataclass(frozen=True)
class RateFit:
    exponent: float
    intercept: float
    r_squared: float
    n_points: int
    ci_halfwidth: float


def _ols(x: np.ndarray, y: np.ndarray):
    xc = x - x.mean()
    slope = float(xc @ (y - y.mean()) / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    return slope, intercept


def estimate_rate(samples: Sequence, bootstrap_reps: int = 1000, seed: int = 0) -> RateFit:
    """Fit ``log error = intercept + exponent * log T`` by least squares.

    ``samples`` holds ``(T, mean_error, stderr)`` triples. The confidence
    half-width (90%) comes from a parametric bootstrap that redraws each mean
    from a log-normal with relative spread ``stderr / mean`` and refits.
    """
    rows = [tuple(s) for s in samples]
    if len(rows) < 3:
        raise ValueError("need at least three (T, error) points")
    T = np.array([r[0] for r in rows], dtype=float)
    m = np.array([r[1] for r in rows], dtype=float)
    se = np.array([r[2] if len(r) > 2 else 0.0 for r in rows], dtype=float)
    if len(np.unique(T)) != len(T):
        raise ValueError("duplicate T values")
    if np.any(T <= 0):
        raise ValueError("T values must be positive")
    if not np.all(m > 0) or not np.all(np.isfinite(m)):
        raise ValueError("errors must be positive and finite to take logs")
    if np.any(se < 0) or not np.all(np.isfinite(se)):
        raise ValueError("standard errors must be finite and non-negative")

    x, y = np.log(T), np.log(m)
    slope, intercept = _ols(x, y)
    resid = y - (intercept + slope * x)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    ss_res = float((resid**2).sum())
    if ss_tot == 0.0:
        r2 = 1.0
    else:
        r2 = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)

    half = 0.0
    if bootstrap_reps > 0 and np.any(se > 0):
        rng = make_generator(seed)
        rel = se / m
        sigma = np.sqrt(np.log1p(rel**2))
        draws = y + rng.standard_normal((bootstrap_reps, len(y))) * sigma - 0.5 * sigma**2
        xc = x - x.mean()
        slopes = (draws - draws.mean(axis=1, keepdims=True)) @ xc / (xc @ xc)
        lo, hi = np.percentile(slopes, [5.0, 95.0])
        half = float(hi - lo) / 2.0
    return RateFit(slope, intercept, r2, len(rows), half)


def crossover_epochs(rs_curve: Sequence, sgd_curve: Sequence, n: int) -> Optional[float]:
    """Epoch count ``T*/n`` of the first grid point after which RandomShuffle stays below SGD.

    Returns ``None`` if RandomShuffle is not below SGD at the last grid point.
    """
    rs = sorted((float(t), float(e)) for t, e in rs_curve)
    sgd = sorted((float(t), float(e)) for t, e in sgd_curve)
    if [t for t, _ in rs] != [t for t, _ in sgd]:
        raise ValueError("RandomShuffle and SGD curves must share the same T grid")
    if not rs:
        raise ValueError("empty curves")
    crossing = None
    for (t, e_rs), (_, e_sgd) in zip(reversed(rs), reversed(sgd)):
        if e_rs < e_sgd:
            crossing = t
        else:
            break
    return None if crossing is None else crossing / n
