"""Regression agreement metrics: concordance, R^2, bootstrap CIs."""

from __future__ import annotations

import numpy as np

from .errors import NumericError, ValidationError

__all__ = ["ccc", "r2", "bootstrap_ci_r2"]


def _pair(y, yhat):
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.ndim != 1:
        raise ValidationError("y and yhat must be 1-D arrays of equal length")
    if len(y) < 2:
        raise ValidationError("need at least 2 points")
    return y, yhat


def ccc(y, yhat) -> float:
    """Lin's concordance correlation, population (1/n) moments.

    2 cov / (var_y + var_yhat + (mean_y - mean_yhat)^2). Identical
    constant vectors are perfectly concordant (1.0 by convention).
    """
    y, yhat = _pair(y, yhat)
    my, mh = y.mean(), yhat.mean()
    vy = float(((y - my) ** 2).mean())
    vh = float(((yhat - mh) ** 2).mean())
    cov = float(((y - my) * (yhat - mh)).mean())
    denom = vy + vh + (my - mh) ** 2
    if denom == 0.0:
        return 1.0
    return 2.0 * cov / denom


def r2(y, yhat) -> float:
    """Coefficient of determination 1 - SS_res / SS_tot."""
    y, yhat = _pair(y, yhat)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0.0:
        raise NumericError("R^2 undefined: target variance is zero")
    ss_res = float(((y - yhat) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def bootstrap_ci_r2(y, yhat, resamples: int = 1000, seed: int = 0, quantiles=(0.025, 0.975)):
    """Non-parametric bootstrap over points: empirical quantiles of the
    resampled R^2 distribution (linear-interpolation quantiles).

    Resamples with zero target variance have no defined R^2 and are
    dropped from the quantile computation.
    """
    y, yhat = _pair(y, yhat)
    rng = np.random.default_rng(seed)
    n = len(y)
    values = []
    for _ in range(resamples):
        idx = rng.integers(0, n, size=n)
        ys = y[idx]
        ss_tot = float(((ys - ys.mean()) ** 2).sum())
        if ss_tot == 0.0:
            continue
        ss_res = float(((ys - yhat[idx]) ** 2).sum())
        values.append(1.0 - ss_res / ss_tot)
    if not values:
        raise NumericError("every bootstrap resample was degenerate")
    lo, hi = np.quantile(values, quantiles)
    return float(lo), float(hi)
