"""Least-squares scaling fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from isdim.errors import DegenerateFitError

MIN_FIT_POINTS = 3


@dataclass(frozen=True)
class LinearFit:
    slope: float
    intercept: float
    r2: float
    n_points: int


def fit_line(x, y) -> LinearFit:
    """Ordinary least squares fit of y = slope * x + intercept."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DegenerateFitError("x and y must be vectors of equal length")
    if x.size < MIN_FIT_POINTS:
        raise DegenerateFitError(f"need at least {MIN_FIT_POINTS} points for a fit, got {x.size}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DegenerateFitError("non-finite values in fit data")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise DegenerateFitError("all x values are equal")
    yc = y - y.mean()
    slope = float(xc @ yc) / sxx
    intercept = float(y.mean() - slope * x.mean())
    ss_tot = float(yc @ yc)
    resid = yc - slope * xc
    ss_res = float(resid @ resid)
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return LinearFit(slope, intercept, r2, int(x.size))


def fit_loglog(x, y) -> LinearFit:
    """Fit log(y) against log(x); the slope is the scaling exponent."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise DegenerateFitError("log-log fit needs strictly positive data")
    return fit_line(np.log(x), np.log(y))
