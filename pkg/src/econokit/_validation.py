"""Input validation helpers used across the package."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import DataError


def as_1d_float(x, name="x", min_length=1):
    """Return ``x`` as a finite 1-D float64 array or raise :class:`DataError`."""
    if hasattr(x, "values") and not isinstance(x, np.ndarray):
        x = x.values
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DataError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_length:
        raise DataError(f"{name} needs at least {min_length} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def check_scalar(value, name, *, low=None, high=None, low_open=False, high_open=False,
                 integer=False):
    """Validate a scalar parameter against an interval."""
    kind = numbers.Integral if integer else numbers.Real
    if isinstance(value, bool) or not isinstance(value, kind):
        raise DataError(f"{name} must be {'an integer' if integer else 'a real number'}")
    if not np.isfinite(value):
        raise DataError(f"{name} must be finite")
    if low is not None and (value <= low if low_open else value < low):
        raise DataError(f"{name}={value} is below the admissible range")
    if high is not None and (value >= high if high_open else value > high):
        raise DataError(f"{name}={value} is above the admissible range")
    return value


def ols_line(x, y):
    """Ordinary least squares ``y = intercept + slope * x``.

    Returns ``(slope, intercept, slope_stderr, r_squared)``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    if n < 2:
        raise DataError("need at least two points for a line fit")
    xm, ym = x.mean(), y.mean()
    dx, dy = x - xm, y - ym
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise DataError("abscissa values are all equal")
    slope = float(dx @ dy) / sxx
    intercept = ym - slope * xm
    resid = dy - slope * dx
    sse = float(resid @ resid)
    syy = float(dy @ dy)
    r2 = 1.0 if syy == 0.0 else max(0.0, min(1.0, 1.0 - sse / syy))
    stderr = np.sqrt(sse / (n - 2) / sxx) if n > 2 else float("nan")
    return slope, float(intercept), float(stderr), r2
