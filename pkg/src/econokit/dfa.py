"""Detrended fluctuation analysis.

The signal is turned into a mean-subtracted cumulative profile, cut into
non-overlapping boxes of ``n`` points, detrended box by box with a
least-squares polynomial and summarised by the root-mean residual
fluctuation ``f(n)``. The scaling exponent ``alpha`` of ``f(n) ~ n**alpha``
is the Hurst exponent of the increments.

Boxes are aligned newest-first by default: the first box holds the most
recent points and the incommensurate remainder drops the oldest values.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_1d_float, check_scalar, ols_line
from .exceptions import DataError, DegenerateError
from .series import TimeSeries

ALIGNMENTS = ("newest-first", "oldest-first")
_EPS = np.finfo(np.float64).eps


def _signal(series):
    if isinstance(series, TimeSeries):
        return series.values
    return as_1d_float(series, "series", min_length=2)


def _zero_tol(x):
    # rounding floor of a profile built from x
    return 8.0 * x.size * _EPS * float(np.max(np.abs(x)))


@dataclass(frozen=True)
class DfaProfile:
    values: np.ndarray
    source_length: int


@dataclass(frozen=True)
class FluctuationCurve:
    """``(n, f(n))`` pairs for one signal.

    ``zero_tol`` is the magnitude below which ``f`` is treated as exactly zero
    (floating rounding of the profile).
    """

    box_sizes: np.ndarray
    f: np.ndarray
    detrend_degree: int = 1
    box_alignment: str = "newest-first"
    zero_tol: float = 0.0
    source_length: int = 0

    @property
    def points(self):
        return list(zip(self.box_sizes.tolist(), self.f.tolist()))

    @property
    def zero_mask(self):
        return self.f <= self.zero_tol

    @property
    def degenerate(self):
        """True when every fluctuation vanishes (signal fully explained by trends)."""
        return bool(np.all(self.zero_mask))


@dataclass(frozen=True)
class AlphaEstimate:
    alpha: float
    stderr: float
    fit_range: tuple
    r_squared: float
    intercept: float = 0.0
    n_points: int = 0


def profile(series) -> DfaProfile:
    """Cumulative sum of the mean-subtracted signal over the whole series."""
    x = _signal(series)
    y = np.cumsum(x - x.mean())
    return DfaProfile(y, x.size)


def min_box_size(degree):
    return 2 * (degree + 1)


def _check_degree(degree):
    check_scalar(degree, "degree", low=0, integer=True)


def _detrend_basis(n, degree):
    # orthonormal basis of degree-`degree` polynomials sampled on n points
    u = (np.arange(n, dtype=np.float64) - (n - 1) / 2.0) / n
    vander = np.vander(u, degree + 1, increasing=True)
    q, _ = np.linalg.qr(vander)
    return q


def _boxes(y, n, alignment):
    k = y.size // n
    if alignment == "newest-first":
        boxes = y[y.size - k * n:].reshape(k, n)[::-1]
    elif alignment == "oldest-first":
        boxes = y[: k * n].reshape(k, n)
    else:
        raise DataError(f"unknown box alignment {alignment!r}")
    return boxes


def _fluct_from_profile(y, n, degree, alignment):
    boxes = _boxes(y, n, alignment)
    q = _detrend_basis(n, degree)
    resid = boxes - (boxes @ q) @ q.T
    f2 = np.mean(resid * resid, axis=1)
    return float(np.sqrt(np.mean(f2)))


def fluctuation(series, n, degree=1, alignment="newest-first"):
    """Detrended fluctuation ``f(n)`` for a single box size.

    Args:
        series: Signal (TimeSeries or 1-D array).
        n: Box size, ``n >= 2 * (degree + 1)`` and ``N >= 2 * n``.
        degree: Order of the per-box polynomial trend.
        alignment: ``"newest-first"`` or ``"oldest-first"``.
    """
    _check_degree(degree)
    x = _signal(series)
    check_scalar(n, "n", integer=True)
    if n < min_box_size(degree) or x.size < 2 * n:
        raise DataError(
            f"box size {n} outside admissible range [{min_box_size(degree)}, {x.size // 2}]"
        )
    return _fluct_from_profile(profile(x).values, n, degree, alignment)


def default_box_sizes(n_points, degree=1, ratio=2 ** 0.25):
    """Geometric schedule from ``2 * (degree + 1)`` up to ``N // 4``."""
    lo, hi = min_box_size(degree), n_points // 4
    if hi < lo:
        return np.array([], dtype=np.int64)
    k_max = int(np.floor(np.log(hi / lo) / np.log(ratio) + 1e-9))
    sizes = np.rint(lo * ratio ** np.arange(k_max + 1)).astype(np.int64)
    sizes = np.unique(np.clip(sizes, lo, hi))
    return sizes


def dfa_curve(series, box_sizes=None, degree=1, alignment="newest-first") -> FluctuationCurve:
    """Fluctuation function over a set of box sizes."""
    _check_degree(degree)
    x = _signal(series)
    if box_sizes is None:
        sizes = default_box_sizes(x.size, degree)
    else:
        sizes = np.unique(np.asarray(box_sizes, dtype=np.int64))
        bad = sizes[(sizes < min_box_size(degree)) | (sizes > x.size // 4)]
        if bad.size:
            raise DataError(
                f"box sizes {bad.tolist()} outside [{min_box_size(degree)}, {x.size // 4}]"
            )
    if sizes.size == 0:
        raise DataError(f"no admissible box size for N={x.size}, degree={degree}")
    y = profile(x).values
    f = np.array([_fluct_from_profile(y, int(n), degree, alignment) for n in sizes])
    return FluctuationCurve(sizes, f, degree, alignment, _zero_tol(x), x.size)


def hurst_exponent(curve: FluctuationCurve, fit_range=None) -> AlphaEstimate:
    """Slope of the OLS line through ``(log n, log f)``.

    Raises:
        DegenerateError: if any ``f`` in the fit range vanishes.
        DataError: if fewer than four points fall in the fit range.
    """
    n = curve.box_sizes
    lo, hi = (n[0], n[-1]) if fit_range is None else fit_range
    sel = (n >= lo) & (n <= hi)
    if sel.sum() < 4:
        raise DataError(f"need >= 4 curve points in fit range, got {int(sel.sum())}")
    if np.any(curve.zero_mask[sel]):
        raise DegenerateError("degenerate signal: zero fluctuation in fit range")
    slope, intercept, stderr, r2 = ols_line(np.log(n[sel]), np.log(curve.f[sel]))
    return AlphaEstimate(slope, stderr, (int(n[sel][0]), int(n[sel][-1])), r2, intercept,
                         int(sel.sum()))


def spectral_exponent(alpha):
    """Power-spectrum exponent ``2 * alpha - 1``."""
    return 2.0 * alpha - 1.0


def autocorr_from_alpha(alpha):
    """Correlation of successive increments, ``2**(2 alpha - 1) - 1``."""
    return 2.0 ** (2.0 * alpha - 1.0) - 1.0


@dataclass(frozen=True)
class Persistence:
    label: str
    alpha: float
    stderr: float
    band: tuple


def classify(alpha, stderr=0.0, n_sigma=1.0) -> Persistence:
    """Persistent / antipersistent / uncorrelated, with the stderr band.

    The signal counts as uncorrelated when ``0.5`` lies inside
    ``alpha +/- n_sigma * stderr``.
    """
    half = n_sigma * abs(stderr)
    band = (alpha - half, alpha + half)
    if band[0] <= 0.5 <= band[1]:
        label = "uncorrelated"
    elif alpha > 0.5:
        label = "persistent"
    else:
        label = "antipersistent"
    return Persistence(label, float(alpha), float(stderr), band)


@dataclass(frozen=True)
class AlphaTrack:
    """Rolling exponent estimates indexed by window end."""

    window_ends: np.ndarray
    alpha: np.ndarray
    stderr: np.ndarray
    window_length: int
    diagnostics: list = field(default_factory=list)

    def __len__(self):
        return self.alpha.size


def rolling_alpha(series, window_length, step=1, degree=1, fit_range=None,
                  alignment="newest-first") -> AlphaTrack:
    """Exponent re-estimated on each rolling window.

    Degenerate windows are skipped and reported in ``diagnostics``.
    """
    x = _signal(series)
    ts = series.timestamps if isinstance(series, TimeSeries) else np.arange(x.size)
    check_scalar(window_length, "window_length", integer=True)
    check_scalar(step, "step", low=1, integer=True)
    if window_length > x.size:
        raise DataError("window longer than the series")
    if default_box_sizes(window_length, degree).size < 4:
        raise DataError(f"window of {window_length} points admits fewer than 4 box sizes")
    ends, alphas, errs, diag = [], [], [], []
    for start in range(0, x.size - window_length + 1, step):
        stop = start + window_length
        curve = dfa_curve(x[start:stop], None, degree, alignment)
        try:
            est = hurst_exponent(curve, fit_range)
        except DegenerateError as exc:
            diag.append(f"window ending at {int(ts[stop - 1])}: {exc}")
            continue
        ends.append(int(ts[stop - 1]))
        alphas.append(est.alpha)
        errs.append(est.stderr)
    return AlphaTrack(np.array(ends, dtype=np.int64), np.array(alphas), np.array(errs),
                      window_length, diag)


class DFA(TransformerMixin, BaseEstimator):
    """Estimator wrapper: ``fit`` analyses one series, ``transform`` maps rows to alpha.

    Parameters
    ----------
    degree : int
        Per-box detrending order.
    box_sizes : array-like or None
        Explicit box sizes; geometric default schedule when None.
    fit_range : tuple or None
        ``(n_min, n_max)`` for the exponent regression.
    alignment : str
        ``"newest-first"`` or ``"oldest-first"``.

    Attributes
    ----------
    curve_ : FluctuationCurve
    alpha_, stderr_, r_squared_ : float
    persistence_ : Persistence
    """

    def __init__(self, degree=1, box_sizes=None, fit_range=None, alignment="newest-first"):
        self.degree = degree
        self.box_sizes = box_sizes
        self.fit_range = fit_range
        self.alignment = alignment

    def _estimate(self, x):
        curve = dfa_curve(x, self.box_sizes, self.degree, self.alignment)
        return curve, hurst_exponent(curve, self.fit_range)

    def fit(self, X, y=None):
        x = np.ravel(np.asarray(X, dtype=np.float64))
        self.curve_, est = self._estimate(x)
        self.alpha_ = est.alpha
        self.stderr_ = est.stderr
        self.r_squared_ = est.r_squared
        self.persistence_ = classify(est.alpha, est.stderr)
        return self

    def transform(self, X):
        """Return an ``(n_series, 1)`` array of exponents, one per row of ``X``."""
        check_is_fitted(self, "alpha_")
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return np.array([[self._estimate(row)[1].alpha] for row in X])

    def fit_transform(self, X, y=None, **fit_params):
        X2 = np.atleast_2d(np.asarray(X, dtype=np.float64))
        self.fit(X2[0])
        return self.transform(X2)
