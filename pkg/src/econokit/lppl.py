"""Log-periodic divergence laws and the split-fit crash-risk protocol.

Two divergence shapes are supported, both in the normalised time
``tau = (t_c - t) / t_c``:

* power form: ``y = A + B * tau**-m * [1 + osc]``
* log form:   ``y = A + B * ln(tau) * [1 + osc]``

``osc`` is either the literal linear bracket ``C * (omega * ln(tau) + phi)``
or the bounded ``C * cos(omega * ln(tau) + phi)`` used for fitting.

All fits are deterministic: nonlinear parameters (``t_c``, ``omega``, ``m``)
are scanned on explicit grids, refined once around the optimum, and every
conditionally linear parameter is solved exactly by least squares at each
grid point. Ties go to the smallest ``t_c``, then the smallest ``omega``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_1d_float
from .exceptions import DataError, DegenerateError
from .series import TimeSeries

FORMS = ("power", "log")
OSCILLATIONS = ("cos", "linear")

DEFAULT_TC_POINTS = 200
DEFAULT_TC_SPAN = 0.5
DEFAULT_OMEGA = (4.0, 25.0, 100)
DEFAULT_M = (0.05, 0.95, 50)


@dataclass(frozen=True)
class LpplParams:
    """Parameters of a log-periodic divergence law.

    ``m_prime`` is ignored by the log form. ``residual`` is the sum of
    squared residuals when the parameters come from a fit.
    """

    A: float
    B: float
    C: float = 0.0
    omega: float = 1.0
    phi: float = 0.0
    t_c: float = 1.0
    m_prime: Optional[float] = None
    form: str = "power"
    oscillation: str = "cos"
    residual: float = float("nan")
    resolution: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.form not in FORMS:
            raise DataError(f"unknown form {self.form!r}")
        if self.oscillation not in OSCILLATIONS:
            raise DataError(f"unknown oscillation {self.oscillation!r}")
        if not self.omega > 0:
            raise DataError("omega must be positive")
        if not self.t_c > 0:
            raise DataError("t_c must be positive (tau is normalised by t_c)")
        if self.form == "power":
            if self.m_prime is None or not 0.0 < self.m_prime < 1.0:
                raise DataError("power form needs m_prime in (0, 1)")

    def as_dict(self):
        return {
            "A": self.A, "B": self.B, "C": self.C, "omega": self.omega, "phi": self.phi,
            "t_c": self.t_c, "m_prime": self.m_prime, "form": self.form,
            "oscillation": self.oscillation, "residual": self.residual,
            "resolution": dict(self.resolution),
        }


def _tau(t, t_c):
    t = np.asarray(t, dtype=np.float64)
    if np.any(t >= t_c):
        raise DataError(f"evaluation time must precede t_c={t_c}")
    return (t_c - t) / t_c


def _divergence(tau, form, m_prime):
    if form == "log":
        return np.log(tau)
    return tau ** (-m_prime)


def _bracket(ltau, C, omega, phi, oscillation):
    if oscillation == "linear":
        return 1.0 + C * (omega * ltau + phi)
    return 1.0 + C * np.cos(omega * ltau + phi)


def lppl_eval(params: LpplParams, t, oscillation=None):
    """Power form ``A + B tau**-m' [1 + osc]``; ``oscillation`` overrides the params'."""
    if params.form != "power":
        raise DataError("lppl_eval needs power-form parameters")
    tau = _tau(t, params.t_c)
    osc = oscillation or params.oscillation
    return params.A + params.B * tau ** (-params.m_prime) * _bracket(
        np.log(tau), params.C, params.omega, params.phi, osc)


def log_lppl_eval(params: LpplParams, t, oscillation=None):
    """Log form ``A + B ln(tau) [1 + osc]``, the ``m' -> 0`` simplification."""
    if params.form != "log":
        raise DataError("log_lppl_eval needs log-form parameters")
    tau = _tau(t, params.t_c)
    lt = np.log(tau)
    osc = oscillation or params.oscillation
    return params.A + params.B * lt * _bracket(lt, params.C, params.omega, params.phi, osc)


def evaluate(params: LpplParams, t, oscillation=None):
    if params.form == "log":
        return log_lppl_eval(params, t, oscillation)
    return lppl_eval(params, t, oscillation)


# --------------------------------------------------------------------------- grids

def _xy(series):
    if isinstance(series, TimeSeries):
        return series.timestamps.astype(np.float64), series.values
    if isinstance(series, tuple) and len(series) == 2:
        t = as_1d_float(series[0], "t")
        y = as_1d_float(series[1], "y")
        if t.size != y.size:
            raise DataError("t and y differ in length")
        if np.any(np.diff(t) <= 0):
            raise DataError("non-monotone timestamps")
        return t, y
    y = as_1d_float(series, "y")
    return np.arange(y.size, dtype=np.float64), y


def default_tc_grid(t, n_points=DEFAULT_TC_POINTS, span=DEFAULT_TC_SPAN):
    """``t_c`` candidates from one step past the window end to ``end + span * length``."""
    end = float(t[-1])
    length = float(t[-1] - t[0] + 1)
    return np.linspace(end + 1.0, end + span * length, n_points)


def default_omega_grid():
    lo, hi, n = DEFAULT_OMEGA
    return np.linspace(lo, hi, n)


def default_m_grid():
    lo, hi, n = DEFAULT_M
    return np.linspace(lo, hi, n)


def _admissible_tc(grid, t):
    if grid is None:
        grid = default_tc_grid(t)
    grid = np.sort(np.asarray(grid, dtype=np.float64))
    if grid.size == 0:
        raise DataError("empty t_c grid")
    grid = grid[(grid > t[-1]) & (grid > 0)]
    if grid.size == 0:
        raise DataError("every t_c candidate precedes the end of the fit window")
    return grid


def _sorted_grid(grid, name):
    grid = np.sort(np.asarray(grid, dtype=np.float64))
    if grid.size == 0:
        raise DataError(f"empty {name} grid")
    return grid


def _refined(grid, idx, n_half, lower=None, upper=None):
    """Odd-sized grid spanning one coarse cell either side of ``grid[idx]``."""
    center = grid[idx]
    if grid.size == 1:
        return grid.copy(), 0.0
    left = grid[idx] - grid[idx - 1] if idx > 0 else grid[1] - grid[0]
    right = grid[idx + 1] - grid[idx] if idx < grid.size - 1 else grid[-1] - grid[-2]
    h = max(left, right)
    fine = center + h * np.arange(-n_half, n_half + 1) / n_half
    if lower is not None:
        fine = fine[fine > lower]
    if upper is not None:
        fine = fine[fine < upper]
    return fine, h / n_half


def _sse(resid):
    return np.einsum("...i,...i->...", resid, resid)


def _ols_line_batch(g, y):
    """Row-wise OLS of ``y`` on ``[1, g]`` for a stack ``g`` of shape (k, N)."""
    gm = g.mean(axis=1, keepdims=True)
    dg = g - gm
    ym = y.mean()
    dy = y - ym
    sgg = _sse(dg)
    with np.errstate(divide="ignore", invalid="ignore"):
        b = (dg @ dy) / sgg
    a = ym - b * gm[:, 0]
    resid = dy[None, :] - b[:, None] * dg
    sse = _sse(resid)
    sse[~np.isfinite(b)] = np.inf
    return a, b, sse


def _lstsq_batch(X, y):
    """Least squares for a stack of designs ``X`` (k, N, p); returns coef, sse."""
    q, r = np.linalg.qr(X)
    qty = np.einsum("kni,n->ki", q, y)
    with np.errstate(all="ignore"):
        coef = np.linalg.solve(r, qty[..., None])[..., 0]
    resid = y[None, :] - np.einsum("kni,ki->kn", q, qty)
    sse = _sse(resid)
    diag = np.abs(np.diagonal(r, axis1=1, axis2=2))
    bad = ~np.all(diag > 1e-12 * np.max(diag, axis=1, keepdims=True), axis=1)
    bad |= ~np.all(np.isfinite(coef), axis=1)
    sse[bad] = np.inf
    return coef, sse


# --------------------------------------------------------------------------- divergence

@dataclass(frozen=True)
class DivergenceFit:
    A: float
    B: float
    m_prime: Optional[float]
    t_c: float
    residual: float
    r_squared: float
    form: str
    at_boundary: bool = False
    resolution: float = 0.0

    def shape(self, t):
        return _divergence(_tau(t, self.t_c), self.form, self.m_prime)

    def predict(self, t):
        return self.A + self.B * self.shape(t)


def _check_signal(y, min_points):
    if y.size < min_points:
        raise DataError(f"need at least {min_points} points, got {y.size}")
    if np.ptp(y) == 0:
        raise DegenerateError("singular design: constant series")


def _divergence_scan(t, y, tc_grid, form, m_grid, modulation=None):
    """SSE table over (t_c[, m]) with the closed-form (A, B) solution."""
    h = 1.0 if modulation is None else modulation[None, :]
    lt = np.log((tc_grid[:, None] - t[None, :]) / tc_grid[:, None])
    if form == "log":
        a, b, sse = _ols_line_batch(lt * h, y)
        return a[:, None], b[:, None], sse[:, None]
    shape = (tc_grid.size, m_grid.size)
    A, B, S = np.empty(shape), np.empty(shape), np.empty(shape)
    for j, m in enumerate(m_grid):
        A[:, j], B[:, j], S[:, j] = _ols_line_batch(np.exp(-m * lt) * h, y)
    return A, B, S


def fit_divergence(series, t_c_grid=None, form="log", m_grid=None, refine=True,
                   refine_points=10, modulation=None) -> DivergenceFit:
    """Fit the pure divergence ``A + B g(tau)`` by profiling ``t_c`` (and ``m'``).

    Args:
        series: TimeSeries, ``(t, y)`` tuple or 1-D array on ``0..N-1``.
        t_c_grid: Candidate critical times; default spans
            ``(end + 1, end + 0.5 * length)`` with 200 points.
        form: ``"log"`` or ``"power"``.
        m_grid: Exponent candidates in (0, 1) for the power form.
        refine: Rescan one coarse cell either side of the optimum.
        refine_points: Half-width, in points, of each refined grid.
        modulation: Optional fixed factor ``h(t)`` so that ``A + B g h`` is
            fitted instead; used to hold an oscillation fit fixed.
    """
    if form not in FORMS:
        raise DataError(f"unknown form {form!r}")
    t, y = _xy(series)
    _check_signal(y, 20)
    tc = _admissible_tc(t_c_grid, t)
    ms = _sorted_grid(default_m_grid() if m_grid is None else m_grid, "m'")
    if form == "power" and (ms[0] <= 0 or ms[-1] >= 1):
        raise DataError("m' candidates must lie in (0, 1)")
    if modulation is not None:
        modulation = as_1d_float(modulation, "modulation")
    A, B, S = _divergence_scan(t, y, tc, form, ms, modulation)
    if not np.any(np.isfinite(S)):
        raise DegenerateError("singular design at every grid point")
    i, j = np.unravel_index(np.argmin(S), S.shape)
    boundary = i in (0, tc.size - 1) and tc.size > 1
    res = 0.0
    best = (A[i, j], B[i, j], S[i, j], tc[i], ms[j] if form == "power" else None)
    if refine:
        fine_tc, res = _refined(tc, i, refine_points, lower=t[-1])
        fine_m = ms[[j]]
        if form == "power":
            fine_m, _ = _refined(ms, j, refine_points, 0.0, 1.0)
        A2, B2, S2 = _divergence_scan(t, y, fine_tc, form, fine_m, modulation)
        i2, j2 = np.unravel_index(np.argmin(S2), S2.shape)
        if S2[i2, j2] < best[2]:
            best = (A2[i2, j2], B2[i2, j2], S2[i2, j2], fine_tc[i2],
                    fine_m[j2] if form == "power" else None)
    a, b, sse, t_c, m = best
    sst = float(np.sum((y - y.mean()) ** 2))
    return DivergenceFit(float(a), float(b), None if m is None else float(m), float(t_c),
                         float(sse), 1.0 - float(sse) / sst, form, bool(boundary), float(res))


# --------------------------------------------------------------------------- oscillation

@dataclass(frozen=True)
class OscillationFit:
    C: float
    omega: float
    phi: float
    t_c: float
    residual: float
    C_stderr: float
    explained: float
    oscillation: str = "cos"
    at_boundary: bool = False
    resolution: float = 0.0


def _osc_scan_cos(lt_grid, w, e, omegas):
    """SSE over (t_c, omega) for ``e ~ C1 w cos(omega L) + C2 w sin(omega L)``."""
    n_tc = lt_grid.shape[0]
    S = np.empty((n_tc, omegas.size))
    C1 = np.empty_like(S)
    C2 = np.empty_like(S)
    ee = float(e @ e)
    w2 = w * w
    sw2 = float(w2.sum())
    we = w * e
    chunk = 64
    d_om = np.diff(omegas)
    uniform = omegas.size > 2 and np.allclose(d_om, d_om[0], rtol=1e-9, atol=0.0)
    for i0 in range(0, n_tc, chunk):
        rows = slice(i0, min(i0 + chunk, n_tc))
        lt = lt_grid[rows]
        if uniform:
            # e^{i w_k L} = e^{i w_0 L} (e^{i dw L})^k
            z1 = np.empty((lt.shape[0], omegas.size), dtype=np.complex128)
            z2 = np.empty_like(z1)
            cur = np.exp(1j * omegas[0] * lt)
            step = np.exp(1j * d_om[0] * lt)
            for k in range(omegas.size):
                z1[:, k] = cur @ we
                z2[:, k] = (cur * cur) @ w2
                cur *= step
        else:
            rot = np.exp(1j * omegas[None, :, None] * lt[:, None, :])
            z2 = (rot * rot) @ w2
            z1 = rot @ we
        # double-angle sums give the 2x2 normal equations without forming cos/sin
        suu = 0.5 * (sw2 + z2.real)
        svv = 0.5 * (sw2 - z2.real)
        suv = 0.5 * z2.imag
        sue, sve = z1.real, z1.imag
        det = suu * svv - suv * suv
        with np.errstate(divide="ignore", invalid="ignore"):
            c1 = (svv * sue - suv * sve) / det
            c2 = (suu * sve - suv * sue) / det
        sse = ee - (c1 * sue + c2 * sve)
        ok = det > 1e-10 * np.maximum(suu * svv, 1e-300)
        S[rows] = np.where(ok, np.maximum(sse, 0.0), np.inf)
        C1[rows], C2[rows] = c1, c2
    return S, C1, C2


def fit_oscillation(series, divergence: DivergenceFit, t_c_grid=None, omega_grid=None,
                    oscillation="cos", refine=True, refine_points=10) -> OscillationFit:
    """Fit the log-periodic modulation left after removing a divergence fit.

    The divergence-stage residual ``e = y - A - B g`` is regressed on
    ``B g cos(omega ln tau_o)`` and ``B g sin(omega ln tau_o)``, where
    ``tau_o`` uses the oscillation stage's own critical time. This is the
    relative residual ``e / (B g)`` fitted with weights ``(B g)**2``, which
    stays well defined where ``g`` vanishes.

    With ``oscillation="linear"`` only ``C * omega`` and ``C * phi`` are
    identifiable; ``omega`` is reported as 1 and the product goes into ``C``.
    """
    if oscillation not in OSCILLATIONS:
        raise DataError(f"unknown oscillation {oscillation!r}")
    t, y = _xy(series)
    g = divergence.shape(t)
    w = divergence.B * g
    if not np.max(np.abs(w)) > 1e-12 * max(np.max(np.abs(y)), 1e-300):
        raise DegenerateError("divergence fit is degenerate (B ~ 0)")
    e = y - divergence.predict(t)
    tc = _admissible_tc(t_c_grid, t)
    lt = np.log((tc[:, None] - t[None, :]) / tc[:, None])
    ee = float(e @ e)
    n = y.size

    if oscillation == "linear":
        X = np.stack([w[None, :] * lt, np.broadcast_to(w, lt.shape)], axis=2)
        coef, S = _lstsq_batch(X, e)
        if not np.any(np.isfinite(S)):
            raise DegenerateError("oscillation design singular at every grid point")
        i = int(np.argmin(S))
        boundary = i in (0, tc.size - 1) and tc.size > 1
        res = 0.0
        best_tc, best_coef, best_s = tc[i], coef[i], S[i]
        if refine:
            fine, res = _refined(tc, i, refine_points, lower=t[-1])
            ltf = np.log((fine[:, None] - t[None, :]) / fine[:, None])
            Xf = np.stack([w[None, :] * ltf, np.broadcast_to(w, ltf.shape)], axis=2)
            cf, Sf = _lstsq_batch(Xf, e)
            k = int(np.argmin(Sf))
            if Sf[k] < best_s:
                best_tc, best_coef, best_s = fine[k], cf[k], Sf[k]
        c_omega, c_phi = best_coef
        phi = c_phi / c_omega if c_omega != 0 else 0.0
        return OscillationFit(float(c_omega), 1.0, float(phi), float(best_tc), float(best_s),
                              float("nan"), 1.0 - best_s / ee if ee > 0 else 0.0,
                              "linear", bool(boundary), float(res))

    om = _sorted_grid(default_omega_grid() if omega_grid is None else omega_grid, "omega")
    if om[0] <= 0:
        raise DataError("omega candidates must be positive")
    S, C1, C2 = _osc_scan_cos(lt, w, e, om)
    if not np.any(np.isfinite(S)):
        raise DegenerateError("oscillation design singular at every grid point")
    i, j = np.unravel_index(np.argmin(S), S.shape)
    boundary = i in (0, tc.size - 1) and tc.size > 1
    best = (S[i, j], C1[i, j], C2[i, j], tc[i], om[j])
    res = 0.0
    if refine:
        fine_tc, res = _refined(tc, i, refine_points, lower=t[-1])
        fine_om, _ = _refined(om, j, refine_points, lower=0.0)
        ltf = np.log((fine_tc[:, None] - t[None, :]) / fine_tc[:, None])
        S2, D1, D2 = _osc_scan_cos(ltf, w, e, fine_om)
        i2, j2 = np.unravel_index(np.argmin(S2), S2.shape)
        if S2[i2, j2] < best[0]:
            best = (S2[i2, j2], D1[i2, j2], D2[i2, j2], fine_tc[i2], fine_om[j2])
    sse, c1, c2, t_c, omega = best
    C = float(np.hypot(c1, c2))
    phi = float(np.arctan2(-c2, c1))
    stderr = _amplitude_stderr(w, t, t_c, omega, c1, c2, sse, n)
    return OscillationFit(C, float(omega), phi, float(t_c), float(sse), stderr,
                          1.0 - sse / ee if ee > 0 else 0.0, "cos", bool(boundary), float(res))


def _amplitude_stderr(w, t, t_c, omega, c1, c2, sse, n):
    ph = omega * np.log((t_c - t) / t_c)
    X = np.column_stack([w * np.cos(ph), w * np.sin(ph)])
    sigma2 = sse / max(n - 2, 1)
    cov = sigma2 * np.linalg.pinv(X.T @ X)
    C = np.hypot(c1, c2)
    if C == 0:
        return float(np.sqrt(0.5 * np.trace(cov)))
    grad = np.array([c1, c2]) / C
    return float(np.sqrt(max(grad @ cov @ grad, 0.0)))


# --------------------------------------------------------------------------- split fit

@dataclass(frozen=True)
class FitConfig:
    """Grid and model settings shared by the split and full fits.

    ``None`` grids fall back to the defaults derived from the fit window.
    """

    form: str = "log"
    oscillation: str = "cos"
    t_c_grid: Optional[np.ndarray] = None
    omega_grid: Optional[np.ndarray] = None
    m_grid: Optional[np.ndarray] = None
    refine: bool = True
    r2_min: float = 0.5
    min_explained: float = 0.1
    backfit_iterations: int = 20


@dataclass(frozen=True)
class SplitFitResult:
    t_c_div: float
    t_c_osc: float
    gap: float
    divergence: DivergenceFit
    oscillation: OscillationFit
    residuals: dict
    low_confidence: bool
    reasons: tuple = ()
    window_end: float = float("nan")

    @property
    def divergence_params(self):
        d = self.divergence
        return {"A": d.A, "B": d.B, "m_prime": d.m_prime}

    @property
    def oscillation_params(self):
        o = self.oscillation
        return {"C": o.C, "omega": o.omega, "phi": o.phi}

    def as_dict(self):
        return {
            "window_end": self.window_end, "t_c_div": self.t_c_div,
            "t_c_osc": self.t_c_osc, "gap": self.gap,
            "divergence_params": self.divergence_params,
            "oscillation_params": self.oscillation_params,
            "residuals": dict(self.residuals), "low_confidence": self.low_confidence,
            "reasons": list(self.reasons),
        }


def _modulation(t, osc: OscillationFit):
    return _bracket(np.log(_tau(t, osc.t_c)), osc.C, osc.omega, osc.phi, osc.oscillation)


def split_fit(series, config: FitConfig = FitConfig()) -> SplitFitResult:
    """Divergence and oscillation fitted separately, each with its own ``t_c``.

    The first pass fits the bare divergence, then the oscillation on its
    residual. Further passes (up to ``config.backfit_iterations``) refit the
    divergence with the current oscillation held fixed as a modulation, then
    the oscillation again. Both stages lower the same combined residual, so
    the passes stop once it no longer decreases; each ``t_c`` stays a
    separate parameter throughout, and the passes also stop once neither
    ``t_c`` moves by more than its grid resolution. ``backfit_iterations=1``
    is the single pass.

    The result is flagged low-confidence when either ``t_c`` sits on the edge
    of its grid, the bare divergence explains less than ``config.r2_min`` of
    the variance, or the oscillation explains less than
    ``config.min_explained`` of the divergence residual.
    """
    t, y = _xy(series)
    div = fit_divergence((t, y), config.t_c_grid, config.form, config.m_grid, config.refine)
    osc = fit_oscillation((t, y), div, config.t_c_grid, config.omega_grid,
                          config.oscillation, config.refine)
    bare = div
    passes = 1
    for _ in range(1, config.backfit_iterations):
        try:
            div2 = fit_divergence((t, y), config.t_c_grid, config.form, config.m_grid,
                                  config.refine, modulation=_modulation(t, osc))
            osc2 = fit_oscillation((t, y), div2, config.t_c_grid, config.omega_grid,
                                   config.oscillation, config.refine)
        except DegenerateError:
            break
        if not osc2.residual < osc.residual * (1.0 - 1e-9):
            break
        settled = (abs(div2.t_c - div.t_c) <= max(div.resolution, 1e-12)
                   and abs(osc2.t_c - osc.t_c) <= max(osc.resolution, 1e-12))
        div, osc = div2, osc2
        passes += 1
        if settled:
            break
    reasons = []
    if div.at_boundary:
        reasons.append("divergence t_c on grid boundary")
    if osc.at_boundary:
        reasons.append("oscillation t_c on grid boundary")
    if bare.r_squared < config.r2_min:
        reasons.append(f"divergence R^2 {bare.r_squared:.3f} < {config.r2_min}")
    if osc.explained < config.min_explained:
        reasons.append(f"oscillation explains {osc.explained:.3f} < {config.min_explained}")
    return SplitFitResult(
        div.t_c, osc.t_c, div.t_c - osc.t_c, div, osc,
        {"divergence": bare.residual, "oscillation": osc.residual, "combined": osc.residual,
         "passes": passes},
        bool(reasons), tuple(reasons), float(t[-1]),
    )


# --------------------------------------------------------------------------- full fit

def _full_design(t, t_c, m, omegas, form, oscillation):
    lt = np.log((t_c - t) / t_c)
    g = lt if form == "log" else np.exp(-m * lt)
    ones = np.ones_like(t)
    if oscillation == "linear":
        X = np.column_stack([ones, g, g * lt])[None]
        return X
    ph = omegas[:, None] * lt[None, :]
    k = omegas.size
    return np.stack([np.broadcast_to(ones, (k, t.size)), np.broadcast_to(g, (k, t.size)),
                     g * np.cos(ph), g * np.sin(ph)], axis=2)


def _full_scan(t, y, tcs, ms, omegas, form, oscillation):
    n_om = 1 if oscillation == "linear" else omegas.size
    S = np.full((tcs.size, ms.size, n_om), np.inf)
    coefs = np.zeros((tcs.size, ms.size, n_om, 4))
    for i, t_c in enumerate(tcs):
        for j, m in enumerate(ms):
            coef, sse = _lstsq_batch(_full_design(t, t_c, m, omegas, form, oscillation), y)
            S[i, j] = sse
            coefs[i, j, :, : coef.shape[1]] = coef
    return S, coefs


def full_fit(series, config: FitConfig = FitConfig(), refine_points=5) -> LpplParams:
    """Joint fit of all seven (six in log form) parameters by grid profiling.

    The outer grid runs over ``(t_c, omega, m')`` (``(t_c, omega)`` in log
    form); ``A, B, B*C*cos(phi), B*C*sin(phi)`` are solved exactly at each
    point. The returned ``resolution`` holds the refined grid spacing per
    nonlinear parameter.
    """
    form, osc = config.form, config.oscillation
    if form not in FORMS:
        raise DataError(f"unknown form {form!r}")
    t, y = _xy(series)
    _check_signal(y, 30)
    tcs = _admissible_tc(config.t_c_grid, t)
    oms = _sorted_grid(default_omega_grid() if config.omega_grid is None
                       else config.omega_grid, "omega")
    if form == "power":
        ms = _sorted_grid(default_m_grid() if config.m_grid is None else config.m_grid, "m'")
        if ms[0] <= 0 or ms[-1] >= 1:
            raise DataError("m' candidates must lie in (0, 1)")
    else:
        ms = np.array([0.0])
    if osc == "linear":
        oms = np.array([1.0])

    S, coefs = _full_scan(t, y, tcs, ms, oms, form, osc)
    if not np.any(np.isfinite(S)):
        raise DegenerateError("singular inner system at every grid point")
    idx = np.unravel_index(np.argmin(S), S.shape)
    best = (S[idx], coefs[idx], tcs[idx[0]], ms[idx[1]], oms[idx[2]])
    resolution = {}
    if config.refine:
        ftc, resolution["t_c"] = _refined(tcs, idx[0], refine_points, lower=t[-1])
        fm = ms
        if form == "power":
            fm, resolution["m_prime"] = _refined(ms, idx[1], refine_points, 0.0, 1.0)
        fom = oms
        if osc == "cos":
            fom, resolution["omega"] = _refined(oms, idx[2], refine_points, lower=0.0)
        S2, c2 = _full_scan(t, y, ftc, fm, fom, form, osc)
        k = np.unravel_index(np.argmin(S2), S2.shape)
        if S2[k] < best[0]:
            best = (S2[k], c2[k], ftc[k[0]], fm[k[1]], fom[k[2]])
    sse, coef, t_c, m, omega = best
    A, B = coef[0], coef[1]
    if osc == "linear":
        # B g (1 + C (omega L + phi)) = B g + B C omega g L with phi folded into B
        C, phi, omega = coef[2] / B, 0.0, 1.0
    else:
        c1, c2 = coef[2] / B, coef[3] / B
        C, phi = np.hypot(c1, c2), np.arctan2(-c2, c1)
    return LpplParams(float(A), float(B), float(C), float(omega), float(phi), float(t_c),
                      float(m) if form == "power" else None, form, osc, float(sse),
                      resolution)


# --------------------------------------------------------------------------- crash risk

@dataclass(frozen=True)
class GapAssessment:
    converged: bool
    annotation: Optional[str]


def assess_gaps(gaps, k=5, threshold=5.0, tol=None, confident=None) -> GapAssessment:
    """Apply the convergence and near-to-crash rules to a gap sequence.

    Converged: the last ``k`` absolute gaps never grow by more than ``tol``
    from one window to the next, all ``k`` fits are confident, and the last
    gap is below ``threshold``. Near-to-crash: the absolute gap shrinks to an
    interior minimum and widens again, by more than ``tol`` on both sides.
    ``tol`` defaults to half the threshold.
    """
    if tol is None:
        tol = 0.5 * threshold
    g = np.abs(np.asarray(gaps, dtype=np.float64))
    if g.size < k:
        return GapAssessment(False, None)
    tail = g[-k:]
    ok = confident is None or all(list(confident)[-k:])
    converged = bool(ok and np.all(np.diff(tail) <= tol) and tail[-1] < threshold)
    annotation = None
    j = int(np.argmin(g))
    if 0 < j < g.size - 1 and g[0] - g[j] > tol and g[-1] - g[j] > tol:
        annotation = "near-to-crash"
    return GapAssessment(converged, annotation)


@dataclass(frozen=True)
class CrashRiskTrack:
    entries: list
    convergence_flag: bool
    flag_history: np.ndarray
    first_flag_end: Optional[float]
    annotation: Optional[str]
    k: int = 5
    threshold: float = 5.0

    @property
    def gaps(self):
        return np.array([e.gap for e in self.entries])

    @property
    def window_ends(self):
        return np.array([e.window_end for e in self.entries])

    def as_dict(self):
        return {
            "convergence_flag": self.convergence_flag,
            "first_flag_end": self.first_flag_end,
            "annotation": self.annotation, "k": self.k, "threshold": self.threshold,
            "flag_history": self.flag_history.tolist(),
            "entries": [e.as_dict() for e in self.entries],
        }


def crash_risk_track(series, window_policy="growing", step=5, first_end=None,
                     window_length=None, config: FitConfig = FitConfig(), k=5,
                     threshold=5.0, tol=None) -> CrashRiskTrack:
    """Split fits over successive windows and the resulting ``t_c`` gap track.

    Args:
        series: Input signal.
        window_policy: ``"growing"`` (fixed start) or ``"rolling"`` (fixed length).
        step: Points between successive window ends.
        first_end: Position of the first window end (default: the one giving
            ``2 * k`` windows, or ``k`` if the series is short).
        window_length: Rolling window length (default: ``first_end + 1``).
        config: Grid settings; ``t_c_grid`` is recomputed per window when None.
        k: Number of trailing windows inspected by the convergence rule.
        threshold: Gap (index units) below which convergence may be declared.
        tol: Slack allowed on the monotone-shrink condition (default
            ``threshold / 2``).
    """
    if window_policy not in ("growing", "rolling"):
        raise DataError(f"unknown window policy {window_policy!r}")
    t, y = _xy(series)
    n = y.size
    if first_end is None:
        for count in (2 * k, k):
            first_end = n - 1 - (count - 1) * step
            if first_end >= 29:
                break
    ends = list(range(first_end, n, step))
    if len(ends) < k or first_end < 0:
        raise DataError(f"need at least {k} windows, got {len(ends)}")
    if window_length is None:
        window_length = first_end + 1
    entries = []
    for end in ends:
        start = 0 if window_policy == "growing" else max(0, end + 1 - window_length)
        entries.append(split_fit((t[start:end + 1], y[start:end + 1]), config))
    gaps = [e.gap for e in entries]
    conf = [not e.low_confidence for e in entries]
    history = np.array([assess_gaps(gaps[: i + 1], k, threshold, tol, conf[: i + 1]).converged
                        for i in range(len(entries))])
    final = assess_gaps(gaps, k, threshold, tol, conf)
    first = float(entries[int(np.argmax(history))].window_end) if history.any() else None
    return CrashRiskTrack(entries, final.converged, history, first, final.annotation, k,
                          threshold)


class LPPLRegressor(RegressorMixin, BaseEstimator):
    """Estimator interface to :func:`full_fit`.

    ``fit(t, y)`` takes times as a 1-D array or a single-column 2-D array.
    """

    def __init__(self, form="log", oscillation="cos", t_c_grid=None, omega_grid=None,
                 m_grid=None, refine=True):
        self.form = form
        self.oscillation = oscillation
        self.t_c_grid = t_c_grid
        self.omega_grid = omega_grid
        self.m_grid = m_grid
        self.refine = refine

    def _config(self):
        return FitConfig(self.form, self.oscillation, self.t_c_grid, self.omega_grid,
                         self.m_grid, self.refine)

    def fit(self, X, y):
        t = np.ravel(np.asarray(X, dtype=np.float64))
        self.params_ = full_fit((t, np.asarray(y, dtype=np.float64)), self._config())
        self.t_c_ = self.params_.t_c
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        return evaluate(self.params_, np.ravel(np.asarray(X, dtype=np.float64)))
