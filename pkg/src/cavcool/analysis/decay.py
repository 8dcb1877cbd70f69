"""Decay-rate fits and the rate-vs-scattering regression."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, asdict

import numpy as np
from scipy.optimize import least_squares

from ..errors import FitError, NotApplicableError


@dataclass
class DecayFitResult:
    """Energy decay rate ``rate`` (1/s) with amplitude and asymptote.

    For the sinusoid variant ``frequency`` (rad/s) and ``phase`` are set;
    ``rate`` is still the energy rate, twice the amplitude decay rate.
    """

    rate: float
    rate_err: float
    amplitude: float
    amplitude_err: float
    offset: float
    offset_err: float
    covariance: np.ndarray
    chi2_dof: float
    frequency: float | None = None
    frequency_err: float | None = None
    phase: float | None = None

    def as_record(self):
        rec = asdict(self)
        rec["covariance"] = np.asarray(self.covariance).tolist()
        return rec


@dataclass
class LinearFitResult:
    slope: float
    slope_err: float
    intercept: float
    intercept_err: float
    covariance: np.ndarray
    chi2_dof: float

    def as_record(self):
        rec = asdict(self)
        rec["covariance"] = np.asarray(self.covariance).tolist()
        return rec


def _covariance(res, n_params, absolute):
    J = res.jac
    dof = max(len(res.fun) - n_params, 1)
    chi2 = float(np.sum(res.fun**2))
    try:
        cov = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        cov = np.full((n_params, n_params), np.inf)
    if not absolute:
        cov = cov * chi2 / dof
    return cov, chi2 / dof


def _check(res, what):
    if not res.success or not np.all(np.isfinite(res.x)):
        raise FitError(f"{what} fit did not converge: {res.message}", residual=float(np.sum(res.fun**2)))


def fit_exponential_decay(t, y, sigma=None, p0=None):
    """Weighted least-squares fit of y = A exp(-gamma (t - t0)) + C.

    ``t0`` is the first sample time. Without ``sigma`` uncertainties are
    scaled by the residual variance.

    Raises
    ------
    FitError
        Too few points or non-convergence (carries the final residual).
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(y) & np.isfinite(t)
    if sigma is not None:
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
        ok &= np.isfinite(sigma) & (sigma > 0)
        sigma = sigma[ok]
    t, y = t[ok], y[ok]
    if len(t) < 10:
        raise FitError(f"need at least 10 points, got {len(t)}")
    tau = t - t[0]
    span = tau[-1]
    w = np.ones_like(y) if sigma is None else 1.0 / sigma

    if p0 is None:
        tail = max(len(y) // 10, 1)
        C0 = float(np.mean(y[-tail:]))
        A0 = float(y[0] - C0)
        target = C0 + A0 / math.e
        idx = np.nonzero((y - target) * np.sign(A0) <= 0)[0] if A0 != 0 else []
        g0 = 1.0 / tau[idx[0]] if len(idx) and tau[idx[0]] > 0 else 3.0 / span
        p0 = (A0, g0, C0)
    scale = np.array([max(abs(p0[0]), 1e-300), max(abs(p0[1]), 1e-300), max(abs(p0[0]), abs(p0[2]), 1e-300)])

    def resid(p):
        A, g, C = p * scale
        return (A * np.exp(-g * tau) + C - y) * w

    def jac(p):
        A, g, C = p * scale
        e = np.exp(-g * tau)
        return np.column_stack((e * scale[0], -A * tau * e * scale[1], np.full_like(tau, scale[2]))) * w[:, None]

    res = least_squares(resid, np.asarray(p0) / scale, jac=jac, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14,
                        max_nfev=20000)
    _check(res, "exponential")
    cov, chi2_dof = _covariance(res, 3, sigma is not None)
    cov = cov * np.outer(scale, scale)
    A, g, C = res.x * scale
    if abs(g) * span < 1:
        warnings.warn(f"fit window spans only {abs(g) * span:.2f} e-folding times", stacklevel=2)
    err = np.sqrt(np.diag(cov))
    return DecayFitResult(
        rate=float(g), rate_err=float(err[1]), amplitude=float(A), amplitude_err=float(err[0]),
        offset=float(C), offset_err=float(err[2]), covariance=cov, chi2_dof=float(chi2_dof),
    )


def _dominant_frequency(t, y):
    dt = np.median(np.diff(t))
    yy = y - np.mean(y)
    n = len(yy)
    spec = np.abs(np.fft.rfft(yy * np.hanning(n), 8 * n)) ** 2
    freqs = np.fft.rfftfreq(8 * n, dt)
    k = int(np.argmax(spec[1:])) + 1
    floor = np.median(spec[1:])
    return 2 * np.pi * freqs[k], spec[k], floor


def fit_decaying_sinusoid(t, y, sigma=None, min_peak_ratio=3.0):
    """Fit y = exp(-gamma t / 2) (a cos wt + b sin wt) + C.

    Returns the energy decay rate gamma (twice the amplitude rate).

    Raises
    ------
    NotApplicableError
        No oscillation: periodogram peak below ``min_peak_ratio`` x its median.
    FitError
        Non-convergence.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(t) < 10:
        raise FitError(f"need at least 10 points, got {len(t)}")
    tau = t - t[0]
    w_est, peak, floor = _dominant_frequency(t, y)
    if not peak > min_peak_ratio * floor:
        raise NotApplicableError(f"no oscillation detected (peak/floor = {peak / floor:.2g})")
    wt = np.ones_like(y) if sigma is None else 1.0 / np.broadcast_to(np.asarray(sigma, dtype=float), y.shape)
    span = tau[-1]

    def linear_part(g, om):
        e = np.exp(-g * tau / 2)
        M = np.column_stack((e * np.cos(om * tau), e * np.sin(om * tau), np.ones_like(tau))) * wt[:, None]
        coef, *_ = np.linalg.lstsq(M, y * wt, rcond=None)
        r = M @ coef - y * wt
        return coef, float(r @ r)

    best = None
    for g in np.geomspace(0.3 / span, 30 / span, 25):
        coef, cost = linear_part(g, w_est)
        if best is None or cost < best[0]:
            best = (cost, g, coef)
    _, g0, (a0, b0, c0) = best
    amp = max(math.hypot(a0, b0), 1e-300)
    scale = np.array([g0, w_est, amp, amp, max(abs(c0), amp)])

    def unpack(p):
        return p * scale

    def resid(p):
        g, om, a, b, C = unpack(p)
        e = np.exp(-g * tau / 2)
        return (e * (a * np.cos(om * tau) + b * np.sin(om * tau)) + C - y) * wt

    def jac(p):
        g, om, a, b, C = unpack(p)
        e = np.exp(-g * tau / 2)
        co, si = np.cos(om * tau), np.sin(om * tau)
        osc = a * co + b * si
        cols = (
            -tau / 2 * e * osc,
            e * tau * (-a * si + b * co),
            e * co,
            e * si,
            np.ones_like(tau),
        )
        return np.column_stack(cols) * scale * wt[:, None]

    p0 = np.array([g0, w_est, a0, b0, c0]) / scale
    res = least_squares(resid, p0, jac=jac, method="lm", xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=20000)
    _check(res, "decaying sinusoid")
    cov, chi2_dof = _covariance(res, 5, sigma is not None)
    cov = cov * np.outer(scale, scale)
    g, om, a, b, C = unpack(res.x)
    if om < 0:
        om, b = -om, -b
    err = np.sqrt(np.diag(cov))
    A = math.hypot(a, b)
    ja = np.array([a, b]) / A if A > 0 else np.zeros(2)
    A_err = math.sqrt(max(ja @ cov[2:4, 2:4] @ ja, 0.0))
    return DecayFitResult(
        rate=float(g), rate_err=float(err[0]), amplitude=float(A), amplitude_err=float(A_err),
        offset=float(C), offset_err=float(err[4]), covariance=cov, chi2_dof=float(chi2_dof),
        frequency=float(om), frequency_err=float(err[1]), phase=float(math.atan2(-b, a)),
    )


def fit_rate_vs_scattering(x, rate, sigma=None):
    """Weighted straight-line fit rate = slope * x + intercept.

    ``x`` is typically eta * Gamma_sc, so the slope is f(N) and the intercept
    the mixing rate gamma_m. With ``sigma`` the covariance is absolute.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(rate, dtype=float)
    if len(x) < 3:
        raise FitError(f"need at least 3 points, got {len(x)}")
    if np.ptp(x) == 0:
        raise FitError("degenerate abscissa: all x equal")
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    M = np.column_stack((x, np.ones_like(x)))
    F = M.T @ (M * w[:, None])
    cov = np.linalg.inv(F)
    coef = cov @ (M.T @ (w * y))
    r = y - M @ coef
    chi2_dof = float(np.sum(w * r * r) / (len(x) - 2)) if len(x) > 2 else math.nan
    if sigma is None:
        cov = cov * chi2_dof
    return LinearFitResult(
        slope=float(coef[0]), slope_err=float(math.sqrt(cov[0, 0])), intercept=float(coef[1]),
        intercept_err=float(math.sqrt(cov[1, 1])), covariance=cov, chi2_dof=chi2_dof,
    )


def fit_proportional(x, y, sigma=None):
    """Weighted fit y = slope * x through the origin; returns (slope, slope_err, chi2_dof)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 1 or not np.any(x != 0):
        raise FitError("degenerate abscissa")
    w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float) ** 2
    sxx = float(np.sum(w * x * x))
    slope = float(np.sum(w * x * y) / sxx)
    r = y - slope * x
    dof = max(len(x) - 1, 1)
    chi2_dof = float(np.sum(w * r * r) / dof)
    var = 1.0 / sxx if sigma is not None else chi2_dof / sxx
    return slope, math.sqrt(var), chi2_dof
