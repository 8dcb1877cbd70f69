"""Photocurrent spectra: Welch estimation and the sideband spectral model.

All spectra are one-sided PSDs of the fractional photocurrent I / mean(I) - 1
in 1/Hz; shot noise sits at 2 / R_det.

The model, with omega = 2 pi f,

    S(f) = K (2 n + 1) [l(omega - omega_m) + l(omega + omega_m)]
           + W - 2 C Re[P chi(omega)]

    l(x) = gamma / (x^2 + gamma^2 / 4),   chi = omega_m gamma / (omega_m^2 - omega^2 - i gamma omega)
    K    = (2 G X0 / kappa)^2 |L+ - L-|^2

is the folded sideband pair (n at the anti-Stokes, n + 1 at the Stokes
frequency) on a white background W with a correlation term of real amplitude
C that interferes with the mechanical response and can push the background
below W. The peak area K (2 n + 1) equals the transduced variance
c_T (n + 1/2).

The unit phase P of the correlation term is not a fit parameter: its
absorptive part has the shape of the peak itself, so a free phase would be
degenerate with n. By default it is taken from the linearized dynamics
(:func:`cavcool.linear.correlation_factor`); ``phase="sideband"`` uses the
phase of L+ - L- instead.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import signal
from scipy.optimize import brentq, least_squares

from .. import linear
from ..errors import ConfigurationError, FitError

PARAM_NAMES = {
    "occupation": ("occupation", "gamma_tot", "omega_m", "white_level", "correlation"),
    "bath": ("bath_occupation", "mixing_rate", "omega_m", "white_level", "correlation"),
}


@dataclass
class Spectrum:
    freq: np.ndarray
    psd: np.ndarray
    n_segments: int
    window: str
    resolution_bandwidth: float
    enbw: float
    dof: float
    segment_length: int
    sample_rate: float
    parseval_ok: bool | None = None

    def as_record(self):
        return {
            "freq": self.freq.tolist(), "psd": self.psd.tolist(), "n_segments": self.n_segments,
            "window": self.window, "resolution_bandwidth": self.resolution_bandwidth, "enbw": self.enbw,
            "dof": self.dof, "segment_length": self.segment_length, "sample_rate": self.sample_rate,
        }


def _fractional(trace):
    if hasattr(trace, "fractional"):
        return trace.fractional(), trace.sample_rate
    return np.asarray(trace, dtype=float), None


def _welch_dof(win, step, n_seg):
    """Equivalent degrees of freedom of a Welch average of ``n_seg`` overlapping segments."""
    if n_seg <= 1:
        return 2.0
    w2 = float(np.sum(win**2))
    corr = 0.0
    m = 1
    while m < n_seg and m * step < len(win):
        c = float(np.sum(win[m * step:] * win[: len(win) - m * step])) / w2
        corr += (1 - m / n_seg) * c * c
        m += 1
    return 2.0 * n_seg / (1 + 2 * corr)


def welch_psd(traces, segment_length, window="hann", overlap=0.5, sample_rate=None):
    """Average one-sided fractional PSD over segments and traces.

    Parameters
    ----------
    traces : PhotocurrentTrace, array_like or sequence of these
        Photocurrent traces (converted to I / mean(I) - 1) or arrays already in
        fractional units (``sample_rate`` then required).
    segment_length : float
        Segment duration in seconds.
    window : str
        Any :func:`scipy.signal.get_window` name; ``"boxcar"`` for Parseval checks.
    overlap : float
        Fractional overlap of consecutive segments.
    """
    if hasattr(traces, "counts") or (isinstance(traces, np.ndarray) and traces.ndim == 1):
        traces = [traces]
    traces = list(traces)
    if not traces:
        raise ConfigurationError("no traces given", "traces")
    data = []
    fs = sample_rate
    for tr in traces:
        x, rate = _fractional(tr)
        if rate is not None:
            if fs is not None and not math.isclose(rate, fs, rel_tol=1e-9):
                raise ConfigurationError("traces have different sample rates", "traces")
            fs = rate
        data.append(x)
    if fs is None:
        raise ConfigurationError("sample_rate is required for bare arrays", "sample_rate")
    nperseg = int(round(segment_length * fs))
    if nperseg < 2:
        raise ConfigurationError("segment shorter than two samples", "segment_length")
    if not 0 <= overlap < 1:
        raise ConfigurationError("must lie in [0, 1)", "overlap")
    noverlap = int(round(overlap * nperseg))
    step = nperseg - noverlap
    win = signal.get_window(window, nperseg)

    total = None
    n_seg_total = 0
    dof = 0.0
    for x in data:
        if len(x) < nperseg:
            raise ConfigurationError("segment longer than trace", "segment_length")
        f, p = signal.welch(x, fs=fs, window=win, nperseg=nperseg, noverlap=noverlap, detrend="constant",
                            return_onesided=True, scaling="density")
        k = (len(x) - noverlap) // step
        total = p * k if total is None else total + p * k
        n_seg_total += k
        dof += _welch_dof(win, step, k)
    psd = total / n_seg_total
    enbw = fs * float(np.sum(win**2)) / float(np.sum(win)) ** 2
    return Spectrum(
        freq=f, psd=psd, n_segments=n_seg_total, window=str(window), resolution_bandwidth=fs / nperseg,
        enbw=enbw, dof=dof, segment_length=nperseg, sample_rate=fs,
    )


@dataclass(frozen=True)
class SpectralConstants:
    """Fixed physical inputs of the spectral model.

    ``transduction`` is K (dimensionless), ``correlation_phase`` is the unit
    complex weight P of the correlation term, ``heating_rate`` is
    A- + A_rec (quanta/s) for the bath parametrization.
    """

    transduction: float
    correlation_phase: complex
    omega_t: float
    gamma_c: float = 0.0
    heating_rate: float = 0.0
    shot_level: float = 0.0

    @classmethod
    def from_physics(cls, physics, recoil_factor=1.0, phase="physical", laser_linewidth=0.0):
        d = physics.derive()
        sb = d.sidebands
        kappa = physics.cavity.linewidth
        K = (2 * d.g0 / kappa) ** 2 * abs(sb.L_plus - sb.L_minus) ** 2
        rate = physics.probe.detection_efficiency * d.transmitted_rate
        if phase == "physical":
            lm = linear.from_physics(physics, recoil_factor=recoil_factor, laser_linewidth=laser_linewidth)
            z = linear.correlation_factor(lm, physics.trap.frequency)
        elif phase == "sideband":
            z = complex(sb.L_plus - sb.L_minus)
        else:
            raise ConfigurationError(f"unknown phase {phase!r}", "phase")
        return cls(
            transduction=K,
            correlation_phase=z / abs(z) if abs(z) > 0 else 1.0 + 0j,
            omega_t=physics.trap.frequency,
            gamma_c=d.gamma_c,
            heating_rate=d.stokes_rate + recoil_factor * d.recoil_rate,
            shot_level=2.0 / rate if rate > 0 else 0.0,
        )


def _occupation_params(params, constants, mode):
    if mode == "occupation":
        return params[0], params[1]
    nb, gm = params[0], params[1]
    gtot = gm + constants.gamma_c
    return (gm * nb + constants.heating_rate) / gtot, gtot


def _pieces(freq, params, constants):
    n, gamma, om_m, W, C = params
    w = 2 * np.pi * np.asarray(freq, dtype=float)
    xm, xp = w - om_m, w + om_m
    dm, dp = xm**2 + gamma**2 / 4, xp**2 + gamma**2 / 4
    lor = gamma / dm + gamma / dp
    den = om_m**2 - w**2 - 1j * gamma * w
    chi = om_m * gamma / den
    return w, xm, xp, dm, dp, lor, den, chi


def spectral_model(freq, params, constants, mode="occupation", include_correlation=True):
    """Model PSD at ``freq`` (Hz) for ``params`` in the order of ``PARAM_NAMES[mode]``."""
    params = np.asarray(params, dtype=float)
    n, gamma = _occupation_params(params, constants, mode)
    full = (n, gamma, params[2], params[3], params[4])
    _, _, _, _, _, lor, _, chi = _pieces(freq, full, constants)
    S = constants.transduction * (2 * n + 1) * lor + params[3]
    if include_correlation:
        S = S - 2 * params[4] * np.real(constants.correlation_phase * chi)
    return S


def background_model(freq, params, constants, mode="occupation", include_correlation=True):
    """White level plus correlation term: the model without the mechanical peak."""
    params = np.asarray(params, dtype=float)
    n, gamma = _occupation_params(params, constants, mode)
    *_, chi = _pieces(freq, (n, gamma, params[2], params[3], params[4]), constants)
    S = np.full(np.shape(freq), params[3], dtype=float)
    if include_correlation:
        S = S - 2 * params[4] * np.real(constants.correlation_phase * chi)
    return S


def spectral_jacobian(freq, params, constants, mode="occupation", include_correlation=True):
    """Analytic derivative of :func:`spectral_model` w.r.t. ``params``; shape (len(freq), 5)."""
    params = np.asarray(params, dtype=float)
    n, gamma = _occupation_params(params, constants, mode)
    om_m, W, C = params[2], params[3], params[4]
    w, xm, xp, dm, dp, lor, den, chi = _pieces(freq, (n, gamma, om_m, W, C), constants)
    K = constants.transduction
    Ld = constants.correlation_phase

    dlor_dg = (xm**2 - gamma**2 / 4) / dm**2 + (xp**2 - gamma**2 / 4) / dp**2
    dlor_dw = 2 * gamma * xm / dm**2 - 2 * gamma * xp / dp**2
    dchi_dg = om_m / den + 1j * om_m * gamma * w / den**2
    dchi_dw = gamma / den - 2 * om_m**2 * gamma / den**2

    dS_dn = 2 * K * lor
    dS_dg = K * (2 * n + 1) * dlor_dg
    dS_dw = K * (2 * n + 1) * dlor_dw
    dS_dW = np.ones_like(w)
    dS_dC = np.zeros_like(w)
    if include_correlation:
        dS_dg = dS_dg - 2 * C * np.real(Ld * dchi_dg)
        dS_dw = dS_dw - 2 * C * np.real(Ld * dchi_dw)
        dS_dC = -2 * np.real(Ld * chi)

    if mode == "occupation":
        cols = (dS_dn, dS_dg, dS_dw, dS_dW, dS_dC)
    else:
        nb, gm = params[0], params[1]
        gtot = gm + constants.gamma_c
        dn_dnb = gm / gtot
        dn_dgm = (nb - n) / gtot
        cols = (dS_dn * dn_dnb, dS_dn * dn_dgm + dS_dg, dS_dw, dS_dW, dS_dC)
    return np.column_stack(cols)


@dataclass
class SpectrumFitResult:
    mode: str
    param_names: tuple
    params: np.ndarray
    errors: np.ndarray
    covariance: np.ndarray
    chi2_dof: float
    occupation: float
    occupation_err: float
    occupation_ci: tuple
    occupation_area: float
    gamma_tot: float
    gamma_tot_err: float
    mixing_rate: float
    bath_occupation: float | None
    mechanical_frequency: float
    white_level: float
    correlation_amplitude: float
    peak_area: float
    at_bounds: list = field(default_factory=list)
    band: tuple = (0.0, 0.0)

    def as_record(self):
        return {
            "mode": self.mode,
            "params": dict(zip(self.param_names, map(float, self.params))),
            "errors": dict(zip(self.param_names, map(float, self.errors))),
            "covariance": np.asarray(self.covariance).tolist(),
            "chi2_dof": self.chi2_dof,
            "occupation": self.occupation,
            "occupation_err": self.occupation_err,
            "occupation_ci": list(self.occupation_ci),
            "occupation_area": self.occupation_area,
            "gamma_tot": self.gamma_tot,
            "gamma_tot_err": self.gamma_tot_err,
            "mixing_rate": self.mixing_rate,
            "bath_occupation": self.bath_occupation,
            "mechanical_frequency": self.mechanical_frequency,
            "white_level": self.white_level,
            "correlation_amplitude": self.correlation_amplitude,
            "peak_area": self.peak_area,
            "at_bounds": list(self.at_bounds),
            "band": list(self.band),
        }


def _initial_guess(f, S, constants, mode):
    w = 2 * np.pi * f
    W0 = float(np.median(S))
    near = np.abs(w - constants.omega_t) < 0.5 * constants.omega_t
    k = int(np.argmax(np.where(near, S, -np.inf)))
    om0 = float(w[k])
    height = max(float(S[k]) - W0, 1e-3 * W0)
    above = near & (S - W0 > height / 2)
    gamma0 = float(max(np.ptp(w[above]) if above.sum() > 1 else 0.0, 2 * np.pi * (f[1] - f[0]) * 2))
    K = constants.transduction
    n0 = max((height * gamma0 / 4 / K - 1) / 2, 0.05) if K > 0 else 1.0
    if mode == "occupation":
        return np.array([n0, gamma0, om0, W0, 0.0])
    gm0 = max(gamma0 - constants.gamma_c, 0.1 * gamma0)
    nb0 = max((n0 * (gm0 + constants.gamma_c) - constants.heating_rate) / gm0, 0.05)
    return np.array([nb0, gm0, om0, W0, 0.0])


def _bounds(mode, constants):
    om = constants.omega_t
    lo = np.array([0.0, 1e2, 0.5 * om, 0.0, -np.inf])
    hi = np.array([1e7, 1e9, 1.5 * om, np.inf, np.inf])
    return lo, hi


def fit_spectrum(spectrum, constants, mode="occupation", band=None, include_correlation=True, p0=None,
                 profile=True):
    """Bounded weighted least-squares fit of :func:`spectral_model`.

    Weights are S_model / sqrt(dof) per bin: a first pass uses the data,
    the second the first-pass model. The occupation interval is the profile
    likelihood range with chi^2 - chi^2_min <= 1. ``occupation_area`` is the
    occupation from the background-subtracted peak area in the fit band.

    Raises
    ------
    FitError
        Non-convergence.
    """
    if mode not in PARAM_NAMES:
        raise ConfigurationError(f"unknown mode {mode!r}", "mode")
    f, S = np.asarray(spectrum.freq), np.asarray(spectrum.psd)
    sel = f > 0
    if band is not None:
        sel &= (f >= band[0]) & (f <= band[1])
    f, S = f[sel], S[sel]
    if len(f) < 8:
        raise FitError("too few spectral points in the fit band")
    dof = max(spectrum.dof, 1.0)
    lo, hi = _bounds(mode, constants)
    x0 = _initial_guess(f, S, constants, mode) if p0 is None else np.asarray(p0, dtype=float)
    x0 = np.clip(x0, lo, hi)
    free = np.ones(5, dtype=bool)
    if not include_correlation:
        free[4] = False
        x0[4] = 0.0
    scale = np.maximum(np.abs(x0), 1e-30)
    scale[4] = max(abs(x0[3]), 1e-30)
    scale[0] = max(scale[0], 1.0)

    def run(sigma, start, fixed_first=None):
        mask = free.copy()
        if fixed_first is not None:
            mask[0] = False
        base = start.copy()
        if fixed_first is not None:
            base[0] = fixed_first

        def full(z):
            p = base.copy()
            p[mask] = z * scale[mask]
            return p

        def resid(z):
            return (spectral_model(f, full(z), constants, mode, include_correlation) - S) / sigma

        def jac(z):
            J = spectral_jacobian(f, full(z), constants, mode, include_correlation)
            return J[:, mask] * scale[mask] / sigma[:, None]

        z0 = np.clip(base[mask], lo[mask], hi[mask]) / scale[mask]
        res = least_squares(resid, z0, jac=jac, bounds=(lo[mask] / scale[mask], hi[mask] / scale[mask]),
                            method="trf", x_scale="jac", xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=5000)
        return res, full(res.x), mask

    sigma = np.maximum(S, 1e-300) / math.sqrt(dof)
    res, p1, _ = run(sigma, x0)
    sigma = np.maximum(spectral_model(f, p1, constants, mode, include_correlation), 1e-300) / math.sqrt(dof)
    res, p, mask = run(sigma, p1)
    if not res.success or not np.all(np.isfinite(p)):
        raise FitError(f"spectrum fit did not converge: {res.message}", residual=float(np.sum(res.fun**2)))
    chi2_min = float(np.sum(res.fun**2))
    n_free = int(mask.sum())
    J = spectral_jacobian(f, p, constants, mode, include_correlation)[:, mask] / sigma[:, None]
    cov = np.zeros((5, 5))
    try:
        cov_free = np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        cov_free = np.full((n_free, n_free), np.inf)
    idx = np.nonzero(mask)[0]
    cov[np.ix_(idx, idx)] = cov_free
    errors = np.sqrt(np.abs(np.diag(cov)))
    names = PARAM_NAMES[mode]
    tol = 1e-6
    at_bounds = [names[i] for i in idx if (np.isfinite(lo[i]) and abs(p[i] - lo[i]) <= tol * max(abs(lo[i]), scale[i]))
                 or (np.isfinite(hi[i]) and abs(p[i] - hi[i]) <= tol * max(abs(hi[i]), scale[i]))]

    n, gamma = _occupation_params(p, constants, mode)
    if mode == "occupation":
        n_err = errors[0]
        g_err = errors[1]
        gm = gamma - constants.gamma_c
        nb = None
    else:
        gtot = p[1] + constants.gamma_c
        grad = np.array([p[1] / gtot, (p[0] - n) / gtot])
        n_err = float(math.sqrt(max(grad @ cov[:2, :2] @ grad, 0.0)))
        g_err = errors[1]
        gm = p[1]
        nb = float(p[0])

    ci = (math.nan, math.nan)
    if profile and mode == "occupation" and np.isfinite(n_err):
        ci = _profile_interval(lambda val: float(np.sum(run(sigma, p, fixed_first=val)[0].fun ** 2)),
                               p[0], max(n_err, 1e-3 * max(p[0], 1.0)), chi2_min, lo[0], hi[0])
    elif mode == "bath":
        ci = (max(n - n_err, 0.0), n + n_err)

    bg = background_model(f, p, constants, mode, include_correlation)
    df = f[1] - f[0]
    peak_area = float(np.sum(S - bg) * df)
    _, _, _, _, _, lor, _, _ = _pieces(f, (n, gamma, p[2], p[3], p[4]), constants)
    unit_area = float(np.sum(constants.transduction * lor) * df)
    n_area = (peak_area / unit_area - 1) / 2 if unit_area > 0 else math.nan

    return SpectrumFitResult(
        mode=mode, param_names=names, params=p, errors=errors, covariance=cov,
        chi2_dof=chi2_min / max(len(f) - n_free, 1), occupation=float(n), occupation_err=float(n_err),
        occupation_ci=tuple(float(c) for c in ci), occupation_area=float(n_area), gamma_tot=float(gamma),
        gamma_tot_err=float(g_err), mixing_rate=float(gm), bath_occupation=nb, mechanical_frequency=float(p[2]),
        white_level=float(p[3]), correlation_amplitude=float(p[4]), peak_area=peak_area, at_bounds=at_bounds,
        band=(float(f[0]), float(f[-1])),
    )


def _profile_interval(chi2_at, best, step, chi2_min, lower_bound, upper_bound, target=1.0):
    def excess(v):
        return chi2_at(v) - chi2_min - target

    def search(direction):
        prev = best
        h = step
        for _ in range(60):
            v = best + direction * h
            if direction < 0 and v <= lower_bound:
                v = lower_bound
                return brentq(excess, v, prev, xtol=1e-6 * max(step, 1e-12)) if excess(v) > 0 else v
            if direction > 0 and v >= upper_bound:
                return upper_bound
            if excess(v) > 0:
                a, b = (v, prev) if direction < 0 else (prev, v)
                return brentq(excess, a, b, xtol=1e-6 * max(step, 1e-12))
            prev = v
            h *= 1.6
        warnings.warn("profile likelihood did not close", stacklevel=3)
        return prev

    return search(-1), search(+1)


def peak_area(spectrum, band, background):
    """Integral of (S - background) over ``band`` (Hz)."""
    f, S = spectrum.freq, spectrum.psd
    sel = (f >= band[0]) & (f <= band[1])
    return float(np.sum(S[sel] - background) * (f[1] - f[0]))
