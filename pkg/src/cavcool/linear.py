"""Linearized Gaussian theory of the coupled cavity field and collective mode.

The Langevin equations of :mod:`cavcool.dynamics` are linearized about the
mean intracavity amplitude. The resulting Ornstein-Uhlenbeck system

    ds = A s dt + B dW,        s = (u, v, a_r, a_i[, f])

gives exact steady-state covariances (continuous Lyapunov equation), decay
rates (eigenvalues of A) and photocurrent spectra (transfer functions). Here
u = X / X0 and v = P / P0 with P0 = M_eff omega_t X0, so that the
symmetrized occupation is (<u^2> + <v^2>)/4 - 1/2; a_r, a_i are the
quadratures of the intracavity fluctuation (mean field taken real); f is an
optional Ornstein-Uhlenbeck laser-frequency noise.

The transmitted photocurrent in fractional units, i = delta I / I, includes
the output-mirror vacuum; with zero-point noise on, an empty cavity gives
exactly the shot-noise level 2 / R_det.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_continuous_lyapunov
from scipy.optimize import minimize_scalar

from .errors import InstabilityError

#: noise input labels, in column order of ``LinearModel.B``
NOISE_INPUTS = ("mechanical", "cavity_in_r", "cavity_in_i", "cavity_out_r", "cavity_out_i", "detector", "laser")


@dataclass
class LinearModel:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    zero_point: float
    detected_rate: float
    omega_t: float
    classical_shot_noise: bool

    @property
    def size(self):
        return self.A.shape[0]

    def is_stable(self):
        return bool(np.max(np.linalg.eigvals(self.A).real) < 0)


def build(
    omega_t,
    kappa,
    delta,
    g0,
    photons,
    mixing_rate=0.0,
    bath_occupation=0.0,
    recoil_heating=0.0,
    include_zero_point=True,
    detection_efficiency=1.0,
    output_fraction=0.5,
    laser_linewidth=0.0,
    laser_correlation_time=1e-7,
):
    """Assemble the linear model from raw rates (all angular units rad/s)."""
    s = 0.5 if include_zero_point else 0.0
    alpha = math.sqrt(photons)
    k_out = output_fraction * kappa
    k_in = kappa - k_out
    has_laser = laser_linewidth > 0
    n = 5 if has_laser else 4

    A = np.zeros((n, n))
    A[0, 1] = omega_t
    A[1, 0] = -omega_t
    A[1, 1] = -mixing_rate
    A[1, 2] = -4 * g0 * alpha
    A[2, 2] = -kappa / 2
    A[2, 3] = -delta
    A[3, 2] = delta
    A[3, 3] = -kappa / 2
    A[3, 0] = -g0 * alpha

    B = np.zeros((n, len(NOISE_INPUTS)))
    B[1, 0] = math.sqrt(4 * mixing_rate * (bath_occupation + s) + 4 * recoil_heating)
    if include_zero_point:
        B[2, 1] = B[3, 2] = math.sqrt(k_in) / 2
        B[2, 3] = B[3, 4] = math.sqrt(k_out) / 2
    if has_laser:
        tau = laser_correlation_time
        A[4, 4] = -1 / tau
        A[3, 4] = alpha
        B[4, 6] = math.sqrt(laser_linewidth) / tau

    rate = detection_efficiency * k_out * photons
    C = np.zeros(n)
    C[2] = 2 / alpha if alpha > 0 else 0.0
    D = np.zeros(len(NOISE_INPUTS))
    if include_zero_point and rate > 0:
        amp = math.sqrt(detection_efficiency * k_out) * alpha / rate
        D[3] = -amp * math.sqrt(detection_efficiency)
        D[5] = -amp * math.sqrt(1 - detection_efficiency)
    return LinearModel(A, B, C, D, s, rate, omega_t, classical_shot_noise=not include_zero_point)


def from_physics(physics, recoil_factor=1.0, include_zero_point=True, laser_linewidth=0.0,
                 laser_correlation_time=1e-7, photon_scale=1.0, mixing_rate=None):
    """Linear model for a :class:`~cavcool.model.PhysicsConfig`.

    ``photon_scale`` multiplies the probe power (intracavity photons, and with
    them the scattering and recoil rates).
    """
    d = physics.derive()
    trap = physics.trap
    return build(
        omega_t=trap.frequency,
        kappa=physics.cavity.linewidth,
        delta=physics.probe.cavity_detuning,
        g0=d.g0,
        photons=d.intracavity_photons * photon_scale,
        mixing_rate=trap.mixing_rate if mixing_rate is None else mixing_rate,
        bath_occupation=trap.bath_occupation,
        recoil_heating=recoil_factor * d.recoil_rate * photon_scale,
        include_zero_point=include_zero_point,
        detection_efficiency=physics.probe.detection_efficiency,
        laser_linewidth=laser_linewidth,
        laser_correlation_time=laser_correlation_time,
    )


def steady_state_covariance(lm):
    """Symmetrized stationary covariance of the state vector."""
    if not lm.is_stable():
        raise InstabilityError("linearized dynamics have no stationary state")
    return solve_continuous_lyapunov(lm.A, -lm.B @ lm.B.T)


def occupations(lm):
    """(energy-based, position-based) phonon occupations in steady state."""
    P = steady_state_covariance(lm)
    n_energy = (P[0, 0] + P[1, 1]) / 4 - lm.zero_point
    n_position = P[0, 0] / 2 - lm.zero_point
    return float(n_energy), float(n_position)


def mechanical_mode(lm):
    """Eigenvalue of the least-damped oscillatory mode (Im > 0)."""
    ev = np.linalg.eigvals(lm.A)
    ev = ev[ev.imag > 0]
    return complex(ev[np.argmax(ev.real)])


def energy_decay_rate(lm):
    """Energy decay rate of the least-damped oscillatory mode, -2 Re(lambda)."""
    return -2 * mechanical_mode(lm).real


def photocurrent_spectrum(lm, freqs):
    """One-sided PSD of the fractional photocurrent (1/Hz) at ``freqs`` (Hz).

    For classical light (zero-point noise off) the Poissonian shot-noise
    level 2 / R_det is added as an uncorrelated white term.
    """
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    eye = np.eye(lm.size)
    out = np.empty(freqs.shape)
    for i, f in enumerate(freqs):
        H = np.linalg.solve(-1j * 2 * np.pi * f * eye - lm.A, lm.B)
        T = lm.C @ H + lm.D
        out[i] = 2 * np.sum(np.abs(T) ** 2)
    if lm.classical_shot_noise and lm.detected_rate > 0:
        out += 2 / lm.detected_rate
    return out


def shot_noise_level(lm):
    return 2 / lm.detected_rate


def laser_noise_fraction(physics, laser_linewidth, laser_correlation_time=1e-7, freq=None):
    """Laser-noise PSD at ``freq`` (default omega_t / 2 pi) in units of shot noise, empty cavity."""
    if freq is None:
        freq = physics.trap.frequency / (2 * np.pi)
    d = physics.derive()
    lm = build(
        omega_t=physics.trap.frequency,
        kappa=physics.cavity.linewidth,
        delta=physics.probe.cavity_detuning,
        g0=0.0,
        photons=d.intracavity_photons,
        include_zero_point=False,
        detection_efficiency=physics.probe.detection_efficiency,
        laser_linewidth=laser_linewidth,
        laser_correlation_time=laser_correlation_time,
    )
    lm.classical_shot_noise = False
    return float(photocurrent_spectrum(lm, [freq])[0] * lm.detected_rate / 2)


def calibrate_laser_linewidth(physics, fraction=0.5, laser_correlation_time=1e-7):
    """Laser linewidth (rad/s) whose intensity noise at omega_t is ``fraction`` of shot noise."""
    per_unit = laser_noise_fraction(physics, 1.0, laser_correlation_time)
    return fraction / per_unit if per_unit > 0 else 0.0


def occupation_floor(physics, recoil_factor=1.0, max_scale=1e3):
    """Minimum position-based occupation over probe power.

    Scans the probe power at fixed detuning until the linearized dynamics
    lose stability (static bistability) and returns ``(n_min, gamma_c)`` at
    the optimum, gamma_c being the weak-coupling cooling rate there.
    """
    d0 = physics.derive()
    if d0.intracavity_photons <= 0 or d0.gamma_c <= 0:
        return math.nan, math.nan

    def n_at(log_scale):
        lm = from_physics(physics, recoil_factor=recoil_factor, photon_scale=math.exp(log_scale))
        if not lm.is_stable():
            return math.inf
        return occupations(lm)[1]

    grid = np.linspace(math.log(1e-3), math.log(max_scale), 241)
    values = np.array([n_at(x) for x in grid])
    i = int(np.argmin(values))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    res = minimize_scalar(n_at, bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
    best_x, best_n = (res.x, res.fun) if res.fun <= values[i] else (grid[i], values[i])
    return float(best_n), float(d0.gamma_c * math.exp(best_x))


def correlation_factor(lm, omega):
    """Complex weight of the noise-motion interference term at ``omega`` (rad/s).

    Splits the photocurrent as i = T_x u + i_0 (i_0: current with the
    oscillator frozen) and the radiation-pressure force into the part driven by
    the same optical noise. The interference contribution to the one-sided
    spectrum is 4 Re[T_x chi_eff Q] with Q the cross-spectrum of force and
    i_0; the returned value is T_x Q. Its phase fixes the shape of the
    correlation dips.
    """
    Ac = lm.A[2:, 2:]
    Bc = lm.B[2:, :]
    inv = np.linalg.inv(-1j * omega * np.eye(lm.size - 2) - Ac)
    T_x = lm.C[2:] @ inv @ lm.A[2:, 0]
    i0 = lm.C[2:] @ inv @ Bc + lm.D
    force = lm.A[1, 2:] @ inv @ Bc
    Q = np.sum(force * np.conj(i0))
    return complex(T_x * Q)
