"""Time-domain evolution of the collective mode.

Two levels of description:

* :func:`integrate_rate_equation` -- the mean occupation obeys
  dn/dt = -(gamma_c + gamma_m) n + (A- + A_rec + gamma_m n_bath), solved in
  closed form.
* :func:`simulate_langevin` -- semiclassical stochastic simulation of the
  oscillator (X, P) coupled to a c-number cavity amplitude alpha through
  H = hbar G X a^dagger a. Quantum sideband asymmetry is recovered from
  symmetrized (Wigner) vacuum noise: with ``include_zero_point`` on, the
  energy of (X, P) in units of hbar omega_t equals n + 1/2.

Internally the oscillator is integrated in units u = X / X0,
v = P / P0 with P0 = M_eff omega_t X0 = hbar / (2 X0); output is in SI.

The photocount record of the transmitted light is split into a smooth
``rate`` (detection_efficiency * kappa/2 * (|alpha|^2 - 1/2)) and, with
zero-point noise on, ``vacuum_counts``: the beat of the mean field with the
output-mirror vacuum. Their sum is a Gaussian photocount record with exact
shot-noise statistics and the correct correlation between detected noise and
the radiation-pressure force. See :mod:`cavcool.photodetect`.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import model
from .errors import ConfigurationError, InstabilityError
from .seeding import generator

SCHEMES = ("semi_implicit", "euler_maruyama")
_NOISE_COLUMNS = 9
_CHUNK = 2048


@dataclass(frozen=True)
class SimConfig:
    dt: float = 5e-9
    duration: float = 20e-6
    seed: int = 0
    scheme: str = "semi_implicit"
    record_stride: int = 1
    initial_occupation: float | None = None
    """Thermal occupation of the initial state; defaults to the bath occupation."""
    sudden_turn_on: bool = False
    """Start displaced from the radiation-pressure equilibrium (probe switched on at t = 0)."""
    linearization_cap: float = 1.0
    """Cavity shift |G X| is clipped at this multiple of kappa."""

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("must be positive", "sim.dt")
        if not self.duration >= self.dt:
            raise ConfigurationError("must be >= dt", "sim.duration")
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}", "sim.scheme")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ConfigurationError("must be a positive integer", "sim.record_stride")

    @property
    def n_steps(self):
        return int(round(self.duration / self.dt))


@dataclass(frozen=True)
class NoiseConfig:
    mixing_rate: float | None = None
    bath_occupation: float | None = None
    recoil_factor: float = 1.0
    laser_linewidth: float = 0.0
    laser_correlation_time: float = 1e-7
    include_zero_point: bool = True

    def __post_init__(self):
        for name in ("mixing_rate", "bath_occupation"):
            value = getattr(self, name)
            if value is not None and not value >= 0:
                raise ConfigurationError("must be >= 0", f"noise.{name}")
        for name in ("recoil_factor", "laser_linewidth"):
            if not getattr(self, name) >= 0:
                raise ConfigurationError("must be >= 0", f"noise.{name}")
        if not self.laser_correlation_time > 0:
            raise ConfigurationError("must be positive", "noise.laser_correlation_time")

    def bath(self, trap):
        gm = trap.mixing_rate if self.mixing_rate is None else self.mixing_rate
        nb = trap.bath_occupation if self.bath_occupation is None else self.bath_occupation
        return gm, nb

    @property
    def zero_point(self):
        return 0.5 if self.include_zero_point else 0.0


@dataclass(frozen=True)
class OscillatorState:
    X: float
    P: float

    def __post_init__(self):
        if not (np.isfinite(self.X) and np.isfinite(self.P)):
            raise ConfigurationError("state must be finite", "OscillatorState")


@dataclass(frozen=True)
class CavityState:
    alpha: complex

    def __post_init__(self):
        if not np.isfinite(self.alpha):
            raise ConfigurationError("amplitude must be finite", "CavityState")


@dataclass(frozen=True)
class Drive:
    """Coherent input amplitude epsilon (sqrt(photons)/s) of the probe.

    Use :meth:`calibrated` to choose epsilon so that the empty-cavity steady
    state holds the requested photon number.
    """

    epsilon: complex
    photons: float

    @classmethod
    def calibrated(cls, photons, delta, kappa):
        return cls(epsilon=complex(math.sqrt(photons) * (kappa / 2 - 1j * delta)), photons=photons)


@dataclass(frozen=True)
class Segment:
    """Piece of a run with constant probe detuning, mixing rate and drive.

    ``drive_scale`` multiplies the input amplitude (power scales with its
    square). The static radiation-pressure force of each segment is absorbed
    into the trap minimum, so only fluctuations about the segment's mean
    photon number push the oscillator.
    """

    start: float
    cavity_detuning: float
    mixing_rate: float
    drive_scale: float = 1.0


@dataclass
class Trajectory:
    """Uniformly sampled record of one stochastic run.

    ``rate`` is the mean detected photon rate over each sample interval;
    ``vacuum_counts`` (zero-point runs only) is the output-vacuum photocount
    contribution accumulated over the same interval.
    """

    t: np.ndarray
    X: np.ndarray
    P: np.ndarray
    photons: np.ndarray
    rate: np.ndarray
    vacuum_counts: np.ndarray | None
    sample_period: float
    seed: int
    X0: float
    P0: float
    omega_t: float
    zero_point: float
    capped: bool = False
    unstable: bool = False
    truncated: bool = False
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    @property
    def columns(self):
        cols = {"t": self.t, "X": self.X, "P": self.P, "photons": self.photons, "rate": self.rate}
        if self.vacuum_counts is not None:
            cols["vacuum_counts"] = self.vacuum_counts
        return cols

    def symmetrized_occupation(self):
        """Instantaneous oscillator energy / (hbar omega_t) = n_sym."""
        return ((self.X / self.X0) ** 2 + (self.P / self.P0) ** 2) / 4

    def occupation(self):
        """n_sym minus the zero-point offset."""
        return self.symmetrized_occupation() - self.zero_point

    def counts(self):
        """Total photocounts per sample interval (rate term plus vacuum term)."""
        c = self.rate * self.sample_period
        if self.vacuum_counts is not None:
            c = c + self.vacuum_counts
        return c


def physics_hash(physics):
    """Stable short hash of a physics configuration."""
    d = physics.derive().as_dict()
    payload = {
        "atom": vars(physics.atom),
        "cavity": vars(physics.cavity),
        "trap": vars(physics.trap),
        "ensemble": {
            "atom_number": physics.ensemble.atom_number,
            "statistical_zeta": physics.ensemble.statistical_zeta,
            "positions": None if physics.ensemble.positions is None else physics.ensemble.positions.tolist(),
        },
        "probe": vars(physics.probe),
        "g0": d["g0"],
    }
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def transduction_coefficient(derived, cavity, probe, omega_t=None):
    """Fractional photocurrent variance per phonon, 8 (G X0 / kappa)^2 |L+ - L-|^2."""
    if omega_t is None:
        raise TypeError("omega_t is required")
    sb = model.sideband_lorentzians(probe.cavity_detuning, omega_t, cavity.linewidth)
    return 8 * (derived.G * derived.X0 / cavity.linewidth) ** 2 * abs(sb.L_plus - sb.L_minus) ** 2


@dataclass
class RateSolution:
    t: np.ndarray
    n: np.ndarray
    n_inf: float
    rate: float
    unstable: bool


def integrate_rate_equation(n_init, derived, trap, t, recoil_factor=1.0, cap=1e6):
    """Closed-form solution of the occupation rate equation on the grid ``t``.

    For gamma_c + gamma_m <= 0 the (diverging) solution is returned with
    ``unstable=True`` and set to NaN where it exceeds ``cap``.
    """
    if n_init < 0:
        raise ValueError("initial occupation must be >= 0")
    t = np.asarray(t, dtype=float)
    gamma = derived.gamma_c + trap.mixing_rate
    heating = derived.stokes_rate + recoil_factor * derived.recoil_rate + trap.mixing_rate * trap.bath_occupation
    if gamma == 0:
        n = n_init + heating * t
        n_inf = math.inf
    else:
        n_inf = heating / gamma
        n = n_inf + (n_init - n_inf) * np.exp(-gamma * t)
    unstable = gamma <= 0
    if unstable:
        n = np.where(n > cap, np.nan, n)
        n_inf = math.inf
    return RateSolution(t=t, n=n, n_inf=n_inf, rate=gamma, unstable=unstable)


def _thermal_start(rng, n, s, count=1):
    sigma = math.sqrt(2 * (n + s))
    return rng.normal(0.0, sigma, size=count), rng.normal(0.0, sigma, size=count)


def _simulate_batch(config, physics, noise, seeds, segments, drive, atom_free=False):
    d = physics.derive()
    trap, cavity, probe = physics.trap, physics.cavity, physics.probe
    omega = trap.frequency
    kappa = cavity.linewidth
    if config.dt * omega >= 0.1:
        raise ConfigurationError(f"dt * omega_t = {config.dt * omega:.3g} must be < 0.1", "sim.dt")

    B = len(seeds)
    dt = config.dt
    n_steps = config.n_steps
    stride = int(config.record_stride)
    n_rec = n_steps // stride + 1
    s = noise.zero_point
    zp = noise.include_zero_point
    g0 = 0.0 if atom_free else d.g0
    eta_d = probe.detection_efficiency
    k_out = kappa / 2
    k_in = kappa - k_out
    cap = config.linearization_cap * kappa
    _, nb = noise.bath(trap)
    recoil = noise.recoil_factor * d.recoil_rate
    if drive is None:
        drive = Drive.calibrated(d.intracavity_photons, segments[0].cavity_detuning, kappa)
    eps0 = drive.epsilon
    tau = noise.laser_correlation_time
    f_decay = math.exp(-dt / tau)
    f_kick = math.sqrt(noise.laser_linewidth / (2 * tau) * (1 - f_decay**2))
    q = 0.5
    var0 = q * dt
    var1 = q * (1 - math.exp(-kappa * dt)) / kappa
    X0 = d.X0
    P0 = model.HBAR / (2 * X0)

    rngs = [generator(sd) for sd in seeds]

    u = np.empty(B)
    v = np.empty(B)
    a = np.empty(B, dtype=complex)
    n_init = nb if config.initial_occupation is None else config.initial_occupation
    delta0 = segments[0].cavity_detuning
    eps = eps0 * segments[0].drive_scale
    a_ss = eps / (kappa / 2 - 1j * delta0)
    f = np.zeros(B)
    for i, rng in enumerate(rngs):
        ui, vi = _thermal_start(rng, n_init, s)
        u[i], v[i] = ui[0], vi[0]
        vac = rng.normal(0.0, math.sqrt(s / 2), size=2) if zp else np.zeros(2)
        a[i] = a_ss + vac[0] + 1j * vac[1]
        if noise.laser_linewidth > 0:
            f[i] = rng.normal(0.0, math.sqrt(noise.laser_linewidth / (2 * tau)))
    if config.sudden_turn_on:
        u = u + 2 * g0 * abs(a_ss) ** 2 / omega

    rec_u = np.empty((n_rec, B))
    rec_v = np.empty((n_rec, B))
    rec_n = np.empty((n_rec, B))
    rec_rate = np.zeros((n_rec, B))
    rec_vac = np.zeros((n_rec, B)) if zp else None
    rec_u[0], rec_v[0], rec_n[0] = u, v, np.abs(a) ** 2
    rec_rate[0] = eta_d * k_out * (np.abs(a) ** 2 - s)
    acc_rate = np.zeros(B)
    acc_vac = np.zeros(B)

    capped = np.zeros(B, dtype=bool)
    dead_at = np.full(B, -1)
    seg_starts = [int(round(sg.start / dt)) for sg in segments]
    seg_idx = 0
    half_c, half_s = math.cos(omega * dt / 2), math.sin(omega * dt / 2)
    semi = config.scheme == "semi_implicit"
    sq_det = math.sqrt(eta_d * k_out)

    noise_buf = None
    for step in range(n_steps):
        if seg_idx + 1 < len(segments) and step >= seg_starts[seg_idx + 1]:
            seg_idx += 1
        if step == 0 or seg_idx != seg_current:
            seg_current = seg_idx
            sg = segments[seg_idx]
            delta, gm = sg.cavity_detuning, sg.mixing_rate
            eps = eps0 * sg.drive_scale
            n_ref = abs(eps) ** 2 / ((kappa / 2) ** 2 + delta**2) + s
            d_v = 4 * gm * (nb + s) + 4 * recoil
            if gm > 0:
                v_decay = math.exp(-gm * dt)
                v_kick = math.sqrt(d_v * (1 - v_decay**2) / (2 * gm))
            else:
                v_decay = 1.0
                v_kick = math.sqrt(d_v * dt)

        j = step % _CHUNK
        if j == 0:
            m = min(_CHUNK, n_steps - step)
            noise_buf = np.stack([rng.standard_normal((m, _NOISE_COLUMNS)) for rng in rngs], axis=2)
        z = noise_buf[j]

        shift = g0 * u
        over = np.abs(shift) > cap
        if over.any():
            capped |= over
            shift = np.clip(shift, -cap, cap)
        lam = 1j * (delta + f - shift) - kappa / 2
        p_old = a.real**2 + a.imag**2

        if semi:
            e = np.exp(lam * dt)
            phi = (e - 1) / lam
            a_new = a * e + eps * phi
            if zp:
                z1 = (z[0] + 1j * z[1]) * math.sqrt(0.5)
                z2 = (z[2] + 1j * z[3]) * math.sqrt(0.5)
                z3 = (z[4] + 1j * z[5]) * math.sqrt(0.5)
                I0 = math.sqrt(var0) * z1
                cov = q * phi
                resid = np.sqrt(np.maximum(var1 - np.abs(cov) ** 2 / var0, 0.0))
                I1 = (cov / var0) * I0 + resid * z2
                a_new = a_new + math.sqrt(k_out) * I1 + math.sqrt(k_in) * math.sqrt(var1) * z3
        else:
            a_new = a + (lam * a + eps) * dt
            if zp:
                z1 = (z[0] + 1j * z[1]) * math.sqrt(0.5)
                z3 = (z[4] + 1j * z[5]) * math.sqrt(0.5)
                I0 = math.sqrt(var0) * z1
                a_new = a_new + math.sqrt(k_out) * I0 + math.sqrt(k_in * var0) * z3

        if zp:
            vac_inc = -2 * sq_det * (
                math.sqrt(eta_d) * (a.real * I0.real + a.imag * I0.imag)
                + math.sqrt((1 - eta_d) * dt / 4) * np.sqrt(p_old) * z[6]
            )
            acc_vac += vac_inc

        p_new = a_new.real**2 + a_new.imag**2
        if semi:
            p_mean = 0.5 * (p_old + p_new)
        else:
            p_mean = p_old
        acc_rate += eta_d * k_out * (p_mean - s) * dt
        force = -2 * g0 * (p_mean - n_ref)

        if semi:
            v = v + 0.5 * dt * force
            u, v = half_c * u + half_s * v, -half_s * u + half_c * v
            v = v * v_decay + v_kick * z[7]
            u, v = half_c * u + half_s * v, -half_s * u + half_c * v
            v = v + 0.5 * dt * force
        else:
            u, v = u + omega * v * dt, v + (-omega * u - gm * v + force) * dt + math.sqrt(d_v * dt) * z[7]

        if noise.laser_linewidth > 0:
            f = f * f_decay + f_kick * z[8]
        a = a_new

        if (step + 1) % stride == 0:
            r = (step + 1) // stride
            rec_u[r], rec_v[r], rec_n[r] = u, v, p_new
            rec_rate[r] = acc_rate / (stride * dt)
            acc_rate[:] = 0
            if zp:
                rec_vac[r] = acc_vac
                acc_vac[:] = 0
            bad = ~(np.isfinite(u) & np.isfinite(v) & np.isfinite(a.real) & np.isfinite(a.imag))
            if bad.any():
                newly = bad & (dead_at < 0)
                dead_at[newly] = r
                u[bad] = 0.0
                v[bad] = 0.0
                a[bad] = a_ss
                f[bad] = 0.0

    t = np.arange(n_rec) * stride * dt
    # a heating phase followed by cooling is intended; only the final segment must be damped
    unstable_cfg = False
    if not atom_free:
        sg = segments[-1]
        dd = physics.replace(probe=probe.with_detuning(sg.cavity_detuning)).derive()
        unstable_cfg = dd.gamma_c * sg.drive_scale**2 + sg.mixing_rate <= 0

    meta = {
        "scheme": config.scheme,
        "dt": dt,
        "physics_hash": physics_hash(physics),
        "detection_efficiency": eta_d,
        "mean_rate": eta_d * k_out * abs(eps) ** 2 / ((kappa / 2) ** 2 + segments[-1].cavity_detuning ** 2),
        "atom_free": bool(atom_free),
        "segments": [dict(vars(sg)) for sg in segments],
    }
    out = []
    for i, sd in enumerate(seeds):
        end = dead_at[i] if dead_at[i] >= 0 else n_rec
        out.append(
            Trajectory(
                t=t[:end].copy(),
                X=rec_u[:end, i] * X0,
                P=rec_v[:end, i] * P0,
                photons=rec_n[:end, i].copy(),
                rate=rec_rate[:end, i].copy(),
                vacuum_counts=None if rec_vac is None else rec_vac[:end, i].copy(),
                sample_period=stride * dt,
                seed=int(sd),
                X0=X0,
                P0=P0,
                omega_t=omega,
                zero_point=s,
                capped=bool(capped[i]),
                unstable=bool(unstable_cfg or dead_at[i] >= 0),
                truncated=bool(dead_at[i] >= 0),
                meta=dict(meta),
            )
        )
    return out


def _segments_for(physics, noise, schedule=None):
    gm, _ = noise.bath(physics.trap)
    if schedule is None:
        return [Segment(0.0, physics.probe.cavity_detuning, gm)]
    return list(schedule)


def simulate_ensemble(config, physics, noise=None, seeds=None, drive=None, schedule=None,
                      batch_size=256, workers=1, atom_free=False):
    """Run one trajectory per seed.

    Traces are integrated in vectorized batches; each trace draws its noise
    from its own generator, so results are keyed by seed. ``workers`` > 1
    runs batches on a thread pool; output order follows ``seeds``.
    ``atom_free`` removes the optomechanical coupling (background runs).
    """
    noise = NoiseConfig() if noise is None else noise
    seeds = [config.seed] if seeds is None else list(seeds)
    if not seeds:
        return []
    segments = _segments_for(physics, noise, schedule)
    batches = [seeds[i:i + batch_size] for i in range(0, len(seeds), batch_size)]

    def run(batch):
        return _simulate_batch(config, physics, noise, batch, segments, drive, atom_free)

    if workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, batches))
    else:
        results = [run(b) for b in batches]
    return [tr for batch in results for tr in batch]


def simulate_langevin(config, physics, noise=None, drive=None, schedule=None):
    """Single stochastic trajectory for ``config.seed``."""
    return simulate_ensemble(config, physics, noise, [config.seed], drive, schedule)[0]


def heat_cool_schedule(physics, t_switch, noise=None, heating_mixing_rate=None, heating_power_scale=1.0):
    """Segments: delta = +kappa/2 before ``t_switch``, -kappa/2 after."""
    noise = NoiseConfig() if noise is None else noise
    gm, _ = noise.bath(physics.trap)
    kappa = physics.cavity.linewidth
    segs = []
    if t_switch > 0:
        segs.append(Segment(0.0, +kappa / 2, gm if heating_mixing_rate is None else heating_mixing_rate,
                            math.sqrt(heating_power_scale)))
    segs.append(Segment(float(t_switch), -kappa / 2, gm))
    return segs


def run_heat_then_cool(config, physics, t_switch, noise=None, seeds=None, heating_mixing_rate=None,
                       heating_power_scale=1.0, workers=1):
    """Heat (delta = +kappa/2) until ``t_switch``, then cool (delta = -kappa/2).

    The state is continuous across the switch. By default the input amplitude
    is unchanged; ``heating_power_scale`` multiplies the probe power of the
    heating phase only. Returns a single :class:`Trajectory` when ``seeds``
    is None.
    """
    if not 0 <= t_switch <= config.duration:
        raise ConfigurationError("t_switch must lie within the run duration", "t_switch")
    if not heating_power_scale > 0:
        raise ConfigurationError("must be positive", "heating_power_scale")
    noise = NoiseConfig() if noise is None else noise
    schedule = heat_cool_schedule(physics, t_switch, noise, heating_mixing_rate, heating_power_scale)
    kappa = physics.cavity.linewidth
    d = physics.derive()
    drive = Drive.calibrated(d.intracavity_photons, schedule[0].cavity_detuning, kappa)
    single = seeds is None
    out = simulate_ensemble(config, physics, noise, [config.seed] if single else seeds, drive, schedule,
                            workers=workers)
    return out[0] if single else out


def heating_time_to(physics, n_start, n_target, noise=None, heating_mixing_rate=None, heating_power_scale=1.0):
    """Rate-equation time to heat from ``n_start`` to ``n_target`` at delta = +kappa/2."""
    noise = NoiseConfig() if noise is None else noise
    gm, nb = noise.bath(physics.trap)
    if heating_mixing_rate is not None:
        gm = heating_mixing_rate
    d0 = physics.derive()
    probe = model.ProbeParams(
        physics.probe.atom_detuning, physics.cavity.linewidth / 2,
        intracavity_photons=d0.intracavity_photons * heating_power_scale,
        detection_efficiency=physics.probe.detection_efficiency,
    )
    hot = physics.replace(probe=probe, trap=replace(physics.trap, mixing_rate=gm, bath_occupation=nb))
    d = hot.derive()
    gamma = d.gamma_c + gm
    if gamma >= 0:
        raise InstabilityError("heating side is damped; occupation cannot grow without bound")
    heating = d.stokes_rate + noise.recoil_factor * d.recoil_rate + gm * nb
    n_inf = heating / gamma
    return math.log((n_target - n_inf) / (n_start - n_inf)) / (-gamma)
