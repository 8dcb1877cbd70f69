"""Closed-form optomechanical model of the cavity-coupled collective mode.

All angular frequencies are in rad/s, rates in 1/s, energies in J.
Sign conventions: ``cavity_detuning`` (delta) < 0 is red of the cavity
resonance and cools; ``atom_detuning`` (Delta) > 0 is blue of the atomic
transition.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy import constants

from .errors import ConfigurationError, InstabilityError

HBAR = constants.hbar
AMU = constants.physical_constants["atomic mass constant"][0]
RB87_MASS = 86.909180527 * AMU
RB87_D2_WAVELENGTH = 780.241e-9
RB87_D2_LINEWIDTH = 2 * np.pi * 6.0666e6

TWO_PI = 2 * np.pi


def _require_positive(value, name):
    if value is None or not np.isfinite(value) or value <= 0:
        raise ConfigurationError(f"must be a finite positive number, got {value!r}", name)


@dataclass(frozen=True)
class AtomParams:
    mass: float
    linewidth: float
    wavenumber: float

    def __post_init__(self):
        _require_positive(self.mass, "atom.mass")
        _require_positive(self.linewidth, "atom.linewidth")
        _require_positive(self.wavenumber, "atom.wavenumber")

    @classmethod
    def rb87(cls, linewidth=TWO_PI * 6.1e6):
        return cls(mass=RB87_MASS, linewidth=linewidth, wavenumber=TWO_PI / RB87_D2_WAVELENGTH)


@dataclass(frozen=True)
class CavityParams:
    linewidth: float
    cooperativity: float
    waist: float | None = None
    cooperativity_scale: float = 1.0
    """Multiplicative correction to ``cooperativity`` (e.g. absorption); not modelled."""

    def __post_init__(self):
        _require_positive(self.linewidth, "cavity.linewidth")
        _require_positive(self.cooperativity, "cavity.cooperativity")
        _require_positive(self.cooperativity_scale, "cavity.cooperativity_scale")
        if self.waist is not None:
            _require_positive(self.waist, "cavity.waist")

    @property
    def eta(self):
        return self.cooperativity * self.cooperativity_scale


@dataclass(frozen=True)
class TrapParams:
    frequency: float
    mixing_rate: float = 0.0
    bath_occupation: float = 0.0
    depth: float | None = None

    def __post_init__(self):
        _require_positive(self.frequency, "trap.frequency")
        if not np.isfinite(self.mixing_rate) or self.mixing_rate < 0:
            raise ConfigurationError("must be >= 0", "trap.mixing_rate")
        if not np.isfinite(self.bath_occupation) or self.bath_occupation < 0:
            raise ConfigurationError("must be >= 0", "trap.bath_occupation")


@dataclass(frozen=True)
class EnsembleConfig:
    """Atom number plus either explicit trap-minimum positions or a statistical zeta."""

    atom_number: int
    positions: np.ndarray | None = field(default=None, compare=False)
    statistical_zeta: float | None = None

    def __post_init__(self):
        if int(self.atom_number) != self.atom_number or self.atom_number < 1:
            raise ConfigurationError("must be an integer >= 1", "ensemble.atom_number")
        if self.positions is not None:
            pos = np.asarray(self.positions, dtype=float)
            if pos.ndim != 1 or pos.size != self.atom_number:
                raise ConfigurationError(
                    f"expected {self.atom_number} positions, got shape {pos.shape}", "ensemble.positions"
                )
            object.__setattr__(self, "positions", pos)
        if self.statistical_zeta is not None and not 0 <= self.statistical_zeta <= 1:
            raise ConfigurationError("must lie in [0, 1]", "ensemble.statistical_zeta")

    @classmethod
    def long_cloud(cls, atom_number):
        """Cloud much longer than the trap/probe beat length (zeta = 1/2)."""
        return cls(atom_number=int(atom_number), statistical_zeta=0.5)


@dataclass(frozen=True)
class ProbeParams:
    """Probe laser settings.

    Exactly one of ``intracavity_photons`` (mean <a^dagger a>) or
    ``transmitted_rate`` (R-bar, photons/s leaving the output mirror) is given.
    For a symmetric cavity R-bar = kappa * <a^dagger a> / 2. The detected rate
    is ``detection_efficiency * transmitted_rate``.
    """

    atom_detuning: float
    cavity_detuning: float
    intracavity_photons: float | None = None
    transmitted_rate: float | None = None
    detection_efficiency: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.atom_detuning) or self.atom_detuning == 0:
            raise ConfigurationError("must be finite and nonzero", "probe.atom_detuning")
        if not np.isfinite(self.cavity_detuning):
            raise ConfigurationError("must be finite", "probe.cavity_detuning")
        given = [self.intracavity_photons is not None, self.transmitted_rate is not None]
        if sum(given) != 1:
            raise ConfigurationError(
                "specify exactly one of intracavity_photons / transmitted_rate", "probe"
            )
        if self.intracavity_photons is not None and (
            not np.isfinite(self.intracavity_photons) or self.intracavity_photons < 0
        ):
            raise ConfigurationError("must be >= 0", "probe.intracavity_photons")
        if self.transmitted_rate is not None and (
            not np.isfinite(self.transmitted_rate) or self.transmitted_rate < 0
        ):
            raise ConfigurationError("must be >= 0", "probe.transmitted_rate")
        if not 0 < self.detection_efficiency <= 1:
            raise ConfigurationError("must lie in (0, 1]", "probe.detection_efficiency")

    def with_detuning(self, cavity_detuning):
        return ProbeParams(
            atom_detuning=self.atom_detuning,
            cavity_detuning=cavity_detuning,
            intracavity_photons=self.intracavity_photons,
            transmitted_rate=self.transmitted_rate,
            detection_efficiency=self.detection_efficiency,
        )


@dataclass(frozen=True)
class SidebandPair:
    L_plus: complex
    L_minus: complex

    @property
    def weights(self):
        """(|L+|^2, |L-|^2): anti-Stokes and Stokes cavity enhancement."""
        return abs(self.L_plus) ** 2, abs(self.L_minus) ** 2


@dataclass(frozen=True)
class DerivedParams:
    g: float
    Omega: float
    G: float
    E_r: float
    X0: float
    M_eff: float
    gamma_sc: float
    delta_omega_N: float
    zeta: float
    n0: float
    Q: float
    intracavity_photons: float
    transmitted_rate: float
    g0: float
    atom_number: int
    sidebands: SidebandPair
    gamma_c: float
    anti_stokes_rate: float
    stokes_rate: float
    recoil_rate: float

    def as_dict(self):
        d = asdict(self)
        sb = d.pop("sidebands")
        d["L_plus"] = complex(sb["L_plus"])
        d["L_minus"] = complex(sb["L_minus"])
        return d


@dataclass(frozen=True)
class PhysicsConfig:
    atom: AtomParams
    cavity: CavityParams
    trap: TrapParams
    ensemble: EnsembleConfig
    probe: ProbeParams

    def derive(self):
        return derive_params(self.atom, self.cavity, self.trap, self.ensemble, self.probe)

    def replace(self, **components):
        data = dict(
            atom=self.atom, cavity=self.cavity, trap=self.trap, ensemble=self.ensemble, probe=self.probe
        )
        data.update(components)
        return PhysicsConfig(**data)


def sideband_lorentzians(delta, omega_t, kappa):
    """Cavity response at the anti-Stokes (L+) and Stokes (L-) sidebands.

    ``1/L(+/-) = 1 -/+ 2i (delta +/- omega_t) / kappa``.
    """
    if kappa <= 0:
        raise ConfigurationError("kappa must be positive", "cavity.linewidth")
    L_plus = 1.0 / (1.0 - 2j * (delta + omega_t) / kappa)
    L_minus = 1.0 / (1.0 + 2j * (delta - omega_t) / kappa)
    return SidebandPair(complex(L_plus), complex(L_minus))


def ensemble_geometry(ensemble, k):
    """Return (zeta, delta_omega_N / Omega) for the ensemble.

    zeta = mean of sin^2(2 k xi); the cavity shift per unit Omega is
    sum of sin^2(k xi). The statistical mode assumes a cloud spanning many
    trap/probe beat lengths, where the latter averages to N/2.
    """
    n = ensemble.atom_number
    if n < 1:
        raise ConfigurationError("empty ensemble", "ensemble.atom_number")
    if ensemble.positions is not None:
        xi = ensemble.positions
        zeta = float(np.mean(np.sin(2 * k * xi) ** 2))
        shift = float(np.sum(np.sin(k * xi) ** 2))
        return zeta, shift
    if ensemble.statistical_zeta is None:
        raise ConfigurationError("positions or statistical_zeta required", "ensemble")
    return float(ensemble.statistical_zeta), n / 2.0


def coupling_from_cooperativity(eta, kappa, gamma):
    """Single-atom vacuum coupling g from eta = 4 g^2 / (kappa Gamma)."""
    return math.sqrt(eta * kappa * gamma / 4.0)


def intracavity_photons_for_scattering_rate(gamma_sc, atom, cavity, atom_detuning):
    """Invert Gamma_sc = <a^dagger a> Gamma g^2 / Delta^2."""
    g = coupling_from_cooperativity(cavity.eta, cavity.linewidth, atom.linewidth)
    return gamma_sc * atom_detuning**2 / (atom.linewidth * g**2)


def derive_params(atom, cavity, trap, ensemble, probe):
    """Evaluate every derived model quantity.

    Raises
    ------
    ConfigurationError
        Non-positive physical parameter or inconsistent probe specification.
    """
    kappa = cavity.linewidth
    eta = cavity.eta
    omega_t = trap.frequency
    k = atom.wavenumber
    N = ensemble.atom_number

    g = coupling_from_cooperativity(eta, kappa, atom.linewidth)
    Omega = g**2 / probe.atom_detuning
    G = N * Omega * k
    E_r = HBAR**2 * k**2 / (2 * atom.mass)
    zeta, shift_per_omega = ensemble_geometry(ensemble, k)
    M_eff = N * atom.mass / zeta if zeta > 0 else math.inf
    X0 = math.sqrt(HBAR * zeta / (2 * N * atom.mass * omega_t))

    if probe.transmitted_rate is not None:
        rate = probe.transmitted_rate
        photons = 2 * rate / kappa
        gamma_sc = rate * eta * atom.linewidth**2 / (2 * probe.atom_detuning**2)
    else:
        photons = probe.intracavity_photons
        rate = kappa * photons / 2
        gamma_sc = photons * atom.linewidth * g**2 / probe.atom_detuning**2

    sb = sideband_lorentzians(probe.cavity_detuning, omega_t, kappa)
    wp, wm = sb.weights
    scale = N * gamma_sc * eta * E_r * zeta / (HBAR * omega_t)

    lamb_dicke = k**2 * HBAR / (2 * atom.mass * omega_t) * (2 * trap.bath_occupation + 1)
    if lamb_dicke > 0.1:
        warnings.warn(
            f"Lamb-Dicke parameter <(k x)^2> = {lamb_dicke:.3g} is not << 1; linearized coupling is questionable",
            stacklevel=2,
        )

    return DerivedParams(
        g=g,
        Omega=Omega,
        G=G,
        E_r=E_r,
        X0=X0,
        M_eff=M_eff,
        gamma_sc=gamma_sc,
        delta_omega_N=Omega * shift_per_omega,
        zeta=zeta,
        n0=(kappa / (4 * omega_t)) ** 2,
        Q=omega_t / trap.mixing_rate if trap.mixing_rate > 0 else math.inf,
        intracavity_photons=photons,
        transmitted_rate=rate,
        g0=G * X0,
        atom_number=N,
        sidebands=sb,
        gamma_c=scale * (wp - wm),
        anti_stokes_rate=scale * wp,
        stokes_rate=scale * wm,
        recoil_rate=E_r * gamma_sc / (HBAR * omega_t),
    )


def cooling_power(n, derived, trap, cavity, probe):
    """Net power (W) removed from the collective mode at occupation ``n``.

    Positive means net cooling. At n = 0 only the Stokes term survives and
    the result is negative.
    """
    if np.any(np.asarray(n) < 0):
        raise ValueError("occupation must be >= 0")
    sb = sideband_lorentzians(probe.cavity_detuning, trap.frequency, cavity.linewidth)
    wp, wm = sb.weights
    prefactor = derived.atom_number * derived.gamma_sc * cavity.eta * derived.E_r * derived.zeta
    return prefactor * (n * wp - (n + 1) * wm)


def cooling_rate_constant(derived, trap, cavity, probe):
    """gamma_c = dP_c / d(n hbar omega_t); negative on the heating side."""
    sb = sideband_lorentzians(probe.cavity_detuning, trap.frequency, cavity.linewidth)
    wp, wm = sb.weights
    return (
        derived.atom_number
        * derived.gamma_sc
        * cavity.eta
        * derived.E_r
        / (HBAR * trap.frequency)
        * derived.zeta
        * (wp - wm)
    )


def equilibrium_occupation(derived, trap, recoil_factor=1.0):
    """Steady-state occupation from the rate balance.

    n_inf = (A- + A_rec + gamma_m n_bath) / (gamma_c + gamma_m)

    Raises
    ------
    InstabilityError
        If gamma_c + gamma_m <= 0.
    """
    gamma_tot = derived.gamma_c + trap.mixing_rate
    if gamma_tot <= 0:
        raise InstabilityError(
            f"no damped steady state: gamma_c + gamma_m = {gamma_tot:.4g} /s <= 0"
        )
    heating = (
        derived.stokes_rate
        + recoil_factor * derived.recoil_rate
        + trap.mixing_rate * trap.bath_occupation
    )
    return heating / gamma_tot


@dataclass(frozen=True)
class LimitReport:
    n0: float
    D: float
    collective_limit: float
    bath_limit: float
    single_atom_limit: float
    gamma_c: float
    bistability_threshold: float
    exceeds_bistability: bool
    equilibrium_occupation: float
    bistability_floor: float
    floor_gamma_c: float
    floor_bound: float = 1.5

    @property
    def floor_check(self):
        """Whether the computed occupation floor respects the quoted n >= 1.5 bound within 20%."""
        return abs(self.bistability_floor - self.floor_bound) <= 0.2 * self.floor_bound

    def as_record(self):
        rec = asdict(self)
        rec["floor_check"] = self.floor_check
        return rec


def cooling_limits(physics, recoil_factor=1.0, floor=True):
    """Cooling limits of the collective mode for ``physics``.

    The prefactor D of the collective (recoil) limit is obtained from the
    rate balance with gamma_m = 0 at the optimal detuning delta = -omega_t,
    i.e. D = (n_eq - n0) N eta / (1 + n0). This gives D = recoil_factor / zeta.

    The bistability floor is the lowest position-based occupation reachable
    by varying the probe power, from the exact linearized dynamics
    (optical spring included), before the static instability.
    """
    from . import linear

    derived = physics.derive()
    trap, cavity = physics.trap, physics.cavity
    omega_t, kappa = trap.frequency, cavity.linewidth
    N = derived.atom_number
    eta = cavity.eta
    n0 = derived.n0

    optimal = physics.replace(probe=physics.probe.with_detuning(-omega_t)).derive()
    if optimal.gamma_sc > 0:
        n_opt = (optimal.stokes_rate + recoil_factor * optimal.recoil_rate) / optimal.gamma_c
        D = (n_opt - n0) * N * eta / (1 + n0)
    else:
        D = recoil_factor / derived.zeta
    collective = n0 + D * (1 + n0) / (N * eta)

    gamma_c = derived.gamma_c
    gm = trap.mixing_rate
    bath = trap.bath_occupation * gm / (gm + gamma_c) if gm + gamma_c > 0 else math.inf
    threshold = omega_t**2 / kappa
    try:
        n_eq = equilibrium_occupation(derived, trap, recoil_factor)
    except InstabilityError:
        n_eq = math.inf

    if floor:
        floor_n, floor_gc = linear.occupation_floor(physics, recoil_factor=recoil_factor)
    else:
        floor_n, floor_gc = math.nan, math.nan

    return LimitReport(
        n0=n0,
        D=D,
        collective_limit=collective,
        bath_limit=bath,
        single_atom_limit=n0 + 1 / eta,
        gamma_c=gamma_c,
        bistability_threshold=threshold,
        exceeds_bistability=bool(gamma_c > threshold),
        equilibrium_occupation=n_eq,
        bistability_floor=floor_n,
        floor_gamma_c=floor_gc,
    )


def reference_physics(
    atom_number=450,
    atom_detuning=TWO_PI * 70e6,
    cavity_detuning=None,
    transmitted_rate=None,
    scattering_rate=None,
    mixing_rate=2.6e5,
    bath_occupation=3.1,
    trap_frequency=TWO_PI * 480e3,
):
    """Experimental parameter set of the ensemble cavity-cooling setup.

    Defaults correspond to the spectral measurement (N = 450, Delta = 2 pi x 70 MHz).
    Give either ``transmitted_rate`` (default 1.2e9 /s) or ``scattering_rate``.
    ``cavity_detuning`` defaults to -kappa/2.
    """
    atom = AtomParams.rb87()
    cavity = CavityParams(linewidth=TWO_PI * 1.01e6, cooperativity=0.203, waist=56.9e-6)
    trap = TrapParams(
        frequency=trap_frequency,
        mixing_rate=mixing_rate,
        bath_occupation=bath_occupation,
        depth=constants.h * 18e6,
    )
    if cavity_detuning is None:
        cavity_detuning = -cavity.linewidth / 2
    if scattering_rate is not None:
        photons = intracavity_photons_for_scattering_rate(scattering_rate, atom, cavity, atom_detuning)
        probe = ProbeParams(atom_detuning, cavity_detuning, intracavity_photons=photons)
    else:
        probe = ProbeParams(
            atom_detuning,
            cavity_detuning,
            transmitted_rate=1.2e9 if transmitted_rate is None else transmitted_rate,
        )
    return PhysicsConfig(atom, cavity, trap, EnsembleConfig.long_cloud(atom_number), probe)
