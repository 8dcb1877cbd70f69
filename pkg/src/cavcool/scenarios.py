"""Scenario execution and the figure-reproduction presets.

A :class:`~cavcool.config.Scenario` is run dataset by dataset:
:func:`simulate_dataset` produces trajectories and photocurrent traces,
:func:`analyze_dataset` applies the scenario's analysis plan. The CLI uses
the same two steps with trace files in between.

Figure presets are built from plan dataclasses (:class:`Fig2Plan`,
:class:`Fig3Plan`, :class:`Fig4Plan`); ``run_fig*`` run them in memory and
add the figure-level summaries.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import config as cfg
from . import dynamics as dy
from . import linear, model
from . import photodetect as pd
from .analysis import decay, spectra, thermometry
from .errors import FitError, InstabilityError, NotApplicableError
from .seeding import trace_seeds

TWO_PI = model.TWO_PI
BACKGROUND_OFFSET = 1000
BACKGROUND_DURATION = 40e-6


# ---------------------------------------------------------------- shared helpers


def linear_readout_bound(g0, kappa, fraction=0.2):
    """Occupation at which the rms cavity shift g0 sqrt(4 n) reaches ``fraction`` kappa."""
    return (fraction * kappa / g0) ** 2 / 4


def effective_transduction(physics, bin_width):
    """Variance per phonon of binned photocounts (c_T times the bin transfer at omega_t)."""
    d = physics.derive()
    c_T = dy.transduction_coefficient(d, physics.cavity, physics.probe, physics.trap.frequency)
    return c_T * pd.bin_transfer(physics.trap.frequency / TWO_PI, bin_width)


def switch_time(physics, target, bin_width, n_thermal):
    """Heating time for the turn-on oscillation to grow to ``target`` quanta (linearized growth rate)."""
    hot = physics.replace(probe=physics.probe.with_detuning(physics.cavity.linewidth / 2))
    dh = hot.derive()
    growth = -linear.energy_decay_rate(linear.from_physics(hot))
    n_start = (dh.g0 * dh.intracavity_photons / physics.trap.frequency) ** 2 + n_thermal + 0.5
    if growth <= 0 or target <= n_start:
        return 0.0
    t = math.log(target / n_start) / growth
    return round(t / bin_width) * bin_width


def fit_cooling_curve(t, ns, t_start, n_max, smooth):
    """Exponential fit of the trace-averaged occupation after ``t_start``.

    The fit starts at the first point with mean n <= ``n_max``. Weights are
    the standard errors smoothed over one window. Overlapping windows make
    neighbouring points correlated, so the rate uncertainty is the
    delete-one jackknife over traces rather than the covariance estimate.

    Returns (fit, fit start time, jackknife rate error).
    """
    n_mean, n_err = thermometry.average_series(ns)
    ok = np.nonzero((t >= t_start) & (n_mean <= n_max))[0]
    if len(ok) == 0:
        raise FitError("occupation never enters the linear-readout range")
    k0 = ok[0]
    if len(ns) < 2:
        n_err = np.full_like(n_mean, max(float(np.std(n_mean[k0:])), 1e-12))
    kernel = np.ones(smooth) / smooth
    sig = np.sqrt(np.convolve(n_err**2, kernel, mode="same"))
    fit = decay.fit_exponential_decay(t[k0:], n_mean[k0:], sigma=sig[k0:])
    m = len(ns)
    if m < 3:
        return fit, float(t[k0]), fit.rate_err
    arr = np.vstack(ns)
    total = arr.sum(axis=0)
    rates = []
    p0 = (fit.amplitude, fit.rate, fit.offset)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for i in range(m):
            sub = (total - arr[i]) / (m - 1)
            try:
                rates.append(decay.fit_exponential_decay(t[k0:], sub[k0:], sigma=sig[k0:], p0=p0).rate)
            except FitError:
                pass
    rates = np.array(rates)
    k = len(rates)
    jk = math.sqrt((k - 1) / k * np.sum((rates - rates.mean()) ** 2)) if k > 2 else fit.rate_err
    return fit, float(t[k0]), jk


# ---------------------------------------------------------------- simulation


@dataclass
class DatasetRun:
    """Traces of one dataset. ``background`` holds atom-free photocurrents."""

    label: str
    index: int
    seeds: list
    background_seeds: list
    t_switch: float | None
    flags: dict
    trajectories: list = field(repr=False)
    photocurrents: list = field(repr=False)
    background: list = field(repr=False)


def trajectory_flags(trajectories):
    return {
        "capped": any(t.capped for t in trajectories),
        "unstable": any(t.unstable for t in trajectories),
        "truncated": any(t.truncated for t in trajectories),
    }


def resolve_t_switch(ds):
    """Heating-phase length of a dataset: explicit, derived from a target occupation, or None."""
    r = ds.run
    if r.t_switch is not None:
        return r.t_switch
    if r.switch_occupation is not None:
        _, nb = ds.noise.bath(ds.physics.trap)
        return switch_time(ds.physics, r.switch_occupation, ds.detector.bin_width, nb)
    return None


def simulate_dataset(ds, master_seed, index, workers=1):
    """Simulate and detect the traces of dataset ``ds`` (number ``index`` in its scenario).

    Trace i uses seed ``trace_seeds(master_seed, index, n)[i]``; atom-free
    background traces use dataset key ``BACKGROUND_OFFSET + index``.
    """
    seeds = trace_seeds(master_seed, index, ds.run.n_traces)
    t_sw = resolve_t_switch(ds)
    if t_sw is None:
        trs = dy.simulate_ensemble(ds.sim, ds.physics, ds.noise, seeds, workers=workers)
    else:
        trs = dy.run_heat_then_cool(ds.sim, ds.physics, t_sw, ds.noise, seeds=seeds,
                                    heating_mixing_rate=ds.run.heating_mixing_rate, workers=workers)
    pcs = [pd.detect(tr, ds.detector) for tr in trs]
    bseeds = trace_seeds(master_seed, BACKGROUND_OFFSET + index, ds.run.background_traces)
    background = []
    if bseeds:
        bsim = replace(ds.sim, duration=min(ds.sim.duration, BACKGROUND_DURATION), sudden_turn_on=False)
        btrs = dy.simulate_ensemble(bsim, ds.physics, ds.noise, bseeds, workers=workers, atom_free=True)
        background = [pd.detect(tr, ds.detector) for tr in btrs]
    return DatasetRun(ds.label, index, seeds, bseeds, t_sw, trajectory_flags(trs), trs, pcs, background)


# ---------------------------------------------------------------- analysis


@dataclass
class DecayDataset:
    label: str
    scattering_rate: float
    atom_number: int
    eta_gamma_sc: float
    predicted_rate: float
    linear_rate: float
    t_switch: float
    fit_start: float
    rate: float
    rate_err: float
    offset: float
    background_variance: float
    sinusoid_rate: float | None
    sinusoid_rate_err: float | None
    sinusoid_frequency: float | None
    t: np.ndarray = field(repr=False, default=None)
    occupation: np.ndarray = field(repr=False, default=None)
    occupation_err: np.ndarray = field(repr=False, default=None)

    def row(self):
        rec = asdict(self)
        for k in ("t", "occupation", "occupation_err"):
            rec.pop(k)
        return rec

    def curve(self):
        return [{"label": self.label, "t": float(t), "occupation": float(n), "occupation_err": float(e)}
                for t, n, e in zip(self.t, self.occupation, self.occupation_err)]


def background_variance(background, window):
    """Mean shot-subtracted sliding variance of atom-free traces; 0 without any."""
    if not background:
        return 0.0
    return float(np.mean([np.mean(thermometry.sliding_variance(pc, window, subtract_shot=True).variance)
                          for pc in background]))


def analyze_decay(ds, photocurrents, background, t_switch, plan):
    """Variance thermometry of a cooling run and exponential fit of n(t)."""
    physics = ds.physics
    d = physics.derive()
    gm, _ = ds.noise.bath(physics.trap)
    bin_width = photocurrents[0].bin_width
    bg = background_variance(background, plan.window)
    c_T = effective_transduction(physics, bin_width)
    ns, t = [], None
    for pc in photocurrents:
        v = thermometry.sliding_variance(pc, plan.window, subtract_shot=True)
        t = v.t
        ns.append((v.variance - bg) / c_T - ds.noise.zero_point)
    n_mean, n_err = thermometry.average_series(ns)
    t_sw = 0.0 if t_switch is None else t_switch
    n_max = linear_readout_bound(d.g0, physics.cavity.linewidth, plan.readout_fraction)
    smooth = max(int(round(plan.window / bin_width)), 1)
    fit, t0, rate_err = fit_cooling_curve(t, ns, t_sw + plan.window / 2, n_max, smooth)

    sin_rate = sin_err = sin_freq = None
    counts = np.mean([pc.fractional() for pc in photocurrents], axis=0)
    tc = (np.arange(len(counts)) + 0.5) * bin_width
    post = tc >= t0
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sfit = decay.fit_decaying_sinusoid(tc[post], counts[post])
        sin_rate, sin_err, sin_freq = sfit.rate, sfit.rate_err, sfit.frequency
    except (NotApplicableError, FitError):
        pass
    lm = linear.from_physics(physics.replace(trap=replace(physics.trap, mixing_rate=gm)))
    return DecayDataset(
        label=ds.label, scattering_rate=d.gamma_sc, atom_number=physics.ensemble.atom_number,
        eta_gamma_sc=physics.cavity.eta * d.gamma_sc, predicted_rate=d.gamma_c + gm,
        linear_rate=linear.energy_decay_rate(lm), t_switch=t_sw, fit_start=t0, rate=fit.rate, rate_err=rate_err,
        offset=fit.offset, background_variance=bg, sinusoid_rate=sin_rate, sinusoid_rate_err=sin_err,
        sinusoid_frequency=sin_freq, t=t, occupation=n_mean, occupation_err=n_err,
    )


@dataclass
class SpectrumDataset:
    label: str
    cavity_detuning: float
    injected_occupation: float
    linear_occupation: float
    rate_equation_occupation: float
    fit: spectra.SpectrumFitResult
    fit_without_correlation: spectra.SpectrumFitResult | None
    spectrum: spectra.Spectrum
    constants: spectra.SpectralConstants
    dip_depth: float
    include_correlation: bool = True

    def row(self):
        f = self.fit
        return {
            "label": self.label, "cavity_detuning": self.cavity_detuning,
            "injected_occupation": self.injected_occupation, "linear_occupation": self.linear_occupation,
            "rate_equation_occupation": self.rate_equation_occupation, "occupation": f.occupation,
            "occupation_err": f.occupation_err, "occupation_ci_low": f.occupation_ci[0],
            "occupation_ci_high": f.occupation_ci[1], "occupation_area": f.occupation_area,
            "gamma_tot": f.gamma_tot, "gamma_tot_err": f.gamma_tot_err,
            "mechanical_frequency": f.mechanical_frequency, "peak_area": f.peak_area,
            "white_level": f.white_level, "correlation_amplitude": f.correlation_amplitude,
            "correlation_amplitude_err": float(f.errors[4]) if len(f.errors) > 4 else None,
            "dip_depth": self.dip_depth,
            "occupation_no_correlation": (
                None if self.fit_without_correlation is None else self.fit_without_correlation.occupation
            ),
            "chi2_dof": f.chi2_dof, "at_bounds": ",".join(f.at_bounds),
        }

    def spectrum_rows(self):
        sel = self.spectrum.freq > 0
        freq = self.spectrum.freq[sel]
        kw = {"include_correlation": self.include_correlation}
        mdl = spectra.spectral_model(freq, self.fit.params, self.constants, **kw)
        bg = spectra.background_model(freq, self.fit.params, self.constants, **kw)
        return [{"label": self.label, "freq": float(f), "psd": float(s), "model": float(m), "background": float(b)}
                for f, s, m, b in zip(freq, self.spectrum.psd[sel], mdl, bg)]


def analyze_spectrum(ds, photocurrents, plan, trajectories=None):
    """Welch spectrum of the photocurrents after the burn-in and spectral-model fit."""
    physics = ds.physics
    bin_width = photocurrents[0].bin_width
    k0 = int(round(ds.run.burn_in / bin_width))
    traces = [pc.fractional()[k0:] for pc in photocurrents]
    spec = spectra.welch_psd(traces, plan.segment_length, sample_rate=1 / bin_width)
    gm, _ = ds.noise.bath(physics.trap)
    phys_eff = physics.replace(trap=replace(physics.trap, mixing_rate=gm))
    rf, lw = ds.noise.recoil_factor, ds.noise.laser_linewidth
    consts = spectra.SpectralConstants.from_physics(phys_eff, recoil_factor=rf, laser_linewidth=lw)
    band = (plan.band_low, plan.band_high)
    fit = spectra.fit_spectrum(spec, consts, band=band, include_correlation=plan.include_correlation)
    fit_nc = None
    if plan.include_correlation:
        try:
            fit_nc = spectra.fit_spectrum(spec, consts, band=band, include_correlation=False, profile=False)
        except FitError:
            pass
    injected = math.nan
    if trajectories:
        burn = int(round(ds.run.burn_in / trajectories[0].sample_period))
        injected = float(np.mean([tr.occupation()[burn:].mean() for tr in trajectories]))
    lm = linear.from_physics(phys_eff, recoil_factor=rf, laser_linewidth=lw)
    n_lin = linear.occupations(lm)[0] if lm.is_stable() else math.inf
    try:
        n_rate = model.equilibrium_occupation(phys_eff.derive(), phys_eff.trap, rf)
    except InstabilityError:
        n_rate = math.inf
    sel = (spec.freq >= band[0]) & (spec.freq <= band[1])
    bg = spectra.background_model(spec.freq[sel], fit.params, consts, include_correlation=plan.include_correlation)
    dip = float((fit.white_level - bg.min()) / fit.white_level)
    return SpectrumDataset(
        label=ds.label, cavity_detuning=physics.probe.cavity_detuning, injected_occupation=injected,
        linear_occupation=n_lin, rate_equation_occupation=n_rate, fit=fit, fit_without_correlation=fit_nc,
        spectrum=spec, constants=consts, dip_depth=dip, include_correlation=plan.include_correlation,
    )


def analyze_dataset(ds, run, plan):
    """Apply ``plan`` to the traces of one dataset; None for kind 'none'."""
    if plan.kind == "variance_decay":
        return analyze_decay(ds, run.photocurrents, run.background, run.t_switch, plan)
    if plan.kind == "spectrum":
        return analyze_spectrum(ds, run.photocurrents, plan, run.trajectories)
    return None


# ---------------------------------------------------------------- rate regression


@dataclass
class RegressionSummary:
    group_fits: list
    slope_per_atom: float
    slope_per_atom_err: float
    pooled_mixing_rate: float
    pooled_mixing_rate_err: float

    def rows(self):
        return [{
            "slope_per_atom": self.slope_per_atom, "slope_per_atom_err": self.slope_per_atom_err,
            "pooled_mixing_rate": self.pooled_mixing_rate, "pooled_mixing_rate_err": self.pooled_mixing_rate_err,
        }]


def regress_decay_rates(results):
    """Per-atom-number fits gamma_exp = f(N) eta Gamma_sc + gamma_m, then f(N) = a N.

    The pooled mixing rate is the inverse-variance mean of the intercepts.
    """
    groups = {}
    for r in results:
        groups.setdefault(r.atom_number, []).append(r)
    fits = []
    for N, rs in sorted(groups.items()):
        lf = decay.fit_rate_vs_scattering([r.eta_gamma_sc for r in rs], [r.rate for r in rs],
                                          [r.rate_err for r in rs])
        rec = lf.as_record()
        rec.pop("covariance", None)
        fits.append({"atom_number": N, **rec})
    Ns = np.array([f["atom_number"] for f in fits], dtype=float)
    a, a_err, _ = decay.fit_proportional(Ns, [f["slope"] for f in fits], [f["slope_err"] for f in fits])
    w = 1 / np.array([f["intercept_err"] for f in fits]) ** 2
    gm = float(np.sum(w * np.array([f["intercept"] for f in fits])) / np.sum(w))
    return RegressionSummary(fits, float(a), float(a_err), gm, float(1 / math.sqrt(np.sum(w))))


# ---------------------------------------------------------------- presets


def _physics_section(atom_number, atom_detuning, mixing_rate, bath_occupation, cavity_detuning, flux):
    return {
        "preset": "reference",
        "ensemble": {"atom_number": atom_number},
        "trap": {"mixing_rate": mixing_rate, "bath_occupation": bath_occupation},
        "probe": {"atom_detuning": atom_detuning, "cavity_detuning": cavity_detuning, **flux},
    }


@dataclass
class Fig2Plan:
    atom_number: int = 2800
    atom_detuning: float = TWO_PI * 140e6
    scattering_rates: tuple = (1.1e5, 2.3e5, 3.4e5, 6.4e5)
    mixing_rate: float = 1.6e5
    bath_occupation: float = 3.1
    n_traces: int = 10
    switch_occupation: float = 1000.0
    window: float = 2e-6
    bin_width: float = 100e-9
    dt: float = 5e-9
    cooling_decay_times: float = 12.0
    background_traces: int = 4
    readout_fraction: float = 0.2


def fig2_scenario(plan=None, master_seed=0):
    """Heat-then-cool runs at four probe powers."""
    plan = Fig2Plan() if plan is None else plan
    datasets = []
    for gsc in plan.scattering_rates:
        phys = _physics_section(plan.atom_number, plan.atom_detuning, plan.mixing_rate, plan.bath_occupation,
                                "-0.5 kappa", {"scattering_rate": gsc})
        physics = cfg.parse_physics(phys)
        d = physics.derive()
        t_sw = switch_time(physics, plan.switch_occupation, plan.bin_width, plan.bath_occupation)
        n_win = math.ceil((t_sw + plan.cooling_decay_times / (d.gamma_c + plan.mixing_rate)) / plan.window)
        datasets.append({
            "label": f"gsc_{gsc:.3g}",
            "physics": phys,
            "sim": {"duration": n_win * plan.window},
            "run": {"t_switch": t_sw},
        })
    return cfg.parse({
        "name": "fig2",
        "seed": master_seed,
        "sim": {"dt": plan.dt, "sudden_turn_on": True},
        "detector": {"bin_width": plan.bin_width, "mode": "quantum"},
        "run": {"n_traces": plan.n_traces, "background_traces": plan.background_traces},
        "analysis": {"kind": "variance_decay", "window": plan.window, "readout_fraction": plan.readout_fraction},
        "datasets": datasets,
    })


@dataclass
class Fig3Group:
    atom_number: int
    atom_detuning: float
    scattering_rates: tuple


def _default_groups():
    return (
        Fig3Group(8000, TWO_PI * 270e6, (1.5e4, 3.0e4, 4.5e4, 6.0e4)),
        Fig3Group(2800, TWO_PI * 140e6, (4.0e4, 8.0e4, 1.2e5, 1.6e5)),
        Fig3Group(700, TWO_PI * 70e6, (1.6e5, 3.2e5, 4.8e5, 6.4e5)),
    )


@dataclass
class Fig3Plan:
    groups: tuple = field(default_factory=_default_groups)
    mixing_rate: float = 1.6e5
    bath_occupation: float = 3.1
    n_traces: int = 256
    initial_occupation: float = 150.0
    window: float = 2e-6
    bin_width: float = 100e-9
    dt: float = 5e-9
    cooling_decay_times: float = 10.0
    background_traces: int = 4
    readout_fraction: float = 0.12


def fig3_scenario(plan=None, master_seed=0):
    """Cooling runs from a hot thermal state; three atom numbers with four powers each."""
    plan = Fig3Plan() if plan is None else plan
    datasets = []
    for grp in plan.groups:
        for gsc in grp.scattering_rates:
            phys = _physics_section(grp.atom_number, grp.atom_detuning, plan.mixing_rate, plan.bath_occupation,
                                    "-0.5 kappa", {"scattering_rate": gsc})
            d = cfg.parse_physics(phys).derive()
            n_win = math.ceil(plan.cooling_decay_times / (d.gamma_c + plan.mixing_rate) / plan.window)
            datasets.append({
                "label": f"N{grp.atom_number}_gsc_{gsc:.3g}",
                "physics": phys,
                "sim": {"duration": n_win * plan.window},
            })
    return cfg.parse({
        "name": "fig3",
        "seed": master_seed,
        "sim": {"dt": plan.dt, "initial_occupation": plan.initial_occupation},
        "detector": {"bin_width": plan.bin_width, "mode": "quantum"},
        "run": {"n_traces": plan.n_traces, "background_traces": plan.background_traces},
        "analysis": {"kind": "variance_decay", "window": plan.window, "readout_fraction": plan.readout_fraction},
        "datasets": datasets,
    })


@dataclass
class Fig4Plan:
    atom_number: int = 450
    atom_detuning: float = TWO_PI * 70e6
    transmitted_rate: float = 1.2e9
    cooling_mixing_rate: float = 2.6e5
    heating_mixing_rate: float = 4.8e5
    bath_occupation: float = 3.1
    n_traces: int = 150
    duration: float = 440e-6
    dt: float = 10e-9
    bin_width: float = 100e-9
    segment_length: float = 110e-6
    electronic_noise_shots: float = 2.0
    laser_noise_fraction: float = 0.0
    band: tuple = (20e3, 1.4e6)
    burn_in: float = 20e-6


def fig4_scenario(plan=None, master_seed=0):
    """Steady-state runs at delta = -kappa/2 (cooling) and +kappa/2 (heating)."""
    plan = Fig4Plan() if plan is None else plan
    sides = (("cooling", "-0.5 kappa", plan.cooling_mixing_rate), ("heating", "0.5 kappa", plan.heating_mixing_rate))
    datasets = []
    for side, delta, gm in sides:
        phys = _physics_section(plan.atom_number, plan.atom_detuning, gm, plan.bath_occupation, delta,
                                {"transmitted_rate": plan.transmitted_rate})
        datasets.append({"label": side, "physics": phys})
    laser = 0.0
    if plan.laser_noise_fraction > 0:
        laser = linear.calibrate_laser_linewidth(cfg.parse_physics(datasets[0]["physics"]),
                                                 plan.laser_noise_fraction)
    return cfg.parse({
        "name": "fig4",
        "seed": master_seed,
        "sim": {"dt": plan.dt, "duration": plan.duration + plan.burn_in,
                "record_stride": int(round(plan.bin_width / plan.dt))},
        "noise": {"laser_linewidth": laser},
        "detector": {"bin_width": plan.bin_width, "mode": "quantum",
                     "electronic_noise_psd": f"{plan.electronic_noise_shots!r} shot"},
        "run": {"n_traces": plan.n_traces, "burn_in": plan.burn_in},
        "analysis": {"kind": "spectrum", "segment_length": plan.segment_length, "band_low": plan.band[0],
                     "band_high": plan.band[1]},
        "datasets": datasets,
    })


PRESETS = {"fig2": fig2_scenario, "fig3": fig3_scenario, "fig4": fig4_scenario, "fig4b": fig4_scenario}


# ---------------------------------------------------------------- in-memory runs


@dataclass
class ScenarioResult:
    scenario: cfg.Scenario
    runs: list = field(repr=False)
    results: list
    summary: RegressionSummary | None = None

    @property
    def seeds(self):
        out = {}
        for r in self.runs:
            out[r.label] = r.seeds
            if r.background_seeds:
                out[f"{r.label}/background"] = r.background_seeds
        return out

    def by_label(self, label):
        return next(r for r in self.results if r is not None and r.label == label)

    def tables(self):
        """Tidy tables (name -> list of row dicts) for CSV and JSON export."""
        name = self.scenario.name
        out = {}
        done = [(res, run) for res, run in zip(self.results, self.runs) if res is not None]
        if not done:
            return out
        rows = [{**res.row(), **run.flags} for res, run in done]
        if isinstance(done[0][0], DecayDataset):
            out[f"{name}_rates"] = rows
            out[f"{name}_curves"] = [c for res, _ in done for c in res.curve()]
        else:
            out[f"{name}_fits"] = rows
            out[f"{name}_spectra"] = [c for res, _ in done for c in res.spectrum_rows()]
        if self.summary is not None:
            out[f"{name}_group_fits"] = self.summary.group_fits
            out[f"{name}_summary"] = self.summary.rows()
        return out


def summarize(scenario, results):
    """Cross-dataset regression when every result is a decay fit spanning several atom numbers."""
    if not results or not all(isinstance(r, DecayDataset) for r in results):
        return None
    counts = {}
    for r in results:
        counts[r.atom_number] = counts.get(r.atom_number, 0) + 1
    if len(counts) < 2 or min(counts.values()) < 3:
        return None
    return regress_decay_rates(results)


def run_scenario(scenario, workers=1, keep_traces=False):
    """Simulate and analyze every dataset in memory."""
    runs, results = [], []
    for i, ds in enumerate(scenario.datasets):
        run = simulate_dataset(ds, scenario.master_seed, i, workers=workers)
        results.append(analyze_dataset(ds, run, scenario.analysis))
        if not keep_traces:
            run.trajectories, run.photocurrents, run.background = [], [], []
        runs.append(run)
    return ScenarioResult(scenario, runs, results, summarize(scenario, results))


def run_fig2(plan=None, master_seed=0, workers=1):
    """Heat-then-cool runs at four probe powers; variance thermometry and decay fits."""
    return run_scenario(fig2_scenario(plan, master_seed), workers)


def run_fig3(plan=None, master_seed=0, workers=1):
    """Decay rate vs scattering rate for three atom numbers; linear regressions."""
    return run_scenario(fig3_scenario(plan, master_seed), workers)


def run_fig4(plan=None, master_seed=0, workers=1):
    """Cooling and heating spectra from long traces; spectral-model fits."""
    return run_scenario(fig4_scenario(plan, master_seed), workers)


# ---------------------------------------------------------------- single-purpose checks


def detailed_balance_physics(scattering_rate=1.8e5):
    """Resolved-sideband point omega_t = kappa/2 = -delta without mixing: n = 1/4 exactly."""
    kappa = model.reference_physics().cavity.linewidth
    return model.reference_physics(
        trap_frequency=kappa / 2, cavity_detuning=-kappa / 2, mixing_rate=0.0, bath_occupation=0.0,
        scattering_rate=scattering_rate,
    )


def run_detailed_balance(n_seeds=200, duration=500e-6, dt=5e-9, master_seed=0, workers=1):
    """Long zero-point runs without mixing or recoil; mean occupation vs the rate-equation value."""
    physics = detailed_balance_physics()
    d = physics.derive()
    n_eq = model.equilibrium_occupation(d, physics.trap, recoil_factor=0.0)
    noise = dy.NoiseConfig(recoil_factor=0.0)
    sim = dy.SimConfig(dt=dt, duration=duration, record_stride=20, initial_occupation=n_eq)
    seeds = trace_seeds(master_seed, 300, n_seeds)
    trs = dy.simulate_ensemble(sim, physics, noise, seeds, workers=workers)
    per = np.array([tr.occupation().mean() for tr in trs])
    return {
        "analytic": n_eq,
        "simulated": float(per.mean()),
        "standard_error": float(per.std(ddof=1) / math.sqrt(len(per))),
        "linear": linear.occupations(linear.from_physics(physics, recoil_factor=0.0))[0],
        "n_seeds": n_seeds,
    }


def parametric_growth_physics(scattering_rate=1.1e5, mixing_rate=0.5e5):
    kappa = model.reference_physics().cavity.linewidth
    return model.reference_physics(atom_number=2800, atom_detuning=TWO_PI * 140e6, scattering_rate=scattering_rate,
                               mixing_rate=mixing_rate, bath_occupation=3.1, cavity_detuning=kappa / 2)


def run_parametric_growth(scattering_rate=1.1e5, mixing_rate=0.5e5, n_traces=200, dt=5e-9, master_seed=0,
                          readout_fraction=0.15, workers=1):
    """Heating run from probe turn-on; exponential fit to the growth of the mean occupation.

    The fit covers the linear-response stretch and ends where the rms cavity
    shift reaches ``readout_fraction`` kappa, well before the cap at kappa.
    """
    physics = parametric_growth_physics(scattering_rate, mixing_rate)
    d = physics.derive()
    expected = -(d.gamma_c + physics.trap.mixing_rate)
    growth = -linear.energy_decay_rate(linear.from_physics(physics))
    n_stop = linear_readout_bound(d.g0, physics.cavity.linewidth, readout_fraction)
    n_start = (d.g0 * d.intracavity_photons / physics.trap.frequency) ** 2 + physics.trap.bath_occupation + 0.5
    duration = math.log(2 * n_stop / n_start) / max(growth, 1e3)
    sim = dy.SimConfig(dt=dt, duration=duration, sudden_turn_on=True, record_stride=10)
    seeds = trace_seeds(master_seed, 400, n_traces)
    trs = dy.simulate_ensemble(sim, physics, None, seeds, workers=workers)
    t = trs[0].t
    n = np.mean([tr.occupation() for tr in trs], axis=0)
    stop = np.nonzero(n > n_stop)[0]
    end = stop[0] if len(stop) else len(t)
    fit = decay.fit_exponential_decay(t[:end], n[:end], p0=(n[0], -growth, 0.0))
    return {
        "expected_rate": expected,
        "linear_rate": growth,
        "fitted_rate": -fit.rate,
        "fitted_rate_err": fit.rate_err,
        "fit_end_occupation": float(n[end - 1]),
        "n_stop": n_stop,
        "capped": any(tr.capped for tr in trs),
    }
