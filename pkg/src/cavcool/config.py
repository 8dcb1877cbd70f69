"""Scenario configuration: JSON with unit-suffixed strings, parsed to SI.

Frequencies given in Hz units ("480 kHz") are converted to angular
frequency (rad/s); bare numbers in frequency fields are taken as rad/s.
Rates ("1.6e5 /s") are plain inverse seconds. Detunings also accept
multiples of the cavity linewidth ("-0.5 kappa") or the trap frequency
("-1 omega_t"). Electronic noise accepts "<x> shot", meaning x times the
shot-noise PSD 2/R of the scenario.

:func:`to_dict` gives the canonical form: every field explicit, SI floats.
``to_dict(parse(to_dict(parse(d)))) == to_dict(parse(d))``.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from . import model
from .dynamics import NoiseConfig, SimConfig
from .errors import ConfigurationError
from .photodetect import DetectorConfig

TWO_PI = model.TWO_PI

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QTY = re.compile(rf"^\s*({_NUM})\s*(.*?)\s*$")

_FREQ = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}
_ANGULAR = {"rad/s": 1.0, "krad/s": 1e3, "mrad/s": 1e6}
_TIME = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "ns": 1e-9, "ps": 1e-12}
_RATE = {"/s": 1.0, "1/s": 1.0, "s^-1": 1.0, "/ms": 1e3, "/us": 1e6, "/µs": 1e6}
_LENGTH = {"m": 1.0, "mm": 1e-3, "um": 1e-6, "µm": 1e-6, "nm": 1e-9}
_MASS = {"kg": 1.0, "amu": model.AMU, "u": model.AMU}
_PSD = {"1/hz": 1.0, "/hz": 1.0}
_ENERGY = {"j": 1.0}


def _split(value, path):
    if isinstance(value, bool):
        raise ConfigurationError("expected a number or quantity string", path)
    if isinstance(value, (int, float)):
        return float(value), ""
    if not isinstance(value, str):
        raise ConfigurationError(f"expected a number or quantity string, got {type(value).__name__}", path)
    m = _QTY.match(value)
    if not m:
        raise ConfigurationError(f"cannot parse quantity {value!r}", path)
    return float(m.group(1)), m.group(2).strip()


def _finite(x, path):
    if not math.isfinite(x):
        raise ConfigurationError("must be finite", path)
    return x


def parse_quantity(value, kind, path="value", context=None):
    """Convert ``value`` to SI for quantity ``kind``.

    kinds: angular, time, rate, length, mass, psd, energy, number.
    ``context`` supplies ``kappa``, ``omega_t`` and ``shot_psd`` for relative units.
    """
    x, unit = _split(value, path)
    _finite(x, path)
    if not unit:
        return x
    key = unit.lower() if unit not in ("µs", "µm", "/µs") else unit
    context = context or {}
    if kind == "angular":
        if key in _FREQ:
            return TWO_PI * x * _FREQ[key]
        if key in _ANGULAR:
            return x * _ANGULAR[key]
        if key in ("kappa", "omega_t"):
            if key not in context:
                raise ConfigurationError(f"unit {unit!r} is not available here", path)
            return x * context[key]
    elif kind == "freq_hz":
        if key in _FREQ:
            return x * _FREQ[key]
    elif kind == "psd":
        if key in _PSD:
            return x
        if key == "shot":
            if "shot_psd" not in context:
                raise ConfigurationError("unit 'shot' is not available here", path)
            return x * context["shot_psd"]
    elif kind == "energy":
        if key in _ENERGY:
            return x
        if key in _FREQ:
            return x * _FREQ[key] * model.HBAR * TWO_PI
    else:
        table = {"time": _TIME, "rate": _RATE, "length": _LENGTH, "mass": _MASS}.get(kind, {})
        if key in table:
            return x * table[key]
    raise ConfigurationError(f"unknown unit {unit!r} for a {kind} quantity", path)


def _section(data, path, allowed):
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError("expected an object", path)
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown key(s) {unknown}; allowed: {sorted(allowed)}", path)
    return data


def _get(sec, key, kind, path, default=None, context=None):
    if key not in sec or sec[key] is None:
        return default
    p = f"{path}.{key}"
    if kind == "int":
        v = sec[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
            raise ConfigurationError("expected an integer", p)
        return int(v)
    if kind == "bool":
        if not isinstance(sec[key], bool):
            raise ConfigurationError("expected true or false", p)
        return sec[key]
    if kind == "str":
        if not isinstance(sec[key], str):
            raise ConfigurationError("expected a string", p)
        return sec[key]
    return parse_quantity(sec[key], kind, p, context)


# ---------------------------------------------------------------- physics

_PHYS_KEYS = {
    "atom": {"mass": "mass", "linewidth": "angular", "wavelength": "length", "wavenumber": "number"},
    "cavity": {"linewidth": "angular", "cooperativity": "number", "waist": "length", "cooperativity_scale": "number"},
    "trap": {"frequency": "angular", "mixing_rate": "rate", "bath_occupation": "number", "depth": "energy"},
    "ensemble": {"atom_number": "int", "zeta": "number"},
    "probe": {"atom_detuning": "angular", "cavity_detuning": "angular", "intracavity_photons": "number",
              "transmitted_rate": "rate", "scattering_rate": "rate", "detection_efficiency": "number"},
}


FLUX_KEYS = {"intracavity_photons", "transmitted_rate", "scattering_rate"}


def reference_physics_dict():
    """Canonical physics section of the default experimental parameter set."""
    return physics_to_dict(model.reference_physics())


def physics_to_dict(p):
    return {
        "atom": {"mass": p.atom.mass, "linewidth": p.atom.linewidth, "wavenumber": p.atom.wavenumber},
        "cavity": {"linewidth": p.cavity.linewidth, "cooperativity": p.cavity.cooperativity,
                   "waist": p.cavity.waist, "cooperativity_scale": p.cavity.cooperativity_scale},
        "trap": {"frequency": p.trap.frequency, "mixing_rate": p.trap.mixing_rate,
                 "bath_occupation": p.trap.bath_occupation, "depth": p.trap.depth},
        "ensemble": {"atom_number": p.ensemble.atom_number, "zeta": p.ensemble.statistical_zeta},
        "probe": {"atom_detuning": p.probe.atom_detuning, "cavity_detuning": p.probe.cavity_detuning,
                  "intracavity_photons": p.probe.intracavity_photons, "transmitted_rate": p.probe.transmitted_rate,
                  "detection_efficiency": p.probe.detection_efficiency},
    }


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_physics(data, path="physics"):
    """Build a :class:`~cavcool.model.PhysicsConfig` from a physics section.

    With ``"preset": "reference"`` unspecified fields come from the default
    experimental parameter set. A ``scattering_rate`` in ``probe`` sets the
    intracavity photon number and replaces the base photon flux.
    """
    sec = _section(data, path, set(_PHYS_KEYS) | {"preset"})
    preset = sec.get("preset")
    if preset not in (None, "reference"):
        raise ConfigurationError(f"unknown physics preset {preset!r}; expected 'reference'", f"{path}.preset")
    raw = {k: _section(sec.get(k), f"{path}.{k}", _PHYS_KEYS[k]) for k in _PHYS_KEYS}
    base = reference_physics_dict() if preset == "reference" else {k: {} for k in _PHYS_KEYS}
    probe_raw = raw["probe"]
    flux_keys = FLUX_KEYS
    if flux_keys & set(k for k, v in probe_raw.items() if v is not None):
        base["probe"] = {k: v for k, v in base["probe"].items() if k not in flux_keys}

    vals = {}
    for grp, keys in _PHYS_KEYS.items():
        vals[grp] = {}
        for k, kind in keys.items():
            if grp == "probe" and k == "cavity_detuning":
                continue
            if k in raw[grp] and raw[grp][k] is not None:
                vals[grp][k] = _get(raw[grp], k, kind, f"{path}.{grp}")
            else:
                vals[grp][k] = base[grp].get(k)

    def need(grp, k):
        v = vals[grp][k]
        if v is None:
            raise ConfigurationError("required", f"{path}.{grp}.{k}")
        return v

    try:
        at = vals["atom"]
        if at["wavelength"] is not None and "wavelength" in raw["atom"]:
            if "wavenumber" in raw["atom"]:
                raise ConfigurationError("give wavelength or wavenumber, not both", f"{path}.atom")
            k = TWO_PI / at["wavelength"]
        else:
            k = need("atom", "wavenumber")
        atom = model.AtomParams(mass=need("atom", "mass"), linewidth=need("atom", "linewidth"), wavenumber=k)
        cav = vals["cavity"]
        cavity = model.CavityParams(linewidth=need("cavity", "linewidth"),
                                    cooperativity=need("cavity", "cooperativity"), waist=cav["waist"],
                                    cooperativity_scale=1.0 if cav["cooperativity_scale"] is None
                                    else cav["cooperativity_scale"])
        tr = vals["trap"]
        trap = model.TrapParams(frequency=need("trap", "frequency"), mixing_rate=tr["mixing_rate"] or 0.0,
                                bath_occupation=tr["bath_occupation"] or 0.0, depth=tr["depth"])
        zeta = vals["ensemble"]["zeta"]
        ensemble = model.EnsembleConfig(atom_number=need("ensemble", "atom_number"),
                                        statistical_zeta=0.5 if zeta is None else zeta)
        ctx = {"kappa": cavity.linewidth, "omega_t": trap.frequency}
        if "cavity_detuning" in probe_raw and probe_raw["cavity_detuning"] is not None:
            delta = _get(probe_raw, "cavity_detuning", "angular", f"{path}.probe", context=ctx)
        elif base["probe"].get("cavity_detuning") is not None:
            delta = base["probe"]["cavity_detuning"]
        else:
            raise ConfigurationError("required", f"{path}.probe.cavity_detuning")
        pr = vals["probe"]
        flux = {k: pr[k] for k in flux_keys if pr.get(k) is not None}
        if len(flux) != 1:
            raise ConfigurationError("specify exactly one of intracavity_photons / transmitted_rate / "
                                     "scattering_rate", f"{path}.probe")
        photons = pr.get("intracavity_photons")
        if "scattering_rate" in flux:
            photons = model.intracavity_photons_for_scattering_rate(flux["scattering_rate"], atom, cavity,
                                                                    need("probe", "atom_detuning"))
        eff = pr["detection_efficiency"]
        probe = model.ProbeParams(
            atom_detuning=need("probe", "atom_detuning"), cavity_detuning=delta,
            intracavity_photons=photons, transmitted_rate=flux.get("transmitted_rate"),
            detection_efficiency=1.0 if eff is None else eff,
        )
    except ConfigurationError as exc:
        if exc.field and not exc.field.startswith(path):
            raise ConfigurationError(exc.message, f"{path}.{exc.field}") from None
        raise
    return model.PhysicsConfig(atom, cavity, trap, ensemble, probe)


# ---------------------------------------------------------------- scenario

_SIM_KEYS = {"dt": "time", "duration": "time", "scheme": "str", "record_stride": "int",
             "initial_occupation": "number", "sudden_turn_on": "bool", "linearization_cap": "number"}
_NOISE_KEYS = {"mixing_rate": "rate", "bath_occupation": "number", "recoil_factor": "number",
               "laser_linewidth": "angular", "laser_correlation_time": "time", "include_zero_point": "bool"}
_DET_KEYS = {"bin_width": "time", "electronic_noise_psd": "psd", "quantum_efficiency": "number", "mode": "str"}
_RUN_KEYS = {"n_traces": "int", "t_switch": "time", "switch_occupation": "number", "heating_mixing_rate": "rate",
             "background_traces": "int", "save_trajectories": "bool", "burn_in": "time"}
_ANALYSIS_KEYS = {"kind": "str", "window": "time", "readout_fraction": "number", "segment_length": "time",
                  "band_low": "freq_hz", "band_high": "freq_hz", "include_correlation": "bool"}
ANALYSIS_KINDS = ("none", "variance_decay", "spectrum")
_TOP_KEYS = {"name", "seed", "physics", "sim", "noise", "detector", "run", "analysis", "datasets", "output_dir",
             "preset"}


@dataclass(frozen=True)
class RunPlan:
    """How traces are produced for a dataset.

    ``t_switch`` None: a pure run at the configured detuning. A number (s):
    heat at delta = +kappa/2 then cool at -kappa/2. ``switch_occupation``
    instead derives t_switch from the heating growth rate.
    """

    n_traces: int = 1
    t_switch: float | None = None
    switch_occupation: float | None = None
    heating_mixing_rate: float | None = None
    background_traces: int = 0
    save_trajectories: bool = False
    burn_in: float = 0.0

    def __post_init__(self):
        if self.n_traces < 1:
            raise ConfigurationError("must be >= 1", "run.n_traces")
        if self.background_traces < 0:
            raise ConfigurationError("must be >= 0", "run.background_traces")
        if self.t_switch is not None and self.t_switch < 0:
            raise ConfigurationError("must be >= 0", "run.t_switch")
        if self.burn_in < 0:
            raise ConfigurationError("must be >= 0", "run.burn_in")


@dataclass(frozen=True)
class AnalysisPlan:
    kind: str = "none"
    window: float = 2e-6
    readout_fraction: float = 0.2
    segment_length: float = 110e-6
    band_low: float = 20e3
    band_high: float = 1.4e6
    include_correlation: bool = True

    def __post_init__(self):
        if self.kind not in ANALYSIS_KINDS:
            raise ConfigurationError(f"unknown kind {self.kind!r}; expected one of {ANALYSIS_KINDS}",
                                     "analysis.kind")
        if not self.band_high > self.band_low >= 0:
            raise ConfigurationError("need 0 <= band_low < band_high", "analysis.band_low")


@dataclass(frozen=True)
class Dataset:
    """One physical configuration of a scenario with its own trace set."""

    label: str
    physics: model.PhysicsConfig
    sim: SimConfig
    noise: NoiseConfig
    detector: DetectorConfig
    run: RunPlan


@dataclass(frozen=True)
class Scenario:
    name: str
    master_seed: int
    datasets: tuple
    analysis: AnalysisPlan
    output_dir: str | None = None
    source: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def config_hash(self):
        return config_hash(self)


def _dataclass_from(cls, sec, keys, path, context=None, extra=None):
    kwargs = {}
    for k, kind in keys.items():
        v = _get(sec, k, kind, path, context=context)
        if v is not None:
            kwargs[k] = v
    if extra:
        kwargs.update(extra)
    try:
        return cls(**kwargs)
    except ConfigurationError as exc:
        name = exc.field.split(".")[-1] if exc.field else ""
        raise ConfigurationError(exc.message, f"{path}.{name}" if name else path) from None


def _build_dataset(label, spec, path):
    phys = parse_physics(spec.get("physics"), f"{path}.physics")
    d = phys.derive()
    shot = 2.0 / (phys.probe.detection_efficiency * d.transmitted_rate) if d.transmitted_rate > 0 else None
    ctx = {"kappa": phys.cavity.linewidth, "omega_t": phys.trap.frequency}
    if shot is not None:
        ctx["shot_psd"] = shot
    sim = _dataclass_from(SimConfig, _section(spec.get("sim"), f"{path}.sim", _SIM_KEYS), _SIM_KEYS, f"{path}.sim")
    noise = _dataclass_from(NoiseConfig, _section(spec.get("noise"), f"{path}.noise", _NOISE_KEYS), _NOISE_KEYS,
                            f"{path}.noise", ctx)
    det = _dataclass_from(DetectorConfig, _section(spec.get("detector"), f"{path}.detector", _DET_KEYS), _DET_KEYS,
                          f"{path}.detector", ctx)
    run = _dataclass_from(RunPlan, _section(spec.get("run"), f"{path}.run", _RUN_KEYS), _RUN_KEYS, f"{path}.run")
    return Dataset(label, phys, sim, noise, det, run)


def parse(data):
    """Validate a scenario dict (e.g. loaded JSON) into a :class:`Scenario`.

    ``datasets`` is an optional list of objects with a ``label`` and partial
    ``physics``/``sim``/``noise``/``detector``/``run`` overrides merged over
    the top-level sections; without it the scenario has one dataset.
    """
    if not isinstance(data, dict):
        raise ConfigurationError("expected a JSON object", "<root>")
    if "preset" in data:
        from .presets import preset_dict
        base = preset_dict(data["preset"])
        user = {k: v for k, v in data.items() if k != "preset"}
        if "datasets" not in user:
            for ds in base["datasets"]:
                for sec in ("physics", "sim", "noise", "detector", "run"):
                    over = user.get(sec)
                    if not isinstance(over, dict):
                        continue
                    if sec == "physics" and FLUX_KEYS & set((over.get("probe") or {})):
                        ds["physics"]["probe"] = {k: v for k, v in ds["physics"]["probe"].items()
                                                  if k not in FLUX_KEYS}
                    ds[sec] = _merge(ds.get(sec) or {}, over)
            user = {k: v for k, v in user.items() if k not in ("physics", "sim", "noise", "detector", "run")}
        data = _merge(base, user)
    _section(data, "<root>", _TOP_KEYS)
    name = data.get("name", "scenario")
    if not isinstance(name, str):
        raise ConfigurationError("expected a string", "name")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigurationError("expected a non-negative integer", "seed")
    analysis = _dataclass_from(AnalysisPlan, _section(data.get("analysis"), "analysis", _ANALYSIS_KEYS),
                               _ANALYSIS_KEYS, "analysis")
    common = {k: data.get(k) for k in ("physics", "sim", "noise", "detector", "run")}
    specs = data.get("datasets")
    if specs is None:
        datasets = (_build_dataset("main", common, "<root>"),)
    else:
        if not isinstance(specs, list) or not specs:
            raise ConfigurationError("expected a non-empty list", "datasets")
        out, labels = [], set()
        for i, ds in enumerate(specs):
            p = f"datasets[{i}]"
            ds = _section(ds, p, {"label", "physics", "sim", "noise", "detector", "run"})
            label = ds.get("label", f"d{i}")
            if not isinstance(label, str) or not re.fullmatch(r"[A-Za-z0-9_.+-]+", label):
                raise ConfigurationError("labels must be non-empty [A-Za-z0-9_.+-]", f"{p}.label")
            if label in labels:
                raise ConfigurationError(f"duplicate label {label!r}", f"{p}.label")
            labels.add(label)
            merged = {k: _merge(common[k] or {}, ds.get(k)) for k in common}
            out.append(_build_dataset(label, merged, p))
        datasets = tuple(out)
    out_dir = data.get("output_dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigurationError("expected a string", "output_dir")
    return Scenario(name, seed, datasets, analysis, out_dir, source=data)


def load(path):
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON: {exc}", str(path)) from None
    except OSError as exc:
        raise ConfigurationError(f"cannot read config: {exc}", str(path)) from None
    return parse(data)


def _plain(dc):
    return {f.name: getattr(dc, f.name) for f in fields(dc)}


def dataset_to_dict(ds):
    sim = _plain(ds.sim)
    sim.pop("seed")
    return {
        "label": ds.label,
        "physics": physics_to_dict(ds.physics),
        "sim": sim,
        "noise": _plain(ds.noise),
        "detector": _plain(ds.detector),
        "run": _plain(ds.run),
    }


def to_dict(scenario):
    """Canonical form: every field explicit, SI floats, frequencies in rad/s (fit band in Hz)."""
    analysis = _plain(scenario.analysis)
    out = {
        "name": scenario.name,
        "seed": scenario.master_seed,
        "analysis": analysis,
        "datasets": [dataset_to_dict(d) for d in scenario.datasets],
    }
    if scenario.output_dir is not None:
        out["output_dir"] = scenario.output_dir
    return out


def dumps(scenario):
    return json.dumps(to_dict(scenario), sort_keys=True, indent=2)


def config_hash(scenario):
    """Hash of the canonical form without the output directory."""
    d = to_dict(scenario)
    d.pop("output_dir", None)
    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def with_seed(scenario, seed):
    return replace(scenario, master_seed=int(seed))


def save(scenario, path):
    Path(path).write_text(dumps(scenario) + "\n")
    return Path(path)
