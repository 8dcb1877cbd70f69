"""Command-line interface.

Subcommands::

    cavcool limits    [--config F | --preset P] [--out DIR]
    cavcool simulate  [--config F | --preset P] [--seed S] [--out DIR] [--threads T]
    cavcool analyze   TRACE_DIR [--config F] [--out DIR]
    cavcool reproduce {fig2,fig3,fig4,fig4b} [--seed S] [--out DIR] [--threads T]
    cavcool sweep     --param PATH --values V1,V2,... [--config F | --preset P] [--run] [--out DIR]

Outputs are tidy CSV plus JSON. Each command that writes files finishes by
writing a manifest (config hash, code version, per-trace seeds, file list
with SHA-256 digests, timings, instability flags); its presence marks a
complete run. ``CAVCOOL_OUT`` sets the default output root.

Exit codes: 0 success, 2 configuration error, 3 numerical instability,
4 fit non-convergence.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfg
from . import model, presets, traceio
from . import scenarios as sc
from .errors import ConfigurationError, FitError, InstabilityError, NotApplicableError

log = logging.getLogger("cavcool")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INSTABILITY = 3
EXIT_FIT = 4
OUT_ENV = "CAVCOOL_OUT"
TRACE_SUFFIX = ".trace"


# ---------------------------------------------------------------- output helpers


def default_out(name):
    return Path(os.environ.get(OUT_ENV, "cavcool-out")) / name


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


class OutputDir:
    """Collects the files written by one command and writes its manifest last."""

    def __init__(self, root, command):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.files = []
        self.started = time.perf_counter()
        self.timings = {}

    def path(self, rel):
        p = self.root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(str(Path(rel).as_posix()))
        return p

    def write_json(self, rel, data):
        self.path(rel).write_text(json.dumps(_jsonable(data), sort_keys=True, indent=2) + "\n")

    def write_tables(self, tables):
        for name, rows in tables.items():
            traceio.write_records(self.path(f"{name}.csv"), rows)
            self.write_json(f"{name}.json", rows)

    def write_manifest(self, **fields):
        name = f"manifest_{self.command}.json"
        self.timings["total_s"] = time.perf_counter() - self.started
        manifest = {
            "command": self.command,
            "code_version": __version__,
            "files": [{"path": f, "sha256": sha256(self.root / f)} for f in self.files],
            "timings": self.timings,
            **fields,
        }
        tmp = self.root / (name + ".tmp")
        tmp.write_text(json.dumps(_jsonable(manifest), sort_keys=True, indent=2) + "\n")
        os.replace(tmp, self.root / name)
        return self.root / name


PLOT_STUB = '''"""Plot the tables written by `cavcool {command}` (requires matplotlib)."""

import csv
from pathlib import Path

import matplotlib.pyplot as plt

HERE = Path(__file__).parent


def read(name):
    with open(HERE / f"{{name}}.csv", newline="") as fh:
        return list(csv.DictReader(fh))

{body}
plt.tight_layout()
plt.savefig(HERE / "{name}.png", dpi=150)
'''

_DECAY_BODY = '''
rows = read("{name}_curves")
fig, ax = plt.subplots()
for label in dict.fromkeys(r["label"] for r in rows):
    sel = [r for r in rows if r["label"] == label]
    ax.plot([float(r["t"]) * 1e6 for r in sel], [float(r["occupation"]) for r in sel], label=label)
ax.set_xlabel("t (us)")
ax.set_ylabel("occupation")
ax.set_yscale("log")
ax.legend()
'''

_SPECTRUM_BODY = '''
rows = read("{name}_spectra")
fig, ax = plt.subplots()
for label in dict.fromkeys(r["label"] for r in rows):
    sel = [r for r in rows if r["label"] == label]
    f = [float(r["freq"]) / 1e3 for r in sel]
    ax.plot(f, [float(r["psd"]) for r in sel], ".", ms=2, label=label)
    ax.plot(f, [float(r["model"]) for r in sel], "-")
ax.set_xlabel("frequency (kHz)")
ax.set_ylabel("PSD (1/Hz)")
ax.set_xlim(0, 1400)
ax.legend()
'''

_TABLE_BODY = '''
rows = read("{name}")
keys = [k for k in rows[0] if k != "{x}"]
fig, ax = plt.subplots()
x = [float(r["{x}"]) for r in rows]
for k in ("collective_limit", "bistability_floor", "n0"):
    if k in keys:
        ax.plot(x, [float(r[k]) for r in rows], "o-", label=k)
ax.set_xlabel("{x}")
ax.set_xscale("log")
ax.set_yscale("log")
ax.legend()
'''


def write_plot_stub(out, command, name, kind, x=None):
    body = {"variance_decay": _DECAY_BODY, "spectrum": _SPECTRUM_BODY}.get(kind, _TABLE_BODY)
    body = body.format(name=name, x=x)
    out.path(f"plot_{name}.py").write_text(PLOT_STUB.format(command=command, name=name, body=body))


# ---------------------------------------------------------------- scenario loading


def load_scenario(args):
    """Scenario from --config or --preset, with the --seed override."""
    if getattr(args, "config", None) and getattr(args, "preset", None):
        data = json.loads(Path(args.config).read_text())
        data["preset"] = args.preset
        scenario = cfg.parse(data)
    elif getattr(args, "config", None):
        scenario = cfg.load(args.config)
    elif getattr(args, "preset", None):
        scenario = presets.preset_scenario(args.preset)
    else:
        raise ConfigurationError("give --config or --preset", "<args>")
    if getattr(args, "seed", None) is not None:
        scenario = cfg.with_seed(scenario, args.seed)
    return scenario


def out_root(args, scenario_name):
    if args.out:
        return Path(args.out)
    return default_out(scenario_name)


# ---------------------------------------------------------------- limits and sweep


def limits_record(ds):
    rec = {"label": ds.label, "atom_number": ds.physics.ensemble.atom_number, "eta": ds.physics.cavity.eta}
    rec.update(model.cooling_limits(ds.physics, recoil_factor=ds.noise.recoil_factor).as_record())
    return rec


def cmd_limits(args):
    scenario = load_scenario(args)
    rows = [limits_record(ds) for ds in scenario.datasets]
    for r in rows:
        print(f"{r['label']}: n0 = {r['n0']:.3f}  collective limit = {r['collective_limit']:.3f}  "
              f"D = {r['D']:.3f}  bath limit = {r['bath_limit']:.3f}  "
              + (f"floor = {r['bistability_floor']:.3f} (bound {r['floor_bound']}: "
                 f"{'within 20%' if r['floor_check'] else 'outside 20%'})"
                 if math.isfinite(r["bistability_floor"]) else "floor = n/a (not a cooling configuration)"))
    if args.out:
        out = OutputDir(args.out, "limits")
        out.write_tables({"limits": rows})
        out.write_manifest(config_hash=scenario.config_hash, master_seed=scenario.master_seed, seeds={},
                           flags={})
    return EXIT_OK


def set_path(data, path, value):
    """Set ``data[a][b]...`` for a dotted ``path``; creates intermediate objects."""
    keys = path.split(".")
    cur = data
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
        if not isinstance(cur, dict):
            raise ConfigurationError("not an object", path)
    cur[keys[-1]] = value


def parse_values(text):
    out = []
    for item in text.split(","):
        item = item.strip()
        try:
            v = float(item)
            out.append(int(v) if v.is_integer() and "." not in item and "e" not in item.lower() else v)
        except ValueError:
            out.append(item)
    if not out or out == [""]:
        raise ConfigurationError("no values", "--values")
    return out


def sweep_scenarios(base, param, values):
    """Scenarios with ``param`` (dotted path, e.g. physics.ensemble.atom_number) set to each value.

    The value is applied to every dataset of the canonical base scenario.
    """
    canon = cfg.to_dict(base)
    sec, _, rest = param.partition(".")
    if sec not in ("physics", "sim", "noise", "detector", "run") or not rest:
        raise ConfigurationError("expected <section>.<key>[.<key>] with section physics/sim/noise/detector/run",
                                 "--param")
    out = []
    for v in values:
        data = copy.deepcopy(canon)
        for ds in data["datasets"]:
            if sec == "physics" and rest.split(".")[-1] in cfg.FLUX_KEYS:
                ds["physics"]["probe"] = {k: x for k, x in ds["physics"]["probe"].items() if k not in cfg.FLUX_KEYS}
            set_path(ds[sec], rest, v)
        out.append(cfg.parse(data))
    return out


def cmd_sweep(args):
    base = load_scenario(args)
    values = parse_values(args.values)
    scenarios = sweep_scenarios(base, args.param, values)
    rows, seeds, flags, errors = [], {}, {}, []
    out = OutputDir(out_root(args, f"{base.name}_sweep"), "sweep") if (args.out or args.run) else None
    exit_code = EXIT_OK
    for i, (v, scen) in enumerate(zip(values, scenarios)):
        for ds in scen.datasets:
            rec = {args.param: v, **limits_record(ds)}
            rows.append(rec)
        if args.run:
            t0 = time.perf_counter()
            try:
                res = sc.run_scenario(scen, workers=args.threads)
            except (FitError, NotApplicableError) as exc:
                errors.append({"value": v, "error": str(exc)})
                exit_code = EXIT_FIT
                continue
            out.timings[f"{args.param}={v}"] = time.perf_counter() - t0
            for run, r in zip(res.runs, res.results):
                key = f"{v}/{run.label}"
                seeds[key] = run.seeds
                flags[key] = run.flags
                row = next(x for x in rows if x[args.param] == v and x["label"] == run.label)
                if r is not None:
                    row.update({f"fit_{k}": x for k, x in r.row().items() if k != "label"})
                if run.flags["unstable"]:
                    exit_code = max(exit_code, EXIT_INSTABILITY)
    for r in rows:
        print(f"{args.param} = {r[args.param]}  [{r['label']}]  collective limit = {r['collective_limit']:.4g}"
              + (f"  fitted rate = {r['fit_rate']:.4g}" if "fit_rate" in r else "")
              + (f"  fitted n = {r['fit_occupation']:.4g}" if "fit_occupation" in r else ""))
    if out is not None:
        name = "sweep"
        out.write_tables({name: rows})
        write_plot_stub(out, "sweep", name, "table", x=args.param)
        out.write_manifest(config_hash=base.config_hash, master_seed=base.master_seed, seeds=seeds, flags=flags,
                           errors=errors, param=args.param, values=values)
    return exit_code


# ---------------------------------------------------------------- simulate and analyze


def trace_path(label, kind, i):
    return f"traces/{label}/{kind}_{i:04d}{TRACE_SUFFIX}"


def cmd_simulate(args):
    scenario = load_scenario(args)
    out = OutputDir(out_root(args, scenario.name), "simulate")
    chash = scenario.config_hash
    out.path("scenario.json").write_text(cfg.dumps(scenario) + "\n")
    seeds, flags, switches = {}, {}, {}
    for i, ds in enumerate(scenario.datasets):
        t0 = time.perf_counter()
        run = sc.simulate_dataset(ds, scenario.master_seed, i, workers=args.threads)
        out.timings[ds.label] = time.perf_counter() - t0
        seeds[ds.label] = run.seeds
        if run.background_seeds:
            seeds[f"{ds.label}/background"] = run.background_seeds
        flags[ds.label] = run.flags
        switches[ds.label] = run.t_switch
        for k, pc in enumerate(run.photocurrents):
            traceio.write_photocurrent(out.path(trace_path(ds.label, "photocurrent", k)), pc, chash)
        for k, pc in enumerate(run.background):
            traceio.write_photocurrent(out.path(trace_path(ds.label, "background", k)), pc, chash)
        if ds.run.save_trajectories:
            for k, tr in enumerate(run.trajectories):
                traceio.write_trajectory(out.path(trace_path(ds.label, "trajectory", k)), tr, chash)
        log.info("%s: %d traces in %.1f s", ds.label, len(run.photocurrents), out.timings[ds.label])
    out.write_manifest(config_hash=chash, master_seed=scenario.master_seed, seeds=seeds, flags=flags,
                       t_switch=switches, scenario=scenario.name)
    print(f"wrote {len(out.files)} files to {out.root}")
    unstable = any(f["unstable"] for f in flags.values())
    return EXIT_INSTABILITY if unstable else EXIT_OK


def _read_traces(root, label, kind):
    d = Path(root) / "traces" / label
    return sorted(d.glob(f"{kind}_*{TRACE_SUFFIX}"))


def load_dataset_run(root, ds, index, manifest):
    """Rebuild a :class:`~cavcool.scenarios.DatasetRun` from files written by ``simulate``."""
    pcs = [traceio.read_photocurrent(p) for p in _read_traces(root, ds.label, "photocurrent")]
    if not pcs:
        raise NotApplicableError(f"no photocurrent traces for dataset {ds.label!r}")
    bg = [traceio.read_photocurrent(p) for p in _read_traces(root, ds.label, "background")]
    trs = [traceio.read_trajectory(p) for p in _read_traces(root, ds.label, "trajectory")]
    t_sw = manifest.get("t_switch", {}).get(ds.label, sc.resolve_t_switch(ds))
    flags = manifest.get("flags", {}).get(ds.label) or sc.trajectory_flags(trs)
    return sc.DatasetRun(ds.label, index, [pc.seed for pc in pcs], [pc.seed for pc in bg], t_sw, flags, trs, pcs,
                         bg)


def cmd_analyze(args):
    root = Path(args.traces)
    manifest_path = root / "manifest_simulate.json"
    if not manifest_path.exists():
        raise ConfigurationError("no manifest_simulate.json; run `cavcool simulate` first or wait for it to finish",
                                 str(root))
    manifest = json.loads(manifest_path.read_text())
    if args.config or args.preset:
        scenario = load_scenario(args)
    else:
        scenario = cfg.load(root / "scenario.json")
    if scenario.config_hash != manifest.get("config_hash"):
        msg = (f"config hash {scenario.config_hash} differs from the trace set ({manifest.get('config_hash')}); "
               "analyzing anyway")
        log.warning(msg)
        print(f"warning: {msg}", file=sys.stderr)
    out = OutputDir(Path(args.out) if args.out else root / "analysis", "analyze")
    runs, results, errors = [], [], []
    for i, ds in enumerate(scenario.datasets):
        t0 = time.perf_counter()
        try:
            run = load_dataset_run(root, ds, i, manifest)
            res = sc.analyze_dataset(ds, run, scenario.analysis)
        except (FitError, NotApplicableError, InstabilityError, traceio.TraceFormatError, ValueError) as exc:
            errors.append({"label": ds.label, "error": f"{type(exc).__name__}: {exc}"})
            print(f"error in {ds.label}: {exc}", file=sys.stderr)
            continue
        out.timings[ds.label] = time.perf_counter() - t0
        run.trajectories, run.photocurrents, run.background = [], [], []
        runs.append(run)
        results.append(res)
    result = sc.ScenarioResult(scenario, runs, results, sc.summarize(scenario, results))
    finish_analysis(out, "analyze", result, errors, manifest.get("seeds", {}))
    return EXIT_FIT if errors else EXIT_OK


def finish_analysis(out, command, result, errors, seeds):
    scenario = result.scenario
    tables = result.tables()
    out.write_tables(tables)
    if errors:
        out.write_json("errors.json", errors)
    if tables:
        write_plot_stub(out, command, scenario.name, scenario.analysis.kind)
    flags = {r.label: r.flags for r in result.runs}
    out.write_manifest(config_hash=scenario.config_hash, master_seed=scenario.master_seed, seeds=seeds, flags=flags,
                       errors=errors, scenario=scenario.name)
    print_summary(result)
    print(f"wrote {len(out.files)} files to {out.root}")


def print_summary(result):
    for r in result.results:
        if isinstance(r, sc.DecayDataset):
            print(f"{r.label}: gamma_exp = {r.rate:.4g} +- {r.rate_err:.2g} /s "
                  f"(gamma_c + gamma_m = {r.predicted_rate:.4g} /s)")
        elif isinstance(r, sc.SpectrumDataset):
            f = r.fit
            print(f"{r.label}: n = {f.occupation:.3g} (+{f.occupation_ci[1] - f.occupation:.2g} "
                  f"-{f.occupation - f.occupation_ci[0]:.2g}), gamma_tot = {f.gamma_tot:.3g} /s")
    s = result.summary
    if s is not None:
        print(f"f(N)/N = {s.slope_per_atom:.3g} +- {s.slope_per_atom_err:.2g}; "
              f"gamma_m = {s.pooled_mixing_rate:.3g} +- {s.pooled_mixing_rate_err:.2g} /s")


def cmd_reproduce(args):
    args.preset = args.figure
    scenario = load_scenario(args)
    out = OutputDir(out_root(args, args.figure), "reproduce")
    out.path("scenario.json").write_text(cfg.dumps(scenario) + "\n")
    t0 = time.perf_counter()
    result = sc.run_scenario(scenario, workers=args.threads)
    out.timings["run_s"] = time.perf_counter() - t0
    finish_analysis(out, "reproduce", result, [], result.seeds)
    unstable = any(r.flags["unstable"] for r in result.runs)
    return EXIT_INSTABILITY if unstable else EXIT_OK


# ---------------------------------------------------------------- entry point


def build_parser():
    p = argparse.ArgumentParser(prog="cavcool", description="Collective cavity cooling: limits, simulation, "
                                                            "thermometry and figure reproduction.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(q, seed=True, threads=True):
        q.add_argument("--config", help="scenario JSON file")
        q.add_argument("--preset", choices=presets.names(), help="built-in scenario (a --config merges over it)")
        if seed:
            q.add_argument("--seed", type=int, help="master seed override")
        if threads:
            q.add_argument("--threads", type=int, default=1, help="worker threads for trace batches")
        q.add_argument("--out", help=f"output directory (default ${OUT_ENV}/<name> or ./cavcool-out/<name>)")

    q = sub.add_parser("limits", help="cooling limits and threshold checks")
    scenario_args(q, seed=False, threads=False)
    q.set_defaults(func=cmd_limits)

    q = sub.add_parser("simulate", help="simulate traces and write trace files")
    scenario_args(q)
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("analyze", help="run the analysis plan over a simulated trace set")
    q.add_argument("traces", help="directory written by `cavcool simulate`")
    q.add_argument("--config", help="scenario JSON (default: the trace set's scenario.json)")
    q.add_argument("--preset", choices=presets.names())
    q.add_argument("--out", help="output directory (default TRACES/analysis)")
    q.set_defaults(func=cmd_analyze)

    q = sub.add_parser("reproduce", help="simulate and analyze a figure preset")
    q.add_argument("figure", choices=presets.names())
    q.add_argument("--seed", type=int, help="master seed override")
    q.add_argument("--threads", type=int, default=1)
    q.add_argument("--out")
    q.set_defaults(func=cmd_reproduce, config=None)

    q = sub.add_parser("sweep", help="vary one parameter; limits for each value, optionally full runs")
    scenario_args(q)
    q.add_argument("--param", required=True, help="dotted path, e.g. physics.ensemble.atom_number")
    q.add_argument("--values", required=True, help="comma-separated values (numbers or quantity strings)")
    q.add_argument("--run", action="store_true", help="also simulate and analyze each value")
    q.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InstabilityError as exc:
        print(f"numerical instability: {exc}", file=sys.stderr)
        return EXIT_INSTABILITY
    except FitError as exc:
        print(f"fit did not converge: {exc}", file=sys.stderr)
        return EXIT_FIT


if __name__ == "__main__":
    sys.exit(main())
