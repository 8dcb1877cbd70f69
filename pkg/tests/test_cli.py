import hashlib
import json
import shutil
from pathlib import Path

import pytest

from cavcool import cli, config

pytestmark = pytest.mark.filterwarnings("ignore:Lamb-Dicke")

SMALL = {
    "preset": "fig4",
    "run": {"n_traces": 2, "burn_in": "2 us"},
    "sim": {"duration": "42 us"},
    "analysis": {"segment_length": "10 us"},
}

BLUE = {
    "name": "blue",
    "physics": {
        "preset": "reference",
        "ensemble": {"atom_number": 2800},
        "trap": {"mixing_rate": 1e4},
        "probe": {"atom_detuning": "140 MHz", "scattering_rate": 3.4e5, "cavity_detuning": "0.5 kappa"},
    },
    "sim": {"dt": "5 ns", "duration": "60 us"},
}


@pytest.fixture(autouse=True)
def out_root(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "out"))
    monkeypatch.chdir(tmp_path)
    return tmp_path


def write_config(path, data):
    path.write_text(json.dumps(data))
    return str(path)


def digests(root):
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(Path(root).rglob("*")) if p.is_file()}


def manifest_files(root):
    listed = []
    for m in Path(root).rglob("manifest_*.json"):
        base = m.parent
        for f in json.loads(m.read_text())["files"]:
            listed.append((base / f["path"]).resolve())
    return listed


def test_limits_output(capsys):
    assert cli.main(["limits", "--preset", "fig4"]) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "n0 = 0.277" in out
    assert "floor = 1.572" in out and "within 20%" in out


def test_limits_writes_manifest(out_root):
    assert cli.main(["limits", "--preset", "fig4", "--out", "lim"]) == 0
    m = json.loads((out_root / "lim" / "manifest_limits.json").read_text())
    assert {f["path"] for f in m["files"]} >= {"limits.csv", "limits.json"}


@pytest.mark.parametrize(
    "argv",
    [
        ["limits"],
        ["limits", "--config", "missing.json"],
        ["limits", "--config", "bad.json"],
        ["sweep", "--preset", "fig4", "--param", "nowhere.x", "--values", "1"],
        ["analyze", "empty_dir"],
    ],
)
def test_configuration_errors_exit_2(argv, out_root, capsys):
    (out_root / "bad.json").write_text(json.dumps({"physics": {"preset": "reference", "trap": {"frequncy": 1}}}))
    (out_root / "empty_dir").mkdir()
    assert cli.main(argv) == cli.EXIT_CONFIG
    assert "configuration error" in capsys.readouterr().err


def test_unstable_run_exits_3(out_root):
    cfg = write_config(out_root / "blue.json", BLUE)
    assert cli.main(["simulate", "--config", cfg, "--out", "b"]) == cli.EXIT_INSTABILITY
    m = json.loads((out_root / "b" / "manifest_simulate.json").read_text())
    assert m["flags"]["main"]["unstable"]


def test_failed_analysis_exits_4(out_root):
    cfg = write_config(out_root / "small.json", SMALL)
    assert cli.main(["simulate", "--config", cfg, "--out", "s"]) == 0
    shutil.rmtree(out_root / "s" / "traces" / "heating")
    assert cli.main(["analyze", "s"]) == cli.EXIT_FIT
    errors = json.loads((out_root / "s" / "analysis" / "errors.json").read_text())
    assert [e["label"] for e in errors] == ["heating"]


def test_simulate_is_deterministic(out_root):
    cfg = write_config(out_root / "small.json", SMALL)
    assert cli.main(["simulate", "--config", cfg, "--out", "a"]) == 0
    assert cli.main(["simulate", "--config", cfg, "--out", "b"]) == 0
    traces = lambda d: {k: v for k, v in digests(out_root / d).items() if k.endswith(cli.TRACE_SUFFIX)}
    assert traces("a") and traces("a") == traces("b")
    assert cli.main(["simulate", "--config", cfg, "--seed", "9", "--out", "c"]) == 0
    assert traces("c") != traces("a")


def test_analyze_reruns_identical_and_manifests_complete(out_root):
    cfg = write_config(out_root / "small.json", SMALL)
    assert cli.main(["simulate", "--config", cfg, "--out", "s"]) == 0
    assert cli.main(["analyze", "s", "--out", "a1"]) == 0
    assert cli.main(["analyze", "s", "--out", "a2"]) == 0
    strip = lambda d: {k: v for k, v in digests(out_root / d).items() if not k.startswith("manifest")}
    assert strip("a1") == strip("a2")
    for root in ("s", "a1"):
        files = {p.resolve() for p in (out_root / root).rglob("*") if p.is_file() and not p.name.startswith("manifest")}
        listed = manifest_files(out_root / root)
        assert sorted(listed) == sorted(set(listed))
        assert files == set(listed)


def test_manifest_records_seeds_and_hash(out_root):
    cfg = write_config(out_root / "small.json", SMALL)
    assert cli.main(["simulate", "--config", cfg, "--out", "s"]) == 0
    m = json.loads((out_root / "s" / "manifest_simulate.json").read_text())
    assert len(m["seeds"]["cooling"]) == 2
    assert m["config_hash"] == config.load(out_root / "s" / "scenario.json").config_hash
    for f in m["files"]:
        assert hashlib.sha256((out_root / "s" / f["path"]).read_bytes()).hexdigest() == f["sha256"]


def test_default_output_root(out_root):
    cfg = write_config(out_root / "small.json", SMALL)
    assert cli.main(["simulate", "--config", cfg]) == 0
    assert (out_root / "out" / "fig4" / "manifest_simulate.json").exists()


def test_sweep_atom_number_monotone(capsys):
    assert cli.main(["sweep", "--preset", "fig4", "--param", "physics.ensemble.atom_number",
                     "--values", "100,450,2000"]) == 0
    lines = [line for line in capsys.readouterr().out.splitlines() if "[cooling]" in line]
    limits = [float(line.split("collective limit = ")[1].split()[0]) for line in lines]
    assert len(limits) == 3
    assert limits[0] > limits[1] > limits[2]


def test_sweep_run_writes_fit_columns(out_root):
    cfg = write_config(out_root / "small.json", SMALL)
    assert cli.main(["sweep", "--config", cfg, "--param", "run.n_traces", "--values", "1,2", "--run",
                     "--out", "sw"]) == 0
    rows = json.loads((out_root / "sw" / "sweep.json").read_text())
    assert len(rows) == 4
    assert all("fit_occupation" in r for r in rows)


def test_reproduce_writes_outputs(out_root, monkeypatch):
    from cavcool import scenarios

    small = scenarios.Fig4Plan(n_traces=2, duration=40e-6, segment_length=10e-6, burn_in=2e-6)
    monkeypatch.setitem(scenarios.PRESETS, "fig4", lambda master_seed=0: scenarios.fig4_scenario(small, master_seed))
    assert cli.main(["reproduce", "fig4", "--out", "r"]) == 0
    names = {p.name for p in (out_root / "r").iterdir()}
    assert {"fig4_fits.csv", "fig4_spectra.csv", "plot_fig4.py", "manifest_reproduce.json", "scenario.json"} <= names
