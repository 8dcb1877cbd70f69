import json
import math

import pytest

from cavcool import config as cfg, model, presets
from cavcool.errors import ConfigurationError
from conftest import TWO_PI


@pytest.mark.parametrize(
    "value, kind, expected",
    [
        ("1.01 MHz", "angular", TWO_PI * 1.01e6),
        ("480 kHz", "angular", TWO_PI * 480e3),
        ("2e6 rad/s", "angular", 2e6),
        ("100 ns", "time", 100e-9),
        ("2 us", "time", 2e-6),
        ("2 µs", "time", 2e-6),
        ("1.6e5 /s", "rate", 1.6e5),
        ("87 amu", "mass", 87 * model.AMU),
        ("780 nm", "length", 780e-9),
        (3.5, "rate", 3.5),
        ("1e-9 1/Hz", "psd", 1e-9),
    ],
)
def test_parse_quantity(value, kind, expected):
    assert cfg.parse_quantity(value, kind) == pytest.approx(expected)


def test_relative_units():
    ctx = {"kappa": 10.0, "omega_t": 3.0, "shot_psd": 1e-9}
    assert cfg.parse_quantity("-0.5 kappa", "angular", context=ctx) == -5.0
    assert cfg.parse_quantity("-1 omega_t", "angular", context=ctx) == -3.0
    assert cfg.parse_quantity("2 shot", "psd", context=ctx) == 2e-9


@pytest.mark.parametrize(
    "value, kind",
    [("5 parsec", "time"), ("abc", "rate"), (True, "rate"), ([1], "rate"), ("nan", "rate"),
     ("inf s", "time"), ("1 kappa", "angular"), ("1 shot", "psd")],
)
def test_parse_quantity_rejects(value, kind):
    with pytest.raises(ConfigurationError):
        cfg.parse_quantity(value, kind)


def test_unknown_key_names_field():
    with pytest.raises(ConfigurationError) as info:
        cfg.parse({"physics": {"preset": "reference", "trap": {"frequncy": "480 kHz"}}})
    assert "frequncy" in str(info.value)
    assert "physics.trap" in str(info.value)


def test_unknown_top_level_key():
    with pytest.raises(ConfigurationError):
        cfg.parse({"physics": {"preset": "reference"}, "bogus": 1})


def test_reference_preset_physics():
    sc = cfg.parse({"physics": {"preset": "reference"}})
    assert sc.datasets[0].physics.derive().g0 == pytest.approx(model.reference_physics().derive().g0)


def test_flux_override_replaces_base_flux():
    sc = cfg.parse({"physics": {"preset": "reference", "probe": {"scattering_rate": 1e5}}})
    phys = sc.datasets[0].physics
    assert phys.probe.transmitted_rate is None
    assert phys.derive().gamma_sc == pytest.approx(1e5, rel=1e-9)
    assert cfg.FLUX_KEYS == {"intracavity_photons", "transmitted_rate", "scattering_rate"}


def test_two_fluxes_rejected():
    with pytest.raises(ConfigurationError):
        cfg.parse({"physics": {"preset": "reference", "probe": {"scattering_rate": 1e5, "intracavity_photons": 3}}})


def test_missing_required_field():
    with pytest.raises(ConfigurationError) as info:
        cfg.parse({"physics": {"atom": {"mass": "87 amu"}}})
    assert "physics" in info.value.field


@pytest.mark.parametrize("name", presets.names())
def test_round_trip_is_idempotent(name):
    sc = presets.preset_scenario(name, master_seed=7)
    text = cfg.dumps(sc)
    again = cfg.parse(json.loads(text))
    assert cfg.dumps(again) == text
    assert again.config_hash == sc.config_hash


def test_save_and_load(tmp_path):
    sc = presets.preset_scenario("fig4")
    path = cfg.save(sc, tmp_path / "s.json")
    assert cfg.load(path).config_hash == sc.config_hash


def test_load_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError):
        cfg.load(bad)
    with pytest.raises(ConfigurationError):
        cfg.load(tmp_path / "missing.json")


def test_preset_merge_overrides_one_field():
    sc = cfg.parse({"preset": "fig4", "run": {"n_traces": 3}})
    base = presets.preset_scenario("fig4")
    assert all(ds.run.n_traces == 3 for ds in sc.datasets)
    assert [ds.label for ds in sc.datasets] == [ds.label for ds in base.datasets]
    assert sc.datasets[0].physics == base.datasets[0].physics


def test_unknown_preset():
    with pytest.raises(ConfigurationError):
        presets.preset_scenario("fig9")


def test_seed_changes_hash_output_dir_does_not():
    sc = presets.preset_scenario("fig4")
    assert cfg.with_seed(sc, 1).config_hash != sc.config_hash
    from dataclasses import replace
    assert replace(sc, output_dir="/elsewhere").config_hash == sc.config_hash


def test_datasets_merge_and_labels():
    data = {
        "physics": {"preset": "reference"},
        "run": {"n_traces": 2},
        "datasets": [{"label": "a"}, {"label": "b", "run": {"n_traces": 5}}],
    }
    sc = cfg.parse(data)
    assert [d.run.n_traces for d in sc.datasets] == [2, 5]
    data["datasets"][1]["label"] = "a"
    with pytest.raises(ConfigurationError):
        cfg.parse(data)


@pytest.mark.parametrize(
    "section", [{"run": {"n_traces": 0}}, {"analysis": {"kind": "magic"}}, {"seed": -1}, {"run": {"n_traces": 1.5}}]
)
def test_invalid_values(section):
    with pytest.raises(ConfigurationError):
        cfg.parse({"physics": {"preset": "reference"}, **section})


def test_detuning_in_kappa_units():
    sc = cfg.parse({"physics": {"preset": "reference", "probe": {"cavity_detuning": "-0.5 kappa"}}})
    phys = sc.datasets[0].physics
    assert phys.probe.cavity_detuning == pytest.approx(-phys.cavity.linewidth / 2)
    assert math.isfinite(phys.derive().gamma_c)
