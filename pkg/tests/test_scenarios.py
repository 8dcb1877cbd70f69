import math

import numpy as np
import pytest

from cavcool import config as cfg, linear, scenarios as sc
from conftest import OMEGA_T

pytestmark = pytest.mark.filterwarnings("ignore:Lamb-Dicke")


def test_fig2_sinusoid_agrees_with_variance_rate(fig2_result):
    # the oscillating mean photocurrent decays at the same rate as the variance
    for r, ds in zip(fig2_result.results[:3], fig2_result.scenario.datasets):
        assert r.sinusoid_rate == pytest.approx(r.rate, rel=0.3), r.label
        # optical spring pulls the oscillation below the bare trap frequency
        mode = linear.mechanical_mode(linear.from_physics(ds.physics)).imag
        assert r.sinusoid_frequency == pytest.approx(mode, rel=0.02), r.label
        assert r.sinusoid_frequency < OMEGA_T


def test_fig2_switch_precedes_fit_start(fig2_result):
    for r in fig2_result.results:
        assert 0 < r.t_switch < r.fit_start
        assert r.occupation[0] < r.occupation[np.searchsorted(r.t, r.t_switch) - 1]


def test_fig2_tables(fig2_result):
    tables = fig2_result.tables()
    assert set(tables) == {"fig2_rates", "fig2_curves"}
    assert len(tables["fig2_rates"]) == 4
    assert {"capped", "unstable"} <= set(tables["fig2_rates"][0])


def test_fig3_group_intercepts(fig3_result):
    s = fig3_result.summary
    assert [g["atom_number"] for g in s.group_fits] == [700, 2800, 8000]
    for g in s.group_fits:
        assert abs(g["intercept"] - 1.6e5) < 3 * g["intercept_err"], g
    assert set(fig3_result.tables()) == {"fig3_rates", "fig3_curves", "fig3_group_fits", "fig3_summary"}


def test_fig3_predicted_rate_depends_on_n_eta_gsc_only(fig3_result):
    by = {(r.atom_number, round(r.eta_gamma_sc * r.atom_number)): r.predicted_rate for r in fig3_result.results}
    # equal N * eta * Gamma_sc gives equal cooling rates across groups
    assert by[(2800, round(8120 * 2800))] == pytest.approx(by[(700, round(32480 * 700))], rel=1e-6)


def test_fig4_sides(fig4_result):
    cool, heat = fig4_result.by_label("cooling"), fig4_result.by_label("heating")
    assert heat.fit.occupation > cool.fit.occupation
    assert heat.fit.peak_area > cool.fit.peak_area
    assert heat.dip_depth < cool.dip_depth
    for r in (cool, heat):
        assert r.fit.occupation == pytest.approx(r.injected_occupation, rel=0.4)
        assert r.linear_occupation == pytest.approx(r.injected_occupation, rel=0.1)
        assert r.fit.mechanical_frequency == pytest.approx(OMEGA_T, rel=0.06)


def test_fig4_cooling_rate(fig4_result):
    cool = fig4_result.by_label("cooling")
    ds = fig4_result.scenario.datasets[0]
    d = ds.physics.derive()
    assert cool.fit.gamma_tot == pytest.approx(d.gamma_c + ds.physics.trap.mixing_rate, rel=0.15)


def test_fig4_spectrum_rows(fig4_result):
    rows = fig4_result.by_label("cooling").spectrum_rows()
    assert rows and set(rows[0]) == {"label", "freq", "psd", "model", "background"}
    assert all(r["freq"] > 0 for r in rows)


def test_fig4_seeds_recorded(fig4_result):
    seeds = fig4_result.seeds
    assert set(seeds) == {"cooling", "heating"}
    assert len(seeds["cooling"]) == 150
    assert not set(seeds["cooling"]) & set(seeds["heating"])


def test_presets_parse():
    for name in ("fig2", "fig3", "fig4"):
        scen = sc.PRESETS[name]()
        assert scen.name == name
        assert scen.analysis.kind in cfg.ANALYSIS_KINDS


def test_fig2_switch_time_reaches_target():
    scen = sc.fig2_scenario()
    ds = scen.datasets[0]
    assert ds.run.t_switch > 0
    assert ds.detector.mode == "quantum"


def test_linear_readout_bound_scales():
    assert sc.linear_readout_bound(1e3, 1e6, 0.2) == pytest.approx(4 * sc.linear_readout_bound(1e3, 1e6, 0.1))


def test_small_fig2_plan_runs_fast():
    plan = sc.Fig2Plan(scattering_rates=(2.3e5,), n_traces=3, background_traces=1)
    res = sc.run_fig2(plan, master_seed=3)
    r = res.results[0]
    assert math.isfinite(r.rate) and r.rate > 0
    assert res.summary is None
