import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cavcool import linear, model, scenarios
from cavcool.errors import InstabilityError
from conftest import KAPPA, OMEGA_T, TWO_PI


def test_empty_cavity_spectrum_is_shot_noise():
    lm = linear.build(OMEGA_T, KAPPA, -KAPPA / 2, g0=0.0, photons=50.0)
    freqs = np.linspace(1e3, 3e6, 40)
    np.testing.assert_allclose(linear.photocurrent_spectrum(lm, freqs), 2 / lm.detected_rate, rtol=1e-12)
    assert linear.shot_noise_level(lm) == pytest.approx(2 / lm.detected_rate)


def test_classical_light_adds_shot_noise_term():
    lm = linear.build(OMEGA_T, KAPPA, -KAPPA / 2, g0=0.0, photons=50.0, include_zero_point=False)
    assert lm.classical_shot_noise
    np.testing.assert_allclose(linear.photocurrent_spectrum(lm, [1e5, 1e6]), 2 / lm.detected_rate, rtol=1e-12)


def test_detected_rate():
    lm = linear.build(OMEGA_T, KAPPA, 0.0, g0=0.0, photons=10.0, detection_efficiency=0.4)
    assert lm.detected_rate == pytest.approx(0.4 * 0.5 * KAPPA * 10.0)


@given(nb=st.floats(0.0, 1e3), gm=st.floats(1e3, 1e5))
def test_uncoupled_oscillator_sits_at_bath(nb, gm):
    lm = linear.build(OMEGA_T, KAPPA, -KAPPA / 2, g0=0.0, photons=5.0, mixing_rate=gm, bath_occupation=nb)
    n_e, n_x = linear.occupations(lm)
    assert n_e == pytest.approx(nb, rel=1e-6, abs=1e-9)
    assert n_x == pytest.approx(nb, rel=1e-6, abs=1e-9)
    assert linear.energy_decay_rate(lm) == pytest.approx(gm, rel=1e-9)


def test_weak_coupling_matches_rate_equation():
    phys = model.reference_physics()
    weak = phys.replace(probe=model.ProbeParams(phys.probe.atom_detuning, phys.probe.cavity_detuning, transmitted_rate=1e7))
    d = weak.derive()
    lm = linear.from_physics(weak)
    assert linear.occupations(lm)[0] == pytest.approx(model.equilibrium_occupation(d, weak.trap), rel=0.01)
    assert linear.energy_decay_rate(lm) == pytest.approx(d.gamma_c + weak.trap.mixing_rate, rel=0.01)


def test_reference_configuration_close_to_rate_equation():
    phys = model.reference_physics()
    d = phys.derive()
    lm = linear.from_physics(phys)
    n_e, n_x = linear.occupations(lm)
    assert n_e == pytest.approx(model.equilibrium_occupation(d, phys.trap), rel=0.15)
    assert linear.energy_decay_rate(lm) == pytest.approx(d.gamma_c + phys.trap.mixing_rate, rel=0.1)
    # optical spring softens the trap by a few percent
    assert linear.mechanical_mode(lm).imag == pytest.approx(phys.trap.frequency, rel=0.05)


def test_resolved_sideband_limit_from_linear_model():
    phys = scenarios.detailed_balance_physics()
    n_e, _ = linear.occupations(linear.from_physics(phys, recoil_factor=0))
    assert n_e == pytest.approx(0.25, rel=0.03)


def test_blue_detuning_is_unstable():
    lm = linear.build(OMEGA_T, KAPPA, +KAPPA / 2, g0=2e4, photons=100.0, mixing_rate=1e3)
    assert not lm.is_stable()
    with pytest.raises(InstabilityError):
        linear.steady_state_covariance(lm)


def test_occupation_floor_fig4(fig4_physics):
    n_min, gamma_c = linear.occupation_floor(fig4_physics)
    assert n_min == pytest.approx(1.57235, rel=1e-3)
    assert gamma_c > 0
    assert n_min <= linear.occupations(linear.from_physics(fig4_physics))[1]


def test_laser_noise_calibration(fig4_physics):
    width = linear.calibrate_laser_linewidth(fig4_physics, 0.5)
    assert width > 0
    assert linear.laser_noise_fraction(fig4_physics, width) == pytest.approx(0.5, rel=1e-9)
    assert linear.laser_noise_fraction(fig4_physics, 2 * width) == pytest.approx(1.0, rel=1e-9)


def test_correlation_vanishes_without_vacuum(fig4_physics):
    lm = linear.from_physics(fig4_physics, include_zero_point=False)
    assert linear.correlation_factor(lm, fig4_physics.trap.frequency) == 0


def test_correlation_factor_nonzero_with_vacuum(fig4_physics):
    lm = linear.from_physics(fig4_physics)
    c = linear.correlation_factor(lm, fig4_physics.trap.frequency)
    assert abs(c) > 0 and math.isfinite(abs(c))
