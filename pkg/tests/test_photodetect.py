import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cavcool import dynamics, model, photodetect as pd
from cavcool.analysis.spectra import welch_psd
from cavcool.dynamics import NoiseConfig, SimConfig, Trajectory
from cavcool.errors import ConfigurationError

R_BAR = 1.2e9


def constant_trajectory(rate, n, period=20e-9, t0=0.0, seed=1):
    z = np.zeros(n + 1)
    return Trajectory(
        t=t0 + np.arange(n + 1) * period, X=z, P=z, photons=z, rate=np.full(n + 1, float(rate)),
        vacuum_counts=None, sample_period=period, seed=seed, X0=1.0, P0=1.0, omega_t=1.0, zero_point=0.0,
    )


def test_poisson_mean():
    tr = constant_trajectory(5e7, 200_000)
    out = pd.detect(tr, pd.DetectorConfig(bin_width=20e-9, mode="poisson"), seed=3)
    mu = 5e7 * 20e-9
    assert out.mode == "poisson"
    assert np.all(out.counts >= 0)
    assert abs(out.counts.mean() - mu) < 4 * math.sqrt(mu / len(out))


@pytest.mark.parametrize("mode", ["poisson", "gaussian"])
def test_shot_noise_at_reference_rate(mode):
    tr = constant_trajectory(R_BAR, 400_000, period=20e-9)
    out = pd.detect(tr, pd.DetectorConfig(bin_width=2e-6, mode=mode), seed=5)
    assert out.counts.mean() == pytest.approx(2400, rel=4 / math.sqrt(2400 * len(out)))
    frac_var = np.var(out.counts) / out.counts.mean() ** 2
    assert frac_var == pytest.approx(1 / 2400, rel=4 * math.sqrt(2 / len(out)))
    assert 1 / 2400 == pytest.approx(4.2e-4, rel=0.01)


def test_quantum_efficiency_thinning():
    tr = constant_trajectory(R_BAR, 2_000_000, period=20e-9)
    full = pd.detect(tr, pd.DetectorConfig(bin_width=100e-9, mode="poisson"), seed=9)
    half = pd.detect(tr, pd.DetectorConfig(bin_width=100e-9, mode="poisson", quantum_efficiency=0.5), seed=9)
    tol = 4 * math.sqrt(2 / len(full))
    assert half.counts.mean() / full.counts.mean() == pytest.approx(0.5, rel=0.01)
    fv_full = np.var(full.counts) / full.counts.mean() ** 2
    fv_half = np.var(half.counts) / half.counts.mean() ** 2
    assert fv_half / fv_full == pytest.approx(2.0, rel=2 * tol)


def test_poisson_and_gaussian_moments_agree():
    tr = constant_trajectory(4e9, 400_000, period=20e-9)
    cfg = dict(bin_width=20e-9)
    p = pd.detect(tr, pd.DetectorConfig(mode="poisson", **cfg), seed=2).counts
    g = pd.detect(tr, pd.DetectorConfig(mode="gaussian", **cfg), seed=2).counts
    n = len(p)
    assert p.mean() > 50
    assert abs(p.mean() - g.mean()) < 4 * math.sqrt(2 * p.mean() / n)
    assert np.var(g) / np.var(p) == pytest.approx(1.0, abs=4 * math.sqrt(4 / n))


def test_auto_mode_threshold():
    low = pd.detect(constant_trajectory(1e8, 1000), pd.DetectorConfig(bin_width=20e-9))
    high = pd.detect(constant_trajectory(1e10, 1000), pd.DetectorConfig(bin_width=20e-9))
    assert low.mode == "poisson"
    assert high.mode == "gaussian"


def test_time_shift_commutes():
    rate = 1e9 * (1 + 0.2 * np.sin(np.arange(20_001) * 0.01))
    a = constant_trajectory(0, 20_000)
    a.rate = rate
    b = constant_trajectory(0, 20_000, t0=3.7e-3)
    b.rate = rate
    cfg = pd.DetectorConfig(bin_width=100e-9, mode="poisson")
    da, db = pd.detect(a, cfg, seed=4), pd.detect(b, cfg, seed=4)
    np.testing.assert_array_equal(da.counts, db.counts)
    np.testing.assert_allclose(db.t - da.t, 3.7e-3, rtol=0, atol=1e-15)


def test_spectral_flatness():
    tr = constant_trajectory(R_BAR, 2_000_000, period=20e-9)
    psd_e = 2 * pd.shot_noise_psd(R_BAR)
    out = pd.detect(tr, pd.DetectorConfig(bin_width=100e-9, mode="gaussian", electronic_noise_psd=psd_e), seed=8)
    spec = welch_psd(out, 20e-6)
    level = pd.shot_noise_psd(R_BAR) + psd_e
    # DC, the first bin (mean removal under the window) and Nyquist are excluded
    band = slice(2, -1)
    assert np.mean(spec.psd[band]) == pytest.approx(level, rel=0.01)
    # per-bin scatter matches the chi-square estimator error
    rel_err = 1 / math.sqrt(spec.dof / 2)
    assert np.std(spec.psd[band] / level) == pytest.approx(rel_err, rel=0.25)
    halves = np.array_split(spec.psd[band], 4)
    for h in halves:
        assert np.mean(h) == pytest.approx(level, rel=0.03)


def test_electronic_noise_zero_is_identity():
    out = pd.detect(constant_trajectory(R_BAR, 1000), pd.DetectorConfig(mode="gaussian"), seed=1)
    assert pd.add_electronic_noise(out, 0.0) is out


@given(psd=st.floats(1e-10, 1e-7))
def test_electronic_noise_variance_additivity(psd):
    base = pd.detect(constant_trajectory(R_BAR, 100_000), pd.DetectorConfig(bin_width=20e-9, mode="gaussian"), seed=1)
    noisy = pd.add_electronic_noise(base, psd, np.random.default_rng(7))
    added = np.var(noisy.fractional()) - np.var(base.fractional())
    expected = psd / (2 * base.bin_width)
    n = len(base)
    tol = 5 * math.sqrt(2 / n) * (expected + np.var(base.fractional()))
    assert abs(added - expected) < tol


def test_electronic_noise_dominates_background():
    psd_e = 2 * pd.shot_noise_psd(R_BAR)
    assert psd_e / (psd_e + pd.shot_noise_psd(R_BAR)) == pytest.approx(2 / 3)


def test_quantum_detection_gives_shot_noise():
    phys = model.reference_physics()
    cfg = SimConfig(dt=5e-9, duration=200e-6, record_stride=4)
    tr = dynamics.simulate_ensemble(cfg, phys, NoiseConfig(), seeds=[0], atom_free=True)[0]
    out = pd.detect(tr, pd.DetectorConfig(bin_width=100e-9))
    assert out.mode == "quantum"
    mu = out.counts.mean()
    assert mu == pytest.approx(R_BAR * 100e-9, rel=0.01)
    assert np.var(out.counts) / mu == pytest.approx(1.0, rel=0.06)


@pytest.mark.parametrize(
    "cfg",
    [dict(bin_width=0.0), dict(electronic_noise_psd=-1.0), dict(quantum_efficiency=1.5), dict(mode="analog")],
)
def test_detector_config_validation(cfg):
    with pytest.raises(ConfigurationError):
        pd.DetectorConfig(**cfg)


def test_bin_must_be_multiple_of_sample_period():
    with pytest.raises(ConfigurationError):
        pd.detect(constant_trajectory(1e9, 100), pd.DetectorConfig(bin_width=30e-9))


def test_quantum_mode_requires_vacuum_record():
    with pytest.raises(ConfigurationError):
        pd.detect(constant_trajectory(1e9, 100), pd.DetectorConfig(mode="quantum"))


def test_negative_rate_rejected():
    with pytest.raises(ValueError):
        pd.detect(constant_trajectory(-1.0, 100), pd.DetectorConfig(mode="poisson"))


def test_helpers():
    assert pd.shot_noise_psd(R_BAR) == pytest.approx(2 / R_BAR)
    assert pd.bin_transfer(0.0, 1e-7) == 1.0
    assert pd.bin_transfer(1 / 1e-7, 1e-7) == pytest.approx(0.0, abs=1e-30)
