"""Photodetection of the transmitted probe light.

A :class:`~cavcool.dynamics.Trajectory` is binned into photocounts:

* ``quantum``: counts = integrated rate + output-vacuum counts. Valid for
  zero-point trajectories; this record already carries the exact shot noise
  and its correlation with the back-action force. Drawing Poisson counts on
  top would count the vacuum twice.
* ``poisson``: Poisson draws from the integrated (classical) rate.
* ``gaussian``: normal approximation to ``poisson``.
* ``auto``: ``quantum`` when vacuum counts are present, otherwise
  ``poisson`` below 50 mean counts per bin and ``gaussian`` above.

White electronic noise is specified as a one-sided PSD of the fractional
photocurrent (1/Hz) and added per bin with variance psd / (2 T).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError
from .seeding import generator

MODES = ("auto", "quantum", "poisson", "gaussian")
GAUSSIAN_THRESHOLD = 50.0


@dataclass(frozen=True)
class DetectorConfig:
    bin_width: float = 20e-9
    electronic_noise_psd: float = 0.0
    quantum_efficiency: float = 1.0
    mode: str = "auto"

    def __post_init__(self):
        if not self.bin_width > 0:
            raise ConfigurationError("must be positive", "detector.bin_width")
        if not self.electronic_noise_psd >= 0:
            raise ConfigurationError("must be >= 0", "detector.electronic_noise_psd")
        if not 0 < self.quantum_efficiency <= 1:
            raise ConfigurationError("must lie in (0, 1]", "detector.quantum_efficiency")
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}; expected one of {MODES}", "detector.mode")


@dataclass
class PhotocurrentTrace:
    """Binned photocurrent; ``current`` is in photons/s, ``t`` are bin centres."""

    t: np.ndarray
    counts: np.ndarray
    bin_width: float
    mode: str
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def current(self):
        return self.counts / self.bin_width

    @property
    def mean_rate(self):
        return float(np.mean(self.current))

    @property
    def sample_rate(self):
        return 1.0 / self.bin_width

    def fractional(self):
        """Relative intensity fluctuation I / mean(I) - 1."""
        c = self.current
        return c / np.mean(c) - 1.0

    def __len__(self):
        return len(self.counts)


def _bin_factor(bin_width, sample_period):
    ratio = bin_width / sample_period
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > 1e-6 * ratio:
        raise ConfigurationError(
            f"bin width {bin_width:g} s is not a multiple of the sample period {sample_period:g} s",
            "detector.bin_width",
        )
    return m


def resolve_mode(mode, trajectory, counts_per_bin):
    if mode == "quantum" and trajectory.vacuum_counts is None:
        raise ConfigurationError("quantum detection needs a zero-point trajectory", "detector.mode")
    if mode != "auto":
        return mode
    if trajectory.vacuum_counts is not None:
        return "quantum"
    return "poisson" if counts_per_bin < GAUSSIAN_THRESHOLD else "gaussian"


def detect(trajectory, config=None, seed=None):
    """Bin ``trajectory`` into a :class:`PhotocurrentTrace`.

    ``seed`` drives the sampling noise (Poisson/Gaussian draws, extra loss,
    electronic noise); it defaults to a value derived from the trajectory seed.
    """
    config = DetectorConfig() if config is None else config
    m = _bin_factor(config.bin_width, trajectory.sample_period)
    n_bins = (len(trajectory) - 1) // m
    if n_bins < 1:
        raise ConfigurationError("trajectory shorter than one detection bin", "detector.bin_width")
    dt = trajectory.sample_period
    span = slice(1, 1 + n_bins * m)
    expected = (trajectory.rate[span] * dt).reshape(n_bins, m).sum(axis=1)
    if seed is None:
        seed = (trajectory.seed * 0x9E3779B1 + 1) % (1 << 63)
    rng = generator(seed)
    mode = resolve_mode(config.mode, trajectory, float(np.mean(expected)))
    qe = config.quantum_efficiency

    if mode == "quantum":
        vac = trajectory.vacuum_counts[span].reshape(n_bins, m).sum(axis=1)
        counts = expected + vac
        if qe < 1:
            counts = qe * counts + np.sqrt(qe * (1 - qe) * np.maximum(expected, 0)) * rng.standard_normal(n_bins)
    else:
        if np.any(expected < 0):
            raise ValueError("photon rate must be nonnegative for classical detection")
        lam = qe * expected
        if mode == "poisson":
            counts = rng.poisson(lam).astype(float)
        else:
            counts = lam + np.sqrt(lam) * rng.standard_normal(n_bins)

    trace = PhotocurrentTrace(
        t=trajectory.t[0] + (np.arange(n_bins) + 0.5) * config.bin_width,
        counts=counts,
        bin_width=config.bin_width,
        mode=mode,
        seed=int(seed),
        meta={"trajectory_seed": trajectory.seed, **trajectory.meta},
    )
    if config.electronic_noise_psd > 0:
        trace = add_electronic_noise(trace, config.electronic_noise_psd, rng)
    return trace


def add_electronic_noise(trace, psd, rng=None):
    """Add white noise of one-sided fractional PSD ``psd`` (1/Hz)."""
    if psd < 0:
        raise ConfigurationError("must be >= 0", "detector.electronic_noise_psd")
    if psd == 0:
        return trace
    rng = generator(0) if rng is None else rng
    mean_counts = float(np.mean(trace.counts))
    sigma = mean_counts * math.sqrt(psd / (2 * trace.bin_width))
    noisy = trace.counts + sigma * rng.standard_normal(len(trace.counts))
    meta = dict(trace.meta, electronic_noise_psd=psd)
    return replace(trace, counts=noisy, meta=meta)


def shot_noise_psd(mean_rate):
    """One-sided fractional shot-noise PSD 2 / R (1/Hz)."""
    return 2.0 / mean_rate


def bin_transfer(freq, bin_width):
    """Power transfer sinc^2(f T) of integrating a signal at ``freq`` (Hz) over bins of width T."""
    return float(np.sinc(freq * bin_width) ** 2)
