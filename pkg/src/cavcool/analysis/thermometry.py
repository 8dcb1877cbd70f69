"""Variance thermometry of the transmitted light.

Motion of the collective mode modulates the cavity transmission, so the
fractional variance of the photocurrent in a short sliding window measures
the instantaneous occupation: sigma^2 - sigma^2_bg = c_T <n>.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError


@dataclass
class VarianceSeries:
    t: np.ndarray
    variance: np.ndarray
    window: float
    stride: int
    mean_counts: np.ndarray
    shot_subtracted: bool

    def __len__(self):
        return len(self.t)


@dataclass
class OccupationSeries:
    t: np.ndarray
    occupation: np.ndarray
    clipped_fraction: float


def _as_counts(trace, sample_period):
    if hasattr(trace, "counts"):
        return np.asarray(trace.counts, dtype=float), float(trace.bin_width), np.asarray(trace.t)
    if sample_period is None:
        raise ConfigurationError("sample_period is required for bare arrays", "sample_period")
    counts = np.asarray(trace, dtype=float)
    return counts, float(sample_period), (np.arange(len(counts)) + 0.5) * sample_period


def sliding_variance(trace, window=2e-6, stride=1, subtract_shot=False, sample_period=None):
    """Fractional variance mean(R^2)/mean(R)^2 - 1 in a centred sliding window.

    Parameters
    ----------
    trace : PhotocurrentTrace or array_like
        Counts per bin (arrays need ``sample_period``).
    window : float
        Window length in seconds (rounded to whole bins, at least 4).
    stride : int
        Step between successive windows in bins.
    subtract_shot : bool
        Subtract the Poisson term 1 / (mean counts per bin) of each window.
    """
    counts, period, t = _as_counts(trace, sample_period)
    w = int(round(window / period))
    if w < 4:
        raise ConfigurationError(f"window spans {w} samples; need at least 4", "window")
    if w > len(counts):
        raise ConfigurationError("window longer than trace", "window")
    if int(stride) != stride or stride < 1:
        raise ConfigurationError("must be a positive integer", "stride")
    c1 = np.concatenate(([0.0], np.cumsum(counts)))
    c2 = np.concatenate(([0.0], np.cumsum(counts * counts)))
    starts = np.arange(0, len(counts) - w + 1, int(stride))
    m1 = (c1[starts + w] - c1[starts]) / w
    m2 = (c2[starts + w] - c2[starts]) / w
    with np.errstate(divide="ignore", invalid="ignore"):
        var = np.maximum(m2 - m1 * m1, 0.0) / (m1 * m1)
        if subtract_shot:
            var = var - 1.0 / m1
    centre = t[starts] + (w - 1) / 2 * period
    return VarianceSeries(
        t=centre, variance=var, window=w * period, stride=int(stride), mean_counts=m1,
        shot_subtracted=bool(subtract_shot),
    )


def occupation_from_variance(series, c_T, background, zero_point=0.0):
    """Occupation n(t) = (sigma^2 - sigma^2_bg) / c_T - zero_point, clipped at 0.

    ``zero_point`` = 1/2 converts a symmetrized (Wigner) signal to n; it is 0
    when the background already contains the zero-point contribution.
    """
    if not c_T > 0:
        raise ConfigurationError("transduction coefficient must be positive", "c_T")
    variance = series.variance if hasattr(series, "variance") else np.asarray(series, dtype=float)
    t = series.t if hasattr(series, "t") else np.arange(len(variance))
    n = (variance - background) / c_T - zero_point
    clipped = n < 0
    return OccupationSeries(
        t=t, occupation=np.where(clipped, 0.0, n), clipped_fraction=float(np.mean(clipped)) if n.size else 0.0
    )


def average_series(series_list):
    """Pointwise mean and standard error of equally sampled series."""
    arr = np.vstack([np.asarray(s) for s in series_list])
    mean = arr.mean(axis=0)
    if arr.shape[0] > 1:
        err = arr.std(axis=0, ddof=1) / np.sqrt(arr.shape[0])
    else:
        err = np.full_like(mean, np.nan)
    return mean, err
