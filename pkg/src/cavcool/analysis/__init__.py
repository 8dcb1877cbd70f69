"""Measurement pipeline: variance thermometry, decay fits, spectra."""

from .decay import (
    DecayFitResult,
    LinearFitResult,
    fit_decaying_sinusoid,
    fit_exponential_decay,
    fit_proportional,
    fit_rate_vs_scattering,
)
from .spectra import (
    PARAM_NAMES,
    SpectralConstants,
    Spectrum,
    SpectrumFitResult,
    background_model,
    fit_spectrum,
    spectral_jacobian,
    spectral_model,
    welch_psd,
)
from .thermometry import (
    OccupationSeries,
    VarianceSeries,
    average_series,
    occupation_from_variance,
    sliding_variance,
)

__all__ = [
    "DecayFitResult", "LinearFitResult", "fit_decaying_sinusoid", "fit_exponential_decay", "fit_proportional",
    "fit_rate_vs_scattering", "PARAM_NAMES", "SpectralConstants", "Spectrum", "SpectrumFitResult",
    "background_model", "fit_spectrum", "spectral_jacobian", "spectral_model", "welch_psd", "OccupationSeries",
    "VarianceSeries", "average_series", "occupation_from_variance", "sliding_variance",
]
