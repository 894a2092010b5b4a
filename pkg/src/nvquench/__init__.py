"""Nitrogen quenching of NV- fluorescence in diamond.

Lifetime fitting, the donor-tunnelling yield model, Monte Carlo ensemble
decays, spectral calibration and unmixing, and magnetometry sensitivity.
"""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    ConfigError,
    DegenerateFitError,
    DomainError,
    InconsistentInputError,
    InsufficientDataError,
    NVQuenchError,
    ParseError,
    RangeError,
    RankDeficiencyError,
)
from .lifetime import DecayHistogram, StretchedExpRegressor, fit_stretched_exp  # noqa: E402
from .quench import QuenchParams, max_density_for_qy, max_ppm_for_qy, relative_qy_model  # noqa: E402
from .spatial import density_to_ppm, mean_nn_distance, ppm_to_density  # noqa: E402
from .simulate import EnsembleSimConfig, simulate_ensemble_decay  # noqa: E402
from .spectra import NNMFUnmixer, SpectrumSeries, nnmf_unmix  # noqa: E402
from .tunnelling import SampleRecord, TunnellingRateRegressor  # noqa: E402

__all__ = [
    "ConfigError", "DegenerateFitError", "DomainError", "InconsistentInputError",
    "InsufficientDataError", "NVQuenchError", "ParseError", "RangeError", "RankDeficiencyError",
    "DecayHistogram", "StretchedExpRegressor", "fit_stretched_exp",
    "QuenchParams", "max_density_for_qy", "max_ppm_for_qy", "relative_qy_model",
    "density_to_ppm", "mean_nn_distance", "ppm_to_density",
    "EnsembleSimConfig", "simulate_ensemble_decay",
    "NNMFUnmixer", "SpectrumSeries", "nnmf_unmix",
    "SampleRecord", "TunnellingRateRegressor",
]
