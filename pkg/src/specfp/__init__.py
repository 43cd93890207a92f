"""Training-free spectral residual fingerprints for synthetic speech.

Typical use::

    from specfp import load_wav, design_fir, residual, estimate_fingerprint
    from specfp.dsp import DEFAULT_LOWPASS, LOWPASS_STFT

    fir = design_fir(DEFAULT_LOWPASS, 22050)
    rs = [residual(load_wav(p), fir, LOWPASS_STFT) for p in paths]
    fp = estimate_fingerprint("PWG", rs, sample_rate=22050)
"""

from .audio_io import AudioSignal, NoiseSpec, load_wav, mix_noise, write_wav
from .dsp import (
    EnergyVector,
    FilterKind,
    FilterSpec,
    FirFilter,
    Spectrogram,
    StftConfig,
    WindowKind,
    apply_fir,
    average_energy,
    design_fir,
    frequency_response,
    make_window,
    stft_log_magnitude,
)
from .errors import AudioFormatError, ConfigError, FingerprintFileError, SpecFpError
from .fingerprint import (
    Fingerprint,
    ResidualVector,
    estimate_fingerprint,
    load_fingerprint,
    residual,
    residual_from_pair,
    save_fingerprint,
)
from .manifest import Manifest, ManifestEntry, read_manifest, split_manifest, write_manifest
from .metrics import auroc, macro_metrics
from .scoring import (
    AttributionResult,
    DetectionThreshold,
    ScoreKind,
    attribute_multi,
    correlation_score,
    detect,
    mahalanobis_score,
    sweep_threshold,
)

__all__ = [
    "apply_fir",
    "attribute_multi",
    "AttributionResult",
    "AudioFormatError",
    "AudioSignal",
    "auroc",
    "average_energy",
    "ConfigError",
    "correlation_score",
    "design_fir",
    "detect",
    "DetectionThreshold",
    "EnergyVector",
    "estimate_fingerprint",
    "FilterKind",
    "FilterSpec",
    "Fingerprint",
    "FingerprintFileError",
    "FirFilter",
    "frequency_response",
    "load_fingerprint",
    "load_wav",
    "macro_metrics",
    "mahalanobis_score",
    "make_window",
    "Manifest",
    "ManifestEntry",
    "mix_noise",
    "NoiseSpec",
    "read_manifest",
    "residual",
    "residual_from_pair",
    "ResidualVector",
    "save_fingerprint",
    "ScoreKind",
    "SpecFpError",
    "Spectrogram",
    "split_manifest",
    "stft_log_magnitude",
    "StftConfig",
    "sweep_threshold",
    "WindowKind",
    "write_manifest",
    "write_wav",
]

__version__ = "0.1.0"
