"""WAV input/output and SNR-controlled noise mixing."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .errors import AudioFormatError, ConfigError


@dataclass(frozen=True, eq=False)
class AudioSignal:
    """Mono waveform with its sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ConfigError(f"audio must be mono (1-D samples), got shape {x.shape}")
        if x.shape[0] < 1:
            raise ConfigError("audio must contain at least one sample")
        if not np.all(np.isfinite(x)):
            raise ConfigError("audio samples must be finite")
        if not self.sample_rate > 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", x)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float
    seed: int = 0

    def __post_init__(self):
        if not math.isfinite(self.snr_db):
            raise ConfigError(f"snr_db must be finite, got {self.snr_db}")
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")


_INT_SCALE = {np.dtype(np.int16): 2.0**15, np.dtype(np.int32): 2.0**31}


def load_wav(path: str | os.PathLike) -> AudioSignal:
    """Read a mono PCM-16/24/32 or IEEE-float WAV file.

    Integer PCM is scaled by 1/2^(bits-1) so samples land in [-1, 1).
    Multi-channel files are rejected, never downmixed.
    """
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such audio file: {path}")
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:  # scipy surfaces header damage as assorted exception types
        raise AudioFormatError(f"{path}: malformed or unsupported WAV ({exc})") from exc
    if data.ndim != 1:
        raise AudioFormatError(f"{path}: expected 1 channel, found {data.shape[1]}")
    if data.dtype in _INT_SCALE:
        # scipy returns 24-bit PCM left-justified in int32
        samples = data.astype(np.float64) / _INT_SCALE[data.dtype]
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(f"{path}: unsupported sample encoding {data.dtype}")
    if samples.shape[0] == 0:
        raise AudioFormatError(f"{path}: file contains no samples")
    if not np.all(np.isfinite(samples)):
        raise AudioFormatError(f"{path}: non-finite samples")
    return AudioSignal(samples, int(rate))


def write_wav(path: str | os.PathLike, signal: AudioSignal) -> None:
    """Write ``signal`` as a 32-bit IEEE-float mono WAV."""
    wavfile.write(os.fspath(path), int(signal.sample_rate), signal.samples.astype(np.float32))


def rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


def noise_segment(noise: np.ndarray, length: int, seed: int) -> np.ndarray:
    """Seeded crop (or tile then crop) of ``noise`` to exactly ``length`` samples."""
    rng = np.random.default_rng(seed)
    n = noise.shape[0]
    if n < length:
        reps = -(-length // n) + 1
        noise = np.tile(noise, reps)
        n = noise.shape[0]
    start = int(rng.integers(0, n - length + 1))
    return noise[start : start + length]


def mix_noise(clean: AudioSignal, noise: AudioSignal, spec: NoiseSpec) -> AudioSignal:
    """Return clean + alpha * noise_segment at the requested full-signal SNR."""
    if clean.sample_rate != noise.sample_rate:
        raise ConfigError(
            f"sample-rate mismatch: clean {clean.sample_rate} Hz vs noise {noise.sample_rate} Hz"
        )
    seg = noise_segment(noise.samples, len(clean), spec.seed)
    p_clean = rms(clean.samples)
    p_noise = rms(seg)
    if p_clean == 0.0:
        raise ConfigError("clean signal is all zeros; SNR is undefined")
    if p_noise == 0.0:
        raise ConfigError("selected noise segment is all zeros; SNR is undefined")
    alpha = p_clean / (p_noise * 10.0 ** (spec.snr_db / 20.0))
    return AudioSignal(clean.samples + alpha * seg, clean.sample_rate)
