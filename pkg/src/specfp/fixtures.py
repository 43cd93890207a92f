"""Deterministic surrogate "synthesis systems" and noise clips.

Every system shares the same speech-like excitation model (a jittered
harmonic pulse train through random formant resonators, plus breath noise)
and differs only in its pitch range and a fixed coloration filter. Real
clips use a broadband coloration that no system shares.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .audio_io import AudioSignal, write_wav
from .dsp import FilterKind, FilterSpec, apply_fir, design_fir
from .errors import ConfigError
from .manifest import REAL_LABEL, Manifest, ManifestEntry, write_manifest

PEAK = 0.9
DEFAULT_RATE = 22050
REAL_COLORATION = FilterSpec(FilterKind.LOW_PASS, 9000.0, None, 500.0)


@dataclass(frozen=True)
class SurrogateSystemSpec:
    system_id: str
    coloration: FilterSpec
    harmonic_f0: float = 120.0
    jitter: float = 0.02
    clip_seconds: float = 0.5
    sample_rate: int = DEFAULT_RATE

    def __post_init__(self):
        if not self.clip_seconds > 0:
            raise ConfigError("clip_seconds must be positive")
        if not 50 < self.harmonic_f0 < 400:
            raise ConfigError(f"harmonic_f0 must lie in (50, 400) Hz, got {self.harmonic_f0}")
        if self.jitter < 0:
            raise ConfigError("jitter must be non-negative")


def default_specs(clip_seconds: float = 0.5, sample_rate: int = DEFAULT_RATE) -> list[SurrogateSystemSpec]:
    """Three surrogate systems with clearly different colorations."""
    return [
        SurrogateSystemSpec("SYS_A", FilterSpec(FilterKind.LOW_PASS, 3000.0), 120.0, 0.02, clip_seconds, sample_rate),
        SurrogateSystemSpec(
            "SYS_B", FilterSpec(FilterKind.BAND_PASS, 4000.0, 7000.0), 180.0, 0.03, clip_seconds, sample_rate
        ),
        SurrogateSystemSpec(
            "SYS_C", FilterSpec(FilterKind.BAND_STOP, 2000.0, 5000.0), 220.0, 0.01, clip_seconds, sample_rate
        ),
    ]


def clip_seed(seed: int, system_id: str, index: int) -> int:
    digest = hashlib.blake2b(f"{seed}:{system_id}:{index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _excitation(rng: np.random.Generator, n: int, sr: int, f0: float, jitter: float) -> np.ndarray:
    t = np.arange(n) / sr
    base = f0 * rng.uniform(0.9, 1.1)
    wobble = jitter * np.sin(2 * np.pi * rng.uniform(2.0, 6.0) * t + rng.uniform(0, 2 * np.pi))
    inst_f0 = base * (1.0 + wobble + jitter * 0.5 * rng.standard_normal(n).cumsum() / np.sqrt(n))
    phase = np.cumsum(inst_f0) / sr
    pulses = np.zeros(n)
    pulses[1:][np.diff(np.floor(phase)) > 0] = 1.0
    return pulses


def _formants(rng: np.random.Generator, x: np.ndarray, sr: int) -> np.ndarray:
    y = x
    for lo, hi in ((300.0, 900.0), (900.0, 2500.0), (2500.0, 3500.0)):
        fc = rng.uniform(lo, hi)
        bw = rng.uniform(60.0, 200.0)
        r = np.exp(-np.pi * bw / sr)
        a = [1.0, -2.0 * r * np.cos(2 * np.pi * fc / sr), r * r]
        y = lfilter([1.0 - r], a, y)
    return y


def synthesize_clip(
    seed: int, f0: float, jitter: float, seconds: float, sample_rate: int, coloration
) -> AudioSignal:
    """One speech-like clip; ``coloration`` is a designed FirFilter."""
    rng = np.random.default_rng(seed)
    n = int(round(seconds * sample_rate))
    voiced = _formants(rng, _excitation(rng, n, sample_rate, f0, jitter), sample_rate)
    voiced /= np.max(np.abs(voiced)) + 1e-12
    breath = rng.standard_normal(n) * 10 ** (rng.uniform(-30.0, -20.0) / 20.0)
    t = np.arange(n) / sample_rate
    envelope = 0.6 + 0.4 * np.sin(2 * np.pi * rng.uniform(3.0, 5.0) * t + rng.uniform(0, 2 * np.pi))
    x = AudioSignal(envelope * voiced + breath, sample_rate)
    y = apply_fir(x, coloration).samples
    return AudioSignal(PEAK * y / np.max(np.abs(y)), sample_rate)


def generate_surrogate_corpus(
    specs: list[SurrogateSystemSpec],
    n_per_system: int,
    n_real: int,
    seed: int,
    out_dir: str | os.PathLike,
) -> Manifest:
    """Write WAV clips for every system plus ``n_real`` real clips, and a manifest.csv."""
    if n_per_system < 10:
        raise ConfigError("n_per_system must be at least 10")
    ids = [s.system_id for s in specs]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate system ids: {ids}")
    if REAL_LABEL in ids:
        raise ConfigError(f"{REAL_LABEL!r} is reserved for real clips")
    if not specs:
        raise ConfigError("no surrogate systems given")
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    ref = specs[0]
    jobs = [(s.system_id, s, n_per_system) for s in specs]
    if n_real > 0:
        real = SurrogateSystemSpec(REAL_LABEL, REAL_COLORATION, 150.0, 0.02, ref.clip_seconds, ref.sample_rate)
        jobs.append((REAL_LABEL, real, n_real))
    entries = []
    for label, spec, count in jobs:
        fir = design_fir(spec.coloration, spec.sample_rate)
        sub = os.path.join(out_dir, label)
        os.makedirs(sub, exist_ok=True)
        for i in range(count):
            clip = synthesize_clip(
                clip_seed(seed, label, i), spec.harmonic_f0, spec.jitter, spec.clip_seconds, spec.sample_rate, fir
            )
            rel = f"{label}/{label}_{i:04d}.wav"
            write_wav(os.path.join(out_dir, rel), clip)
            entries.append(ManifestEntry(rel, label))
    manifest = Manifest(tuple(entries), os.path.abspath(out_dir))
    write_manifest(manifest, os.path.join(out_dir, "manifest.csv"))
    return manifest


def generate_noise_clips(
    n_clips: int, seconds: float, sample_rate: int, seed: int, out_dir: str | os.PathLike
) -> Manifest:
    """Seeded 1/f-shaped noise clips (label ``noise``) plus noise_manifest.csv."""
    if n_clips < 1:
        raise ConfigError("n_clips must be >= 1")
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    n = int(round(seconds * sample_rate))
    freqs = np.fft.rfftfreq(n, 1.0 / sample_rate)
    entries = []
    for i in range(n_clips):
        rng = np.random.default_rng(clip_seed(seed, "noise", i))
        slope = rng.uniform(0.5, 1.5)  # between pink and brown
        shape = 1.0 / np.maximum(freqs, 20.0) ** (slope / 2.0)
        spec = shape * (rng.standard_normal(freqs.shape) + 1j * rng.standard_normal(freqs.shape))
        x = np.fft.irfft(spec, n)
        rel = f"noise_{i:04d}.wav"
        write_wav(os.path.join(out_dir, rel), AudioSignal(PEAK * x / np.max(np.abs(x)), sample_rate))
        entries.append(ManifestEntry(rel, "noise"))
    manifest = Manifest(tuple(entries), os.path.abspath(out_dir))
    write_manifest(manifest, os.path.join(out_dir, "noise_manifest.csv"))
    return manifest
