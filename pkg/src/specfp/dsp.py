"""Average log-spectral energy and Kaiser windowed-sinc FIR filters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels
from .audio_io import AudioSignal
from .errors import ConfigError

MAG_FLOOR = 1e-10
RESPONSE_FLOOR_DB = -300.0

# frames handed to the FFT at once; bounds memory for long clips at hop 2
_FRAME_CHUNK = 8192


class WindowKind(str, Enum):
    HANN = "hann"
    HAMMING = "hamming"


@dataclass(frozen=True)
class StftConfig:
    window_len: int = 128
    hop: int = 2
    window_kind: WindowKind = WindowKind.HANN

    def __post_init__(self):
        object.__setattr__(self, "window_kind", WindowKind(self.window_kind))
        if self.window_len < 2 or self.window_len % 2:
            raise ConfigError(f"window_len must be even and >= 2, got {self.window_len}")
        if not 1 <= self.hop <= self.window_len:
            raise ConfigError(f"hop must lie in [1, window_len], got {self.hop}")

    @property
    def n_bins(self) -> int:
        return self.window_len // 2 + 1

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.window_len:
            return 0
        return (n_samples - self.window_len) // self.hop + 1

    @classmethod
    def parse(cls, text: str) -> "StftConfig":
        """Parse ``"window_len:hop[:window_kind]"``."""
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise ConfigError(f"stft config must be 'window:hop[:kind]', got {text!r}")
        try:
            kind = WindowKind(parts[2]) if len(parts) == 3 else WindowKind.HANN
            return cls(int(parts[0]), int(parts[1]), kind)
        except ValueError as exc:
            raise ConfigError(f"bad stft config {text!r}: {exc}") from exc

    def __str__(self) -> str:
        return f"{self.window_len}:{self.hop}:{self.window_kind.value}"


# default configurations: low-pass residuals and the external-codec path
LOWPASS_STFT = StftConfig(128, 2)
CODEC_STFT = StftConfig(2048, 128)


@dataclass(frozen=True, eq=False)
class Spectrogram:
    values: np.ndarray  # (F, T), dB
    config: StftConfig
    sample_rate: int


@dataclass(frozen=True, eq=False)
class EnergyVector:
    values: np.ndarray  # (F,), dB
    config: StftConfig
    sample_rate: int


def make_window(kind: WindowKind | str, window_len: int) -> np.ndarray:
    """Symmetric Hann or Hamming window of ``window_len`` points."""
    kind = WindowKind(kind)
    if window_len < 2:
        raise ConfigError(f"window_len must be >= 2, got {window_len}")
    k = np.arange(window_len)
    c = np.cos(2.0 * np.pi * k / (window_len - 1))
    if kind is WindowKind.HANN:
        w = 0.5 * (1.0 - c)
    else:
        w = 0.54 - 0.46 * c
    return np.clip(w, 0.0, 1.0)


def _frame_magnitudes(x: np.ndarray, config: StftConfig, window: np.ndarray):
    """Yield |rfft| of windowed frames in chunks of shape (chunk, F)."""
    L, hop = config.window_len, config.hop
    frames = np.lib.stride_tricks.sliding_window_view(x, L)[::hop]
    for start in range(0, frames.shape[0], _FRAME_CHUNK):
        chunk = frames[start : start + _FRAME_CHUNK] * window
        yield np.abs(np.fft.rfft(chunk, axis=1))


def _check_length(signal: AudioSignal, config: StftConfig) -> None:
    if len(signal) < config.window_len:
        raise ConfigError(
            f"signal has {len(signal)} samples, shorter than one frame ({config.window_len})"
        )


def stft_log_magnitude(signal: AudioSignal, config: StftConfig) -> Spectrogram:
    """Full-frame STFT as an (F, T) matrix of 10*log10(max(|X|, 1e-10))."""
    _check_length(signal, config)
    window = make_window(config.window_kind, config.window_len)
    blocks = [
        10.0 * np.log10(np.maximum(m, MAG_FLOOR))
        for m in _frame_magnitudes(signal.samples, config, window)
    ]
    return Spectrogram(np.concatenate(blocks, axis=0).T, config, signal.sample_rate)


def average_energy(signal: AudioSignal, config: StftConfig) -> EnergyVector:
    """Per-bin time average of the log-magnitude spectrogram (length F)."""
    _check_length(signal, config)
    window = make_window(config.window_kind, config.window_len)
    total = np.zeros(config.n_bins)
    for m in _frame_magnitudes(signal.samples, config, window):
        total += kernels.log_sum_frames(m, MAG_FLOOR)
    values = total / config.n_frames(len(signal))
    return EnergyVector(values, config, signal.sample_rate)


class FilterKind(str, Enum):
    LOW_PASS = "low_pass"
    HIGH_PASS = "high_pass"
    BAND_PASS = "band_pass"
    BAND_STOP = "band_stop"

    @property
    def is_band(self) -> bool:
        return self in (FilterKind.BAND_PASS, FilterKind.BAND_STOP)


_KIND_ALIASES = {
    "lowpass": FilterKind.LOW_PASS,
    "highpass": FilterKind.HIGH_PASS,
    "bandpass": FilterKind.BAND_PASS,
    "bandstop": FilterKind.BAND_STOP,
}


@dataclass(frozen=True)
class FilterSpec:
    """Band edges in Hz.

    ``edge_lo``/``edge_hi`` bound the pass band for every kind except
    band-stop, where they bound the stop band. Transition bands
    of ``transition_width`` Hz lie outside the named band, e.g. a low-pass
    with edge 1000 and width 500 passes [0, 1000] and stops [1500, fs/2].
    """

    kind: FilterKind
    edge_lo: float
    edge_hi: float | None = None
    transition_width: float = 500.0
    stopband_atten_db: float = 60.0

    def __post_init__(self):
        object.__setattr__(self, "kind", FilterKind(self.kind))
        if self.kind.is_band:
            if self.edge_hi is None or not self.edge_lo < self.edge_hi:
                raise ConfigError("band filters need edge_lo < edge_hi")
        elif self.edge_hi is not None:
            raise ConfigError(f"{self.kind.value} takes a single edge")
        if not self.transition_width > 0:
            raise ConfigError("transition_width must be positive")
        if not self.stopband_atten_db >= 20:
            raise ConfigError("stopband_atten_db must be at least 20 dB")
        if not self.edge_lo > 0:
            raise ConfigError("filter edges must be positive")

    def validate(self, sample_rate: float) -> None:
        nyq = sample_rate / 2.0
        edges = [self.edge_lo] + ([self.edge_hi] if self.edge_hi is not None else [])
        if any(not 0 < e < nyq for e in edges):
            raise ConfigError(f"filter edges {edges} must lie in (0, {nyq}) Hz")
        tw = self.transition_width
        lo_needs_room = self.kind in (FilterKind.HIGH_PASS, FilterKind.BAND_PASS, FilterKind.BAND_STOP)
        hi_edge = self.edge_lo if self.kind is FilterKind.LOW_PASS else self.edge_hi
        if lo_needs_room and self.edge_lo - tw <= 0:
            raise ConfigError(f"transition band below {self.edge_lo} Hz crosses 0 Hz")
        if hi_edge is not None and hi_edge + tw >= nyq:
            raise ConfigError(f"transition band above {hi_edge} Hz crosses Nyquist ({nyq} Hz)")

    @classmethod
    def parse(cls, text: str, stopband_atten_db: float = 60.0) -> "FilterSpec":
        """Parse the command-line filter grammar (all values in Hz).

        ``lowpass:PASS:STOP`` and ``highpass:PASS:STOP`` give the pass-band
        edge and the stop-band edge; ``bandpass:LO:HI:WIDTH`` and
        ``bandstop:LO:HI:WIDTH`` give the named band and the transition width.
        """
        parts = text.split(":")
        kind = _KIND_ALIASES.get(parts[0].replace("_", "").replace("-", "").lower())
        if kind is None:
            raise ConfigError(f"unknown filter kind in {text!r}")
        want = 4 if kind.is_band else 3
        if len(parts) != want:
            raise ConfigError(f"filter {text!r}: expected {want - 1} numeric fields")
        try:
            nums = [float(p) for p in parts[1:]]
        except ValueError as exc:
            raise ConfigError(f"filter {text!r}: {exc}") from exc
        if kind.is_band:
            return cls(kind, nums[0], nums[1], nums[2], stopband_atten_db)
        passband, stop = nums
        if kind is FilterKind.LOW_PASS and not stop > passband:
            raise ConfigError(f"filter {text!r}: low-pass stop edge must exceed the pass edge")
        if kind is FilterKind.HIGH_PASS and not stop < passband:
            raise ConfigError(f"filter {text!r}: high-pass stop edge must lie below the pass edge")
        return cls(kind, passband, None, abs(stop - passband), stopband_atten_db)

    @property
    def stop_edge(self) -> float | None:
        """Stop-band edge of single-edge kinds."""
        if self.kind is FilterKind.LOW_PASS:
            return self.edge_lo + self.transition_width
        if self.kind is FilterKind.HIGH_PASS:
            return self.edge_lo - self.transition_width
        return None

    def __str__(self) -> str:
        name = self.kind.value.replace("_", "")
        if self.kind.is_band:
            nums = [self.edge_lo, self.edge_hi, self.transition_width]
        else:
            nums = [self.edge_lo, self.stop_edge]
        return ":".join([name] + [f"{v:g}" for v in nums])


DEFAULT_LOWPASS = FilterSpec(FilterKind.LOW_PASS, 1000.0, None, 500.0)


@dataclass(frozen=True, eq=False)
class FirFilter:
    coefficients: np.ndarray
    sample_rate: int
    spec: FilterSpec | None = field(default=None)

    def __post_init__(self):
        h = np.asarray(self.coefficients, dtype=np.float64)
        if h.ndim != 1 or h.shape[0] < 1:
            raise ConfigError("filter needs at least one coefficient")
        if not np.all(np.isfinite(h)):
            raise ConfigError("filter coefficients must be finite")
        object.__setattr__(self, "coefficients", h)

    @property
    def order(self) -> int:
        return self.coefficients.shape[0]


def kaiser_order(atten_db: float, transition_hz: float, sample_rate: float) -> tuple[int, float]:
    """Kaiser's estimate of (odd tap count, beta) for a given ripple and width."""
    a = atten_db
    if a > 50:
        beta = 0.1102 * (a - 8.7)
    elif a >= 21:
        beta = 0.5842 * (a - 21) ** 0.4 + 0.07886 * (a - 21)
    else:
        beta = 0.0
    dw = 2.0 * np.pi * transition_hz / sample_rate
    n = int(math.ceil((a - 7.95) / (2.285 * dw) + 1))
    if n % 2 == 0:
        n += 1
    return max(n, 1), beta


def _lowpass_prototype(cutoff_hz: float, n_taps: int, beta: float, sample_rate: float) -> np.ndarray:
    m = (n_taps - 1) / 2.0
    k = np.arange(n_taps) - m
    fc = cutoff_hz / sample_rate  # cycles/sample
    h = 2.0 * fc * np.sinc(2.0 * fc * k) * np.kaiser(n_taps, beta)
    return h / h.sum()


def _delta(n_taps: int) -> np.ndarray:
    d = np.zeros(n_taps)
    d[n_taps // 2] = 1.0
    return d


def design_fir(spec: FilterSpec, sample_rate: float) -> FirFilter:
    """Linear-phase Kaiser windowed-sinc design meeting ``spec``.

    Each sinc cutoff sits at the middle of its transition band. Band designs
    combine two prototypes whose stopband errors can add, so each prototype
    is designed with half the ripple (6.02 dB more attenuation).
    """
    spec.validate(sample_rate)
    tw = spec.transition_width
    atten = spec.stopband_atten_db
    if spec.kind.is_band:
        atten += 20.0 * math.log10(2.0)
    n_taps, beta = kaiser_order(atten, tw, sample_rate)

    def lp(fc):
        return _lowpass_prototype(fc, n_taps, beta, sample_rate)

    if spec.kind is FilterKind.LOW_PASS:
        h = lp(spec.edge_lo + tw / 2)
    elif spec.kind is FilterKind.HIGH_PASS:
        h = _delta(n_taps) - lp(spec.edge_lo - tw / 2)
    elif spec.kind is FilterKind.BAND_PASS:
        h = lp(spec.edge_hi + tw / 2) - lp(spec.edge_lo - tw / 2)
    else:
        h = lp(spec.edge_lo - tw / 2) + _delta(n_taps) - lp(spec.edge_hi + tw / 2)
    # force exact symmetry against rounding in the sinc/kaiser products
    h = 0.5 * (h + h[::-1])
    return FirFilter(h, int(sample_rate), spec)


def apply_fir(signal: AudioSignal, fir: FirFilter) -> AudioSignal:
    """Causal, zero-padded convolution; output has the input's length."""
    if signal.sample_rate != fir.sample_rate:
        raise ConfigError(
            f"sample-rate mismatch: signal {signal.sample_rate} Hz vs filter {fir.sample_rate} Hz"
        )
    y = kernels.fir_causal(signal.samples, fir.coefficients)
    return AudioSignal(y, signal.sample_rate)


def frequency_response(fir: FirFilter, n_points: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Gain in dB at ``n_points`` evenly spaced frequencies on [0, fs/2].

    Exact zeros are floored at -300 dB.
    """
    if n_points < 2:
        raise ConfigError("n_points must be >= 2")
    freqs = np.linspace(0.0, fir.sample_rate / 2.0, n_points)
    return freqs, gain_at(fir, freqs)


def gain_at(fir: FirFilter, freqs) -> np.ndarray:
    """Gain in dB of ``fir`` at arbitrary frequencies (Hz)."""
    freqs = np.atleast_1d(np.asarray(freqs, dtype=np.float64))
    k = np.arange(fir.order)
    phase = np.exp(-2j * np.pi * np.outer(freqs, k) / fir.sample_rate)
    mag = np.abs(phase @ fir.coefficients)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mag)
    return np.maximum(db, RESPONSE_FLOOR_DB)
