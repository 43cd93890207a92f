"""Residual extraction, fingerprint estimation and the fingerprint file format."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .audio_io import AudioSignal
from .dsp import FilterSpec, FirFilter, StftConfig, WindowKind, apply_fir, average_energy
from .errors import ConfigError, FingerprintFileError

FORMAT_VERSION = 1
SHRINK_REL = 1e-3
# keeps Cholesky defined when every residual is identical (zero covariance)
SHRINK_FLOOR = 1e-12
EXTERNAL_PREFIX = "external:"


def filter_id(filt: FirFilter | FilterSpec | str) -> str:
    """Stable identifier for a filtering method."""
    if isinstance(filt, FirFilter):
        return str(filt.spec) if filt.spec is not None else f"custom:{filt.order}taps"
    if isinstance(filt, FilterSpec):
        return str(filt)
    return filt


@dataclass(frozen=True, eq=False)
class ResidualVector:
    values: np.ndarray
    config: StftConfig
    filter_id: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.config.n_bins,):
            raise ConfigError(f"residual has shape {v.shape}, expected ({self.config.n_bins},)")
        if not np.all(np.isfinite(v)):
            raise ConfigError("residual contains non-finite values")
        object.__setattr__(self, "values", v)


def residual(signal: AudioSignal, fir: FirFilter, config: StftConfig) -> ResidualVector:
    """E_x - E_f(x) for a designed FIR filter f."""
    filtered = apply_fir(signal, fir)
    values = average_energy(signal, config).values - average_energy(filtered, config).values
    return ResidualVector(values, config, filter_id(fir))


def residual_from_pair(
    original: AudioSignal, filtered: AudioSignal, config: StftConfig, tag: str = "external"
) -> ResidualVector:
    """Residual against a companion clip filtered outside this package (e.g. a neural codec)."""
    if original.sample_rate != filtered.sample_rate:
        raise ConfigError(
            f"sample-rate mismatch: original {original.sample_rate} Hz vs filtered {filtered.sample_rate} Hz"
        )
    values = average_energy(original, config).values - average_energy(filtered, config).values
    fid = tag if tag.startswith(EXTERNAL_PREFIX) else EXTERNAL_PREFIX + tag
    return ResidualVector(values, config, fid)


@dataclass(frozen=True, eq=False)
class Fingerprint:
    label: str
    mean: np.ndarray
    chol_factor: np.ndarray
    shrinkage: float
    n_train: int
    stft_config: StftConfig
    filter_id: str
    sample_rate: int
    filter_spec: FilterSpec | None = None
    coefficients: np.ndarray | None = field(default=None)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        chol = np.asarray(self.chol_factor, dtype=np.float64)
        f = mean.shape[0] if mean.ndim == 1 else -1
        if mean.ndim != 1 or f != self.stft_config.n_bins:
            raise ConfigError(f"fingerprint mean has shape {mean.shape}, expected ({self.stft_config.n_bins},)")
        if chol.shape != (f, f):
            raise ConfigError(f"chol_factor has shape {chol.shape}, expected ({f}, {f})")
        if np.any(np.triu(chol, 1) != 0.0):
            raise ConfigError("chol_factor must be lower-triangular")
        if not np.all(np.diag(chol) > 0):
            raise ConfigError("chol_factor must have a strictly positive diagonal")
        if self.n_train < 1:
            raise ConfigError("n_train must be >= 1")
        if not self.shrinkage >= 0:
            raise ConfigError("shrinkage must be >= 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "chol_factor", chol)
        if self.coefficients is not None:
            object.__setattr__(self, "coefficients", np.asarray(self.coefficients, dtype=np.float64))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def covariance(self) -> np.ndarray:
        """The regularized covariance Sigma + shrinkage*I."""
        return self.chol_factor @ self.chol_factor.T

    @classmethod
    def from_covariance(
        cls,
        label: str,
        mean,
        covariance,
        stft_config: StftConfig,
        *,
        n_train: int = 2,
        filter_id: str = "custom",
        sample_rate: int = 22050,
        shrinkage: float = 0.0,
    ) -> "Fingerprint":
        """Build from an explicit (already regularized) covariance matrix."""
        chol = np.linalg.cholesky(np.asarray(covariance, dtype=np.float64))
        return cls(label, mean, chol, shrinkage, n_train, stft_config, filter_id, sample_rate)

    def same_setup(self, other: "Fingerprint") -> bool:
        return (
            self.stft_config == other.stft_config
            and self.filter_id == other.filter_id
            and self.sample_rate == other.sample_rate
        )


def _fsum_columns(x: np.ndarray) -> np.ndarray:
    # correctly rounded sums: the mean cannot depend on residual order
    return np.array([math.fsum(col) for col in x.T])


def default_shrinkage(cov: np.ndarray) -> float:
    return max(SHRINK_REL * float(np.trace(cov)) / cov.shape[0], SHRINK_FLOOR)


def estimate_fingerprint(
    label: str,
    residuals: Sequence[ResidualVector],
    shrinkage: float | None = None,
    *,
    sample_rate: int,
    filter_spec: FilterSpec | None = None,
    coefficients: np.ndarray | None = None,
) -> Fingerprint:
    """Mean residual plus Cholesky factor of the shrunk sample covariance.

    ``shrinkage=None`` picks 1e-3 * trace(Sigma) / F (floored at 1e-12).
    """
    residuals = list(residuals)
    if not residuals:
        raise ConfigError(f"no residuals given for {label!r}")
    config = residuals[0].config
    fid = residuals[0].filter_id
    for r in residuals[1:]:
        if r.config != config or r.filter_id != fid:
            raise ConfigError(
                f"mixed residual setups for {label!r}: ({config}, {fid}) vs ({r.config}, {r.filter_id})"
            )
    x = np.stack([r.values for r in residuals])
    n = x.shape[0]
    mean = _fsum_columns(x) / n
    if n >= 2:
        centered = x - mean
        cov = centered.T @ centered / (n - 1)
        cov = 0.5 * (cov + cov.T)
    else:
        cov = np.zeros((x.shape[1], x.shape[1]))
    if shrinkage is None:
        shrinkage = default_shrinkage(cov)
    if shrinkage < 0:
        raise ConfigError("shrinkage must be >= 0")
    try:
        chol = np.linalg.cholesky(cov + shrinkage * np.eye(cov.shape[0]))
    except np.linalg.LinAlgError as exc:
        raise ConfigError(
            f"covariance of {label!r} is not positive definite with shrinkage={shrinkage:g}; "
            "retry with a larger shrinkage (or leave it unset for the automatic value)"
        ) from exc
    return Fingerprint(
        label, mean, chol, float(shrinkage), n, config, fid, int(sample_rate), filter_spec, coefficients
    )


# --- file format -----------------------------------------------------------


def _spec_to_dict(fp: Fingerprint) -> dict:
    if fp.filter_id.startswith(EXTERNAL_PREFIX):
        return {"kind": fp.filter_id}
    d: dict = {"id": fp.filter_id}
    spec = fp.filter_spec
    if spec is not None:
        d.update(
            kind=spec.kind.value,
            edges=[spec.edge_lo] + ([spec.edge_hi] if spec.edge_hi is not None else []),
            transition=spec.transition_width,
            attenuation=spec.stopband_atten_db,
        )
    if fp.coefficients is not None:
        d["coefficients"] = fp.coefficients.tolist()
    return d


def fingerprint_to_dict(fp: Fingerprint) -> dict:
    rows, cols = np.tril_indices(fp.dim)
    return {
        "format_version": FORMAT_VERSION,
        "label": fp.label,
        "sample_rate": fp.sample_rate,
        "stft": {
            "window_len": fp.stft_config.window_len,
            "hop": fp.stft_config.hop,
            "window_kind": fp.stft_config.window_kind.value,
        },
        "filter": _spec_to_dict(fp),
        "n_train": fp.n_train,
        "shrinkage": fp.shrinkage,
        "mean": fp.mean.tolist(),
        "chol_factor": fp.chol_factor[rows, cols].tolist(),
    }


def fingerprint_from_dict(d: dict) -> Fingerprint:
    try:
        version = d["format_version"]
        if version != FORMAT_VERSION:
            raise FingerprintFileError(f"unsupported format_version {version} (expected {FORMAT_VERSION})")
        stft = StftConfig(d["stft"]["window_len"], d["stft"]["hop"], WindowKind(d["stft"]["window_kind"]))
        mean = np.array(d["mean"], dtype=np.float64)
        f = stft.n_bins
        if mean.shape != (f,):
            raise FingerprintFileError(f"mean has length {mean.shape[0]}, expected F = {f}")
        tri = np.array(d["chol_factor"], dtype=np.float64)
        if tri.shape != (f * (f + 1) // 2,):
            raise FingerprintFileError(f"chol_factor has {tri.shape[0]} entries, expected {f * (f + 1) // 2}")
        chol = np.zeros((f, f))
        chol[np.tril_indices(f)] = tri
        filt = d["filter"]
        spec = None
        coeffs = None
        if str(filt.get("kind", "")).startswith(EXTERNAL_PREFIX):
            fid = filt["kind"]
        else:
            fid = filt["id"]
            if "edges" in filt:
                edges = filt["edges"]
                spec = FilterSpec(
                    filt["kind"],
                    edges[0],
                    edges[1] if len(edges) > 1 else None,
                    filt["transition"],
                    filt["attenuation"],
                )
            if "coefficients" in filt:
                coeffs = np.array(filt["coefficients"], dtype=np.float64)
        return Fingerprint(
            str(d["label"]),
            mean,
            chol,
            float(d["shrinkage"]),
            int(d["n_train"]),
            stft,
            fid,
            int(d["sample_rate"]),
            spec,
            coeffs,
        )
    except FingerprintFileError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise FingerprintFileError(f"corrupted fingerprint data: {exc!r}") from exc


def save_fingerprint(fp: Fingerprint, path: str | os.PathLike) -> None:
    # json writes floats as shortest round-trip decimals, so this is lossless
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(fingerprint_to_dict(fp), fh, indent=1, allow_nan=False)
        fh.write("\n")


def load_fingerprint(path: str | os.PathLike) -> Fingerprint:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FingerprintFileError(f"{os.fspath(path)}: not a fingerprint file ({exc})") from exc
    try:
        return fingerprint_from_dict(data)
    except FingerprintFileError as exc:
        raise FingerprintFileError(f"{os.fspath(path)}: {exc}") from exc


def load_fingerprints(paths: Iterable[str | os.PathLike]) -> list[Fingerprint]:
    return [load_fingerprint(p) for p in paths]
