"""Scoring residuals against fingerprints, for attribution and for thresholded detection."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ConfigError
from .fingerprint import Fingerprint, ResidualVector


class ScoreKind(str, Enum):
    CORRELATION = "correlation"
    MAHALANOBIS = "mahalanobis"

    @property
    def higher_is_closer(self) -> bool:
        return self is ScoreKind.CORRELATION


SYNTHETIC = "synthetic"
REAL = "real"


@dataclass(frozen=True)
class AttributionResult:
    predicted_label: str
    score: float
    score_kind: ScoreKind
    per_candidate: dict[str, float]


@dataclass(frozen=True)
class DetectionThreshold:
    tau: float
    calibration_f1: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.calibration_f1 <= 1.0:
            raise ConfigError("calibration_f1 must lie in [0, 1]")


@dataclass(frozen=True)
class Detection:
    decision: str
    min_distance: float
    nearest_label: str


def _values(r) -> np.ndarray:
    return r.values if isinstance(r, ResidualVector) else np.asarray(r, dtype=np.float64)


def _check_dim(v: np.ndarray, fp: Fingerprint) -> None:
    if v.shape[-1] != fp.dim:
        raise ConfigError(f"residual dimension {v.shape[-1]} does not match fingerprint {fp.label!r} ({fp.dim})")


def standardize(x: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-norm copy of ``x``; constant vectors are an error."""
    c = x - x.mean()
    norm = np.linalg.norm(c)
    if norm == 0.0:
        raise ConfigError("cannot normalize a constant (zero-variance) vector")
    return c / norm


def correlation_score(r, fp: Fingerprint) -> float:
    v = _values(r)
    _check_dim(v, fp)
    s = float(np.dot(standardize(v), standardize(fp.mean)))
    return min(1.0, max(-1.0, s))


def _check_mahalanobis(fp: Fingerprint) -> None:
    if fp.n_train < 2:
        raise ConfigError(f"fingerprint {fp.label!r} was built from one residual; Mahalanobis needs n_train >= 2")


def mahalanobis_score(r, fp: Fingerprint) -> float:
    v = _values(r)
    _check_dim(v, fp)
    _check_mahalanobis(fp)
    return float(kernels.whitened_norms(fp.chol_factor, (v - fp.mean)[None, :])[0])


def score_matrix(residuals: np.ndarray, fps: Sequence[Fingerprint], kind: ScoreKind | str) -> np.ndarray:
    """Scores of every residual (rows) against every fingerprint (columns)."""
    kind = ScoreKind(kind)
    x = np.atleast_2d(np.asarray(residuals, dtype=np.float64))
    out = np.empty((x.shape[0], len(fps)))
    for j, fp in enumerate(fps):
        _check_dim(x, fp)
        if kind is ScoreKind.MAHALANOBIS:
            _check_mahalanobis(fp)
            out[:, j] = kernels.whitened_norms(fp.chol_factor, x - fp.mean)
        else:
            f_t = standardize(fp.mean)
            c = x - x.mean(axis=1, keepdims=True)
            norms = np.linalg.norm(c, axis=1)
            if np.any(norms == 0.0):
                raise ConfigError("cannot normalize a constant (zero-variance) residual")
            out[:, j] = np.clip((c @ f_t) / norms, -1.0, 1.0)
    return out


def _check_fingerprint_set(fps: Sequence[Fingerprint]) -> list[Fingerprint]:
    fps = list(fps)
    if not fps:
        raise ConfigError("no fingerprints given")
    for fp in fps[1:]:
        if not fp.same_setup(fps[0]):
            raise ConfigError(f"fingerprints {fps[0].label!r} and {fp.label!r} use different configurations")
    return sorted(fps, key=lambda fp: fp.label)


def _pick(scores: np.ndarray, kind: ScoreKind) -> np.ndarray:
    # argmax/argmin return the first extremum; callers sort candidates by label
    return np.argmax(scores, axis=-1) if kind.higher_is_closer else np.argmin(scores, axis=-1)


def attribute_multi(r, fps: Sequence[Fingerprint], kind: ScoreKind | str = ScoreKind.MAHALANOBIS) -> AttributionResult:
    """Pick the closest fingerprint; exact ties go to the smallest label."""
    kind = ScoreKind(kind)
    fps = _check_fingerprint_set(fps)
    scores = score_matrix(_values(r)[None, :], fps, kind)[0]
    best = int(_pick(scores, kind))
    return AttributionResult(
        fps[best].label,
        float(scores[best]),
        kind,
        {fp.label: float(s) for fp, s in zip(fps, scores)},
    )


def attribute_batch(residuals: np.ndarray, fps: Sequence[Fingerprint], kind: ScoreKind | str) -> list[str]:
    kind = ScoreKind(kind)
    fps = _check_fingerprint_set(fps)
    idx = _pick(score_matrix(residuals, fps, kind), kind)
    return [fps[i].label for i in idx]


def min_distances(residuals: np.ndarray, fps: Sequence[Fingerprint]) -> tuple[np.ndarray, list[str]]:
    fps = _check_fingerprint_set(fps)
    d = score_matrix(residuals, fps, ScoreKind.MAHALANOBIS)
    idx = np.argmin(d, axis=1)
    return d[np.arange(d.shape[0]), idx], [fps[i].label for i in idx]


def threshold_candidates(distances: np.ndarray) -> np.ndarray:
    """Midpoints of sorted distinct values plus one sentinel on each side."""
    u = np.unique(distances)
    mids = 0.5 * (u[:-1] + u[1:])
    return np.concatenate([[u[0] - 1.0], mids, [u[-1] + 1.0]])


def _as_synthetic_mask(labels) -> np.ndarray:
    out = []
    for lab in labels:
        if isinstance(lab, str):
            if lab not in (SYNTHETIC, REAL):
                raise ConfigError(f"labels must be 'synthetic' or 'real', got {lab!r}")
            out.append(lab == SYNTHETIC)
        else:
            out.append(bool(lab))
    return np.array(out, dtype=bool)


def sweep_threshold(min_distances, labels) -> DetectionThreshold:
    """Choose tau maximizing F1 of ``distance < tau => synthetic``.

    Exact F1 ties go to the larger tau.
    """
    d = np.asarray(min_distances, dtype=np.float64)
    pos = _as_synthetic_mask(labels)
    if d.shape != pos.shape:
        raise ConfigError(f"{d.shape[0]} distances but {pos.shape[0]} labels")
    n_pos = int(pos.sum())
    if n_pos == 0 or n_pos == d.shape[0]:
        raise ConfigError("threshold sweep needs both synthetic and real samples")
    order = np.argsort(d, kind="mergesort")
    taus = threshold_candidates(d)
    tp, fp = kernels.f1_counts(d[order], pos[order], taus)
    # compare 2TP/(2TP+FP+FN) exactly via integer cross-multiplication
    num = 2 * tp
    den = 2 * tp + fp + (n_pos - tp)
    best = 0
    for j in range(1, taus.shape[0]):
        if num[j] * den[best] >= num[best] * den[j]:
            best = j
    f1 = float(num[best] / den[best]) if den[best] else 0.0
    return DetectionThreshold(float(taus[best]), f1)


def detect(r, fps: Sequence[Fingerprint], threshold: DetectionThreshold | float) -> Detection:
    tau = threshold.tau if isinstance(threshold, DetectionThreshold) else float(threshold)
    d, labels = min_distances(_values(r)[None, :], fps)
    dist = float(d[0])
    return Detection(SYNTHETIC if dist < tau else REAL, dist, labels[0])
