"""AUROC and classification metrics."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import kernels
from .errors import ConfigError

_POS = {"positive", "pos", "synthetic", "target"}
_NEG = {"negative", "neg", "real", "other"}


def _positive_mask(labels) -> np.ndarray:
    out = []
    for lab in labels:
        if isinstance(lab, str):
            key = lab.lower()
            if key in _POS:
                out.append(True)
            elif key in _NEG:
                out.append(False)
            else:
                raise ConfigError(f"unrecognized binary label {lab!r}")
        else:
            out.append(bool(lab))
    return np.array(out, dtype=bool)


def auroc(scores, labels) -> float:
    """Mann-Whitney AUROC; higher scores mean "more positive", ties count 1/2."""
    s = np.asarray(scores, dtype=np.float64)
    pos = _positive_mask(labels)
    if s.shape != pos.shape:
        raise ConfigError(f"{s.shape[0]} scores but {pos.shape[0]} labels")
    if pos.all() or not pos.any():
        raise ConfigError("AUROC needs both positive and negative samples")
    return float(kernels.rank_auc(s[pos], s[~pos]))


def macro_metrics(predictions: Sequence[str], truths: Sequence[str]) -> dict[str, float]:
    """Accuracy plus one-vs-rest precision/recall/F1 macro-averaged over the true classes."""
    pred = np.asarray(list(predictions), dtype=object)
    true = np.asarray(list(truths), dtype=object)
    if pred.shape != true.shape:
        raise ConfigError(f"{pred.shape[0]} predictions but {true.shape[0]} truths")
    if true.shape[0] == 0:
        raise ConfigError("macro metrics need at least one sample")
    precision, recall, f1 = [], [], []
    for c in sorted(set(true.tolist())):
        tp = int(np.sum((pred == c) & (true == c)))
        n_pred = int(np.sum(pred == c))
        n_true = int(np.sum(true == c))
        p = tp / n_pred if n_pred else 0.0
        r = tp / n_true
        precision.append(p)
        recall.append(r)
        f1.append(2 * p * r / (p + r) if p + r > 0 else 0.0)
    return {
        "accuracy": float(np.mean(pred == true)),
        "f1": float(np.mean(f1)),
        "precision": float(np.mean(precision)),
        "recall": float(np.mean(recall)),
    }


def binary_metrics(predicted_positive, truly_positive) -> dict[str, float]:
    """Accuracy and positive-class precision/recall/F1."""
    p = np.asarray(predicted_positive, dtype=bool)
    t = np.asarray(truly_positive, dtype=bool)
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    fn = int(np.sum(~p & t))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 0.0
    return {
        "accuracy": float(np.mean(p == t)),
        "f1": float(f1),
        "precision": float(precision),
        "recall": float(recall),
    }
