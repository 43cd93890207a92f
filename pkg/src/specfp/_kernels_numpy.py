"""Pure-numpy implementations of the hot loops.

Every function here has a twin in ``_kernels_numba`` with the same signature
and the same results (up to floating-point summation order).
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular
from scipy.stats import rankdata


def fir_causal(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Causal FIR output y[n] = sum_k h[k] x[n-k], truncated to len(x)."""
    return np.convolve(x, h)[: x.shape[0]]


def log_mean_frames(mag: np.ndarray, eps: float) -> np.ndarray:
    """Mean over frames (rows) of 10*log10(max(mag, eps))."""
    return np.mean(10.0 * np.log10(np.maximum(mag, eps)), axis=0)


def log_sum_frames(mag: np.ndarray, eps: float) -> np.ndarray:
    return np.sum(10.0 * np.log10(np.maximum(mag, eps)), axis=0)


def rank_auc(pos: np.ndarray, neg: np.ndarray) -> float:
    n_pos = pos.shape[0]
    n_neg = neg.shape[0]
    ranks = rankdata(np.concatenate([pos, neg]))
    u = ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def f1_counts(sorted_d: np.ndarray, sorted_pos: np.ndarray, taus: np.ndarray):
    """True/false positive counts of the rule ``d < tau`` for every tau.

    ``sorted_d`` must be ascending; ``sorted_pos`` marks the positives.
    """
    k = np.searchsorted(sorted_d, taus, side="left")
    cum_pos = np.concatenate([[0], np.cumsum(sorted_pos.astype(np.int64))])
    tp = cum_pos[k]
    fp = k - tp
    return tp.astype(np.int64), fp.astype(np.int64)


def whitened_norms(chol: np.ndarray, diffs: np.ndarray) -> np.ndarray:
    """Row-wise ||chol^{-1} d|| for a lower-triangular ``chol``."""
    z = solve_triangular(chol, diffs.T, lower=True, check_finite=False)
    return np.sqrt(np.sum(z * z, axis=0))
