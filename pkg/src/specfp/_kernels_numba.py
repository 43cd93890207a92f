"""numba-compiled twins of ``_kernels_numpy``."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

_OPTS = dict(cache=True, nogil=True)
# reassociation lets LLVM vectorize the reductions; inputs are always finite
_FAST = dict(_OPTS, fastmath=True)
_DB = 10.0 / math.log(10.0)
_LOG_BLOCK = 8


@njit(**_FAST)
def fir_causal(x, h):
    n = x.shape[0]
    k_len = h.shape[0]
    hr = h[::-1].copy()
    xp = np.zeros(n + k_len - 1)
    xp[k_len - 1 :] = x
    y = np.empty(n)
    for i in range(n):
        acc = 0.0
        for k in range(k_len):
            acc += hr[k] * xp[i + k]
        y[i] = acc
    return y


@njit(**_FAST)
def log_sum_frames(mag, eps):
    # sum of logs as the log of blocked products: one log call per block of
    # _LOG_BLOCK frames (numba has no vectorized log); blocks whose product
    # leaves the normal double range fall back to per-frame logs
    n_frames, n_bins = mag.shape
    out = np.zeros(n_bins)
    prod = np.empty(n_bins)
    full = n_frames - n_frames % _LOG_BLOCK
    for t0 in range(0, full, _LOG_BLOCK):
        prod[:] = 1.0
        for t in range(t0, t0 + _LOG_BLOCK):
            for f in range(n_bins):
                prod[f] *= max(mag[t, f], eps)
        for f in range(n_bins):
            p = prod[f]
            if 1e-300 < p < 1e300:
                out[f] += math.log(p)
            else:
                for t in range(t0, t0 + _LOG_BLOCK):
                    out[f] += math.log(max(mag[t, f], eps))
    for t in range(full, n_frames):
        for f in range(n_bins):
            out[f] += math.log(max(mag[t, f], eps))
    return out * _DB


@njit(**_OPTS)
def log_mean_frames(mag, eps):
    return log_sum_frames(mag, eps) / mag.shape[0]


@njit(**_OPTS)
def rank_auc(pos, neg):
    n_pos = pos.shape[0]
    n_neg = neg.shape[0]
    allv = np.concatenate((pos, neg))
    order = np.argsort(allv, kind="mergesort")
    n = allv.shape[0]
    rank_sum = 0.0
    i = 0
    while i < n:
        j = i
        while j + 1 < n and allv[order[j + 1]] == allv[order[i]]:
            j += 1
        # ranks i+1 .. j+1 share their average
        avg = 0.5 * (i + j) + 1.0
        for m in range(i, j + 1):
            if order[m] < n_pos:
                rank_sum += avg
        i = j + 1
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@njit(**_OPTS)
def f1_counts(sorted_d, sorted_pos, taus):
    n = sorted_d.shape[0]
    m = taus.shape[0]
    tp = np.zeros(m, dtype=np.int64)
    fp = np.zeros(m, dtype=np.int64)
    # taus need not be sorted; walk each one with a binary search
    cum = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        cum[i + 1] = cum[i] + (1 if sorted_pos[i] else 0)
    for j in range(m):
        k = np.searchsorted(sorted_d, taus[j])
        tp[j] = cum[k]
        fp[j] = k - cum[k]
    return tp, fp


@njit(**_FAST)
def whitened_norms(chol, diffs):
    n_rows, dim = diffs.shape
    out = np.empty(n_rows)
    z = np.empty(dim)
    for r in range(n_rows):
        acc = 0.0
        for i in range(dim):
            s = diffs[r, i]
            for j in range(i):
                s -= chol[i, j] * z[j]
            z[i] = s / chol[i, i]
            acc += z[i] * z[i]
        out[r] = math.sqrt(acc)
    return out
