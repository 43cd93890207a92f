"""Backend selection for the numeric inner loops.

numba is used when importable unless ``SPECFP_NO_NUMBA`` is set to a truthy
value, in which case the pure-numpy implementations are used. Both backends
expose the same functions; ``get_backend(name)`` returns either one
explicitly, which is what the tests and the benchmark use.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_numpy

_TRUTHY = {"1", "true", "yes", "on"}


def numba_disabled() -> bool:
    return os.environ.get("SPECFP_NO_NUMBA", "").strip().lower() in _TRUTHY


def _load_numba() -> ModuleType | None:
    try:
        from . import _kernels_numba
    except ImportError:
        return None
    return _kernels_numba


def available_backends() -> list[str]:
    names = ["numpy"]
    if _load_numba() is not None:
        names.append("numba")
    return names


def get_backend(name: str) -> ModuleType:
    if name == "numpy":
        return _kernels_numpy
    if name == "numba":
        mod = _load_numba()
        if mod is None:
            raise RuntimeError("numba backend requested but numba is not importable")
        return mod
    raise ValueError(f"unknown kernel backend {name!r}")


_active = _kernels_numpy if numba_disabled() else (_load_numba() or _kernels_numpy)
BACKEND = "numba" if _active is not _kernels_numpy else "numpy"

fir_causal = _active.fir_causal
log_mean_frames = _active.log_mean_frames
log_sum_frames = _active.log_sum_frames
rank_auc = _active.rank_auc
f1_counts = _active.f1_counts
whitened_norms = _active.whitened_norms
