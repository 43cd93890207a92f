"""Time the numba kernels against their pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 20]

Also runs one end-to-end residual extraction per backend in a subprocess,
since the backend is fixed at import time by SPECFP_NO_NUMBA.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from specfp import kernels


def workloads(rng):
    x = rng.standard_normal(11025)
    h = rng.standard_normal(161)
    frames = np.lib.stride_tricks.sliding_window_view(x, 128)[::2] * np.hanning(128)
    mag = np.abs(np.fft.rfft(frames, axis=1))
    pos, neg = rng.standard_normal(4000), rng.standard_normal(4000) - 0.3
    d = np.sort(rng.exponential(1.0, 4000))
    is_pos = rng.random(4000) < 0.5
    taus = np.concatenate([[d[0] - 1], 0.5 * (d[1:] + d[:-1]), [d[-1] + 1]])
    a = rng.standard_normal((65, 65))
    chol = np.linalg.cholesky(a @ a.T + 65 * np.eye(65))
    diffs = rng.standard_normal((800, 65))
    return {
        "fir_causal (0.5 s clip, 161 taps)": ("fir_causal", (x, h)),
        "log_sum_frames (5449 x 65)": ("log_sum_frames", (mag, 1e-10)),
        "rank_auc (4000 + 4000)": ("rank_auc", (pos, neg)),
        "f1_counts (4000 distances)": ("f1_counts", (d, is_pos, taus)),
        "whitened_norms (800 x 65)": ("whitened_norms", (chol, diffs)),
    }


E2E = """
import time, numpy as np
from specfp import kernels
from specfp.audio_io import AudioSignal
from specfp.dsp import DEFAULT_LOWPASS, LOWPASS_STFT, design_fir
from specfp.fingerprint import residual
rng = np.random.default_rng(0)
fir = design_fir(DEFAULT_LOWPASS, 22050)
sigs = [AudioSignal(rng.standard_normal(11025), 22050) for _ in range(40)]
residual(sigs[0], fir, LOWPASS_STFT)
t0 = time.perf_counter()
for s in sigs:
    residual(s, fir, LOWPASS_STFT)
print(kernels.BACKEND, (time.perf_counter() - t0) / len(sigs))
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    names = kernels.available_backends()
    if "numba" not in names:
        print("numba is not importable; only the numpy backend can be timed")
    backends = {n: kernels.get_backend(n) for n in names}
    jobs = workloads(np.random.default_rng(0))

    print(f"{'kernel':38s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, (fn, fargs) in jobs.items():
        times = []
        outs = []
        for name in names:
            f = getattr(backends[name], fn)
            outs.append(f(*fargs))  # also triggers JIT compilation
            times.append(min(timeit.repeat(lambda: f(*fargs), number=1, repeat=args.repeat)))
        line = f"{label:38s}" + "".join(f"{t * 1e3:10.3f}ms" for t in times)
        if len(names) > 1:
            line += f"{times[0] / times[1]:11.1f}x"
            a, b = (np.concatenate([np.ravel(v) for v in (o if isinstance(o, tuple) else (o,))]) for o in outs)
            assert np.allclose(a, b, rtol=1e-9, atol=1e-9), f"{fn}: backends disagree"
        print(line)

    print("\nend-to-end residual (0.5 s clip, 128:2 STFT), seconds per clip:")
    for flag in ("1", "0"):
        env = dict(os.environ, SPECFP_NO_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", E2E], env=env, capture_output=True, text=True, check=True)
        backend, secs = res.stdout.split()
        print(f"  {backend:8s} {float(secs):.4f}")


if __name__ == "__main__":
    main()
