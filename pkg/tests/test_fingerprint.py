import json
import math

import numpy as np
import pytest

from specfp.audio_io import AudioSignal
from specfp.dsp import DEFAULT_LOWPASS, FirFilter, StftConfig, apply_fir, average_energy, design_fir
from specfp.errors import ConfigError, FingerprintFileError
from specfp.fingerprint import (
    Fingerprint,
    ResidualVector,
    estimate_fingerprint,
    load_fingerprint,
    residual,
    residual_from_pair,
    save_fingerprint,
)

FS = 22050
CFG = StftConfig(128, 2)
SMALL = StftConfig(14, 7)  # F = 8


def _rv(values, cfg=SMALL, fid="f"):
    return ResidualVector(np.asarray(values, dtype=float), cfg, fid)


def _random_fp(rng, label="X", cfg=SMALL, n=20):
    rs = [_rv(rng.standard_normal(cfg.n_bins), cfg) for _ in range(n)]
    return estimate_fingerprint(label, rs, sample_rate=16000)


def test_identity_filter_gives_zero(rng):
    sig = AudioSignal(rng.standard_normal(2000), FS)
    r = residual(sig, FirFilter([1.0], FS), CFG)
    assert np.all(r.values == 0.0)


def test_zero_signal_gives_zero():
    r = residual(AudioSignal(np.zeros(1000), FS), design_fir(DEFAULT_LOWPASS, FS), CFG)
    assert np.all(r.values == 0.0)


def test_residual_is_energy_difference(rng):
    sig = AudioSignal(rng.standard_normal(5000), FS)
    fir = design_fir(DEFAULT_LOWPASS, FS)
    e_x = average_energy(sig, CFG).values
    e_f = average_energy(AudioSignal(np.convolve(sig.samples, fir.coefficients)[:5000], FS), CFG).values
    r = residual(sig, fir, CFG)
    assert r.filter_id == "lowpass:1000:1500"
    np.testing.assert_allclose(r.values, e_x - e_f, atol=1e-12)


def test_pair_identity_and_consistency(rng):
    sig = AudioSignal(rng.standard_normal(3000), FS)
    assert np.all(residual_from_pair(sig, sig, CFG).values == 0.0)
    fir = design_fir(DEFAULT_LOWPASS, FS)
    a = residual_from_pair(sig, apply_fir(sig, fir), CFG, "lp")
    b = residual(sig, fir, CFG)
    assert a.filter_id == "external:lp"
    np.testing.assert_allclose(a.values, b.values, atol=1e-12)


def test_pair_half_amplitude(rng):
    sig = AudioSignal(rng.standard_normal(4000), FS)
    half = AudioSignal(0.5 * sig.samples, FS)
    r = residual_from_pair(sig, half, CFG)
    np.testing.assert_allclose(r.values, 10 * np.log10(2.0), atol=1e-6)
    assert 10 * np.log10(2.0) == pytest.approx(3.0103, abs=1e-4)


def test_pair_durations_may_differ(rng):
    a = AudioSignal(rng.standard_normal(4000), FS)
    b = AudioSignal(rng.standard_normal(3000), FS)
    assert residual_from_pair(a, b, CFG).values.shape == (65,)
    with pytest.raises(ConfigError, match="sample-rate"):
        residual_from_pair(a, AudioSignal(b.samples, 16000), CFG)


def test_residual_duration_invariance(rng):
    hop = 16
    cfg = StftConfig(128, hop)
    x = np.tile(rng.standard_normal(hop), 64)
    fir = design_fir(DEFAULT_LOWPASS, FS)
    # steady-state part only, so the filter's start-up transient is excluded
    x = apply_fir(AudioSignal(np.tile(x, 4), FS), fir).samples[-len(x) :]
    once = residual(AudioSignal(x, FS), FirFilter([0.5, 0.5], FS), cfg).values
    twice = residual(AudioSignal(np.concatenate([x, x]), FS), FirFilter([0.5, 0.5], FS), cfg).values
    assert np.max(np.abs(once - twice)) < 1e-9


def test_residual_vector_invariants():
    with pytest.raises(ConfigError):
        _rv(np.zeros(7))
    with pytest.raises(ConfigError):
        _rv([0, 0, 0, 0, 0, 0, 0, np.inf])


def test_single_residual_mean():
    r = _rv(np.arange(8.0))
    fp = estimate_fingerprint("A", [r], sample_rate=FS)
    np.testing.assert_array_equal(fp.mean, r.values)
    assert fp.n_train == 1 and fp.shrinkage > 0


def test_duplication_keeps_mean(rng):
    rs = [_rv(rng.standard_normal(8)) for _ in range(7)]
    a = estimate_fingerprint("A", rs, sample_rate=FS)
    b = estimate_fingerprint("A", rs * 3, sample_rate=FS)
    np.testing.assert_allclose(a.mean, b.mean, rtol=1e-15, atol=1e-15)
    x = np.stack([r.values for r in rs * 3])
    c = x - x.mean(0)
    np.testing.assert_allclose(b.covariance - b.shrinkage * np.eye(8), c.T @ c / (len(x) - 1), atol=1e-12)


def test_mean_and_covariance_two_pass_oracle(rng):
    x = rng.standard_normal((50, 8)) * np.arange(1, 9) + 3.0
    fp = estimate_fingerprint("A", [_rv(v) for v in x], shrinkage=0.0, sample_rate=FS)
    mean = [sum(x[i, j] for i in range(50)) / 50 for j in range(8)]
    cov = np.zeros((8, 8))
    for a in range(8):
        for b in range(8):
            cov[a, b] = sum((x[i, a] - mean[a]) * (x[i, b] - mean[b]) for i in range(50)) / 49
    np.testing.assert_allclose(fp.mean, mean, rtol=1e-10)
    np.testing.assert_allclose(fp.covariance, cov, rtol=1e-10, atol=1e-12)


def test_mean_permutation_invariant(rng):
    rs = [_rv(rng.standard_normal(8) * 10 ** rng.uniform(-3, 3)) for _ in range(40)]
    a = estimate_fingerprint("A", rs, sample_rate=FS).mean
    for seed in range(5):
        perm = np.random.default_rng(seed).permutation(40)
        b = estimate_fingerprint("A", [rs[i] for i in perm], sample_rate=FS).mean
        np.testing.assert_array_equal(a, b)


def test_default_shrinkage_scale(rng):
    x = rng.standard_normal((30, 8))
    fp = estimate_fingerprint("A", [_rv(v) for v in x], sample_rate=FS)
    c = x - x.mean(0)
    cov = c.T @ c / 29
    assert fp.shrinkage == pytest.approx(1e-3 * np.trace(cov) / 8, rel=1e-12)


def test_cholesky_succeeds_for_rank_deficient(rng):
    # N < F: sample covariance is singular, shrinkage keeps it positive definite
    x = rng.standard_normal((3, 65))
    fp = estimate_fingerprint("A", [_rv(v, CFG) for v in x], sample_rate=FS)
    assert np.all(np.diag(fp.chol_factor) > 0)


def test_zero_shrinkage_singular_fails(rng):
    x = rng.standard_normal((3, 8))
    with pytest.raises(ConfigError, match="larger shrinkage"):
        estimate_fingerprint("A", [_rv(v) for v in x], shrinkage=0.0, sample_rate=FS)


def test_mixed_setups_rejected(rng):
    with pytest.raises(ConfigError, match="mixed"):
        estimate_fingerprint("A", [_rv(np.ones(8)), _rv(np.ones(8), fid="g")], sample_rate=FS)
    with pytest.raises(ConfigError):
        estimate_fingerprint("A", [], sample_rate=FS)


def test_fingerprint_invariants(rng):
    fp = _random_fp(rng)
    with pytest.raises(ConfigError, match="lower-triangular"):
        Fingerprint("A", fp.mean, fp.chol_factor.T, 0.0, 2, SMALL, "f", FS)
    with pytest.raises(ConfigError):
        Fingerprint("A", fp.mean[:5], fp.chol_factor, 0.0, 2, SMALL, "f", FS)
    with pytest.raises(ConfigError):
        Fingerprint("A", fp.mean, -fp.chol_factor, 0.0, 2, SMALL, "f", FS)
    with pytest.raises(ConfigError):
        Fingerprint("A", fp.mean, fp.chol_factor, 0.0, 0, SMALL, "f", FS)


def _assert_same(a: Fingerprint, b: Fingerprint):
    assert a.label == b.label and a.n_train == b.n_train and a.sample_rate == b.sample_rate
    assert a.shrinkage == b.shrinkage and a.stft_config == b.stft_config
    assert a.filter_id == b.filter_id and a.filter_spec == b.filter_spec
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.chol_factor, b.chol_factor)
    if a.coefficients is None:
        assert b.coefficients is None
    else:
        np.testing.assert_array_equal(a.coefficients, b.coefficients)


def test_round_trip_with_filter(tmp_path, rng):
    fir = design_fir(DEFAULT_LOWPASS, FS)
    rs = [ResidualVector(rng.standard_normal(65), CFG, "lowpass:1000:1500") for _ in range(10)]
    fp = estimate_fingerprint("PWG", rs, sample_rate=FS, filter_spec=DEFAULT_LOWPASS, coefficients=fir.coefficients)
    save_fingerprint(fp, tmp_path / "pwg.fp")
    _assert_same(fp, load_fingerprint(tmp_path / "pwg.fp"))
    doc = json.loads((tmp_path / "pwg.fp").read_text())
    assert doc["format_version"] == 1
    assert len(doc["chol_factor"]) == 65 * 66 // 2


def test_round_trip_external(tmp_path, rng):
    rs = [ResidualVector(rng.standard_normal(8), SMALL, "external:encodec") for _ in range(4)]
    fp = estimate_fingerprint("A", rs, sample_rate=24000)
    save_fingerprint(fp, tmp_path / "a.fp")
    back = load_fingerprint(tmp_path / "a.fp")
    _assert_same(fp, back)
    assert back.filter_id == "external:encodec"


def test_fuzz_round_trip_is_bit_exact(tmp_path):
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 12))
        scale = 10 ** rng.uniform(-6, 6)
        rs = [_rv(rng.standard_normal(8) * scale) for _ in range(n)]
        fp = estimate_fingerprint(f"S{seed}", rs, sample_rate=int(rng.integers(8000, 48000)))
        p = tmp_path / f"{seed}.fp"
        save_fingerprint(fp, p)
        back = load_fingerprint(p)
        assert np.max(np.abs(back.mean - fp.mean)) == 0
        assert np.max(np.abs(back.chol_factor - fp.chol_factor)) == 0
        _assert_same(fp, back)


def test_load_errors(tmp_path, rng):
    fp = _random_fp(rng)
    p = tmp_path / "x.fp"
    save_fingerprint(fp, p)
    doc = json.loads(p.read_text())

    def write(d):
        q = tmp_path / "bad.fp"
        q.write_text(json.dumps(d))
        return q

    with pytest.raises(FingerprintFileError, match="expected F"):
        load_fingerprint(write({**doc, "mean": doc["mean"][:-1]}))
    with pytest.raises(FingerprintFileError, match="format_version"):
        load_fingerprint(write({**doc, "format_version": 99}))
    with pytest.raises(FingerprintFileError, match="chol_factor"):
        load_fingerprint(write({**doc, "chol_factor": doc["chol_factor"][:-2]}))
    with pytest.raises(FingerprintFileError):
        load_fingerprint(write({k: v for k, v in doc.items() if k != "label"}))
    garbage = tmp_path / "garbage.fp"
    garbage.write_text("{not json")
    with pytest.raises(FingerprintFileError):
        load_fingerprint(garbage)


def test_lossless_decimal_encoding(tmp_path):
    # values whose shortest repr needs all 17 significant digits
    vals = np.array([0.1 + 0.2, 1 / 3, math.pi * 1e-300, 2.0**-1074, 1e308, -0.0, 5e-324, 123456789.123456789])
    fp = estimate_fingerprint("A", [_rv(vals)], sample_rate=FS)
    save_fingerprint(fp, tmp_path / "v.fp")
    np.testing.assert_array_equal(load_fingerprint(tmp_path / "v.fp").mean, vals)
