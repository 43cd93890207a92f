import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specfp.dsp import StftConfig
from specfp.errors import ConfigError
from specfp.fingerprint import Fingerprint, ResidualVector, estimate_fingerprint
from specfp.scoring import (
    DetectionThreshold,
    ScoreKind,
    attribute_multi,
    correlation_score,
    detect,
    mahalanobis_score,
    score_matrix,
    sweep_threshold,
    threshold_candidates,
)

CFG3 = StftConfig(4, 4)  # F = 3
CFG4 = StftConfig(6, 6)  # F = 4
CFG8 = StftConfig(14, 7)  # F = 8


def fp_from(label, mean, cov, cfg):
    return Fingerprint.from_covariance(label, mean, cov, cfg)


def random_fp(rng, label, dim_cfg=CFG8, n=30, offset=0.0):
    x = rng.standard_normal((n, dim_cfg.n_bins)) + offset
    return estimate_fingerprint(label, [ResidualVector(v, dim_cfg, "f") for v in x], sample_rate=16000)


# --- correlation ----------------------------------------------------------------


def test_self_correlation(rng):
    fp = random_fp(rng, "A")
    assert correlation_score(fp.mean, fp) == pytest.approx(1.0, abs=1e-12)


def test_reflected_anticorrelation(rng):
    fp = random_fp(rng, "A")
    r = -fp.mean + 2 * fp.mean.mean()
    assert correlation_score(r, fp) == pytest.approx(-1.0, abs=1e-12)


def test_correlation_hand_case():
    # centered r = [-1.5, -.5, .5, 1.5], centered F = [.5, -.5, -.5, .5]; dot = 0
    fp = fp_from("A", [1.0, 0.0, 0.0, 1.0], np.eye(4), CFG4)
    assert correlation_score([1.0, 2.0, 3.0, 4.0], fp) == pytest.approx(0.0, abs=1e-15)
    # centered r = [-1, 1, 1, -1] / 2 -> perfectly aligned with F after normalization
    assert correlation_score([1.0, 2.0, 2.0, 1.0], fp) == pytest.approx(-1.0, abs=1e-15)


def test_correlation_errors(rng):
    fp = fp_from("A", [1.0, 0.0, 0.0, 1.0], np.eye(4), CFG4)
    with pytest.raises(ConfigError, match="constant"):
        correlation_score([2.0, 2.0, 2.0, 2.0], fp)
    with pytest.raises(ConfigError, match="dimension"):
        correlation_score([1.0, 2.0, 3.0], fp)
    flat = fp_from("B", [1.0, 1.0, 1.0, 1.0], np.eye(4), CFG4)
    with pytest.raises(ConfigError, match="constant"):
        correlation_score([1.0, 2.0, 3.0, 4.0], flat)


@given(st.integers(0, 2**31), st.floats(1e-3, 1e3), st.floats(-1e3, 1e3))
@settings(max_examples=50, deadline=None)
def test_correlation_range_and_affine_invariance(seed, a, b):
    rng = np.random.default_rng(seed)
    fp = fp_from("A", rng.standard_normal(8), np.eye(8), CFG8)
    r = rng.standard_normal(8)
    s = correlation_score(r, fp)
    assert -1.0 - 1e-12 <= s <= 1.0 + 1e-12
    assert correlation_score(a * r + b, fp) == pytest.approx(s, abs=1e-9)


# --- mahalanobis ----------------------------------------------------------------


def test_mahalanobis_zero_at_mean(rng):
    fp = random_fp(rng, "A")
    assert mahalanobis_score(fp.mean, fp) == 0.0


def test_mahalanobis_identity_is_euclidean(rng):
    mean = rng.standard_normal(8)
    fp = fp_from("A", mean, np.eye(8), CFG8)
    r = rng.standard_normal(8)
    assert mahalanobis_score(r, fp) == pytest.approx(np.linalg.norm(r - mean), rel=1e-12)


def test_mahalanobis_explicit_case():
    fp = fp_from("A", [0.0, 0.0, 0.0], np.diag([2.0, 1.0, 4.0]), CFG3)
    assert mahalanobis_score([2.0, 1.0, 2.0], fp) == pytest.approx(2.0, rel=1e-15)


def test_mahalanobis_matches_explicit_inverse(rng):
    for dim_cfg in (CFG3, CFG4, CFG8):
        for _ in range(20):
            fp = random_fp(rng, "A", dim_cfg, n=12)
            r = rng.standard_normal(dim_cfg.n_bins) * 3
            d = r - fp.mean
            want = np.sqrt(d @ np.linalg.inv(fp.covariance) @ d)
            assert mahalanobis_score(r, fp) == pytest.approx(want, rel=1e-8)


@given(st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_mahalanobis_nonnegative_and_positive_off_mean(seed):
    rng = np.random.default_rng(seed)
    fp = random_fp(rng, "A", n=5)
    r = rng.standard_normal(8)
    assert mahalanobis_score(r, fp) > 0.0


def test_mahalanobis_needs_two_residuals():
    fp = estimate_fingerprint("A", [ResidualVector(np.arange(8.0), CFG8, "f")], sample_rate=16000)
    with pytest.raises(ConfigError, match="n_train"):
        mahalanobis_score(np.zeros(8), fp)


# --- attribution -----------------------------------------------------------------


def test_attribute_picks_own_mean(rng):
    a, b = random_fp(rng, "A"), random_fp(rng, "B", offset=2.0)
    res = attribute_multi(a.mean, [b, a], "mahalanobis")
    assert res.predicted_label == "A" and res.score == 0.0
    assert set(res.per_candidate) == {"A", "B"}


def test_attribute_tie_break(rng):
    a = random_fp(rng, "beta")
    twin = Fingerprint("alpha", a.mean, a.chol_factor, a.shrinkage, a.n_train, a.stft_config, a.filter_id, a.sample_rate)
    r = rng.standard_normal(8)
    for kind in ScoreKind:
        assert attribute_multi(r, [a, twin], kind).predicted_label == "alpha"
        assert attribute_multi(r, [twin, a], kind).predicted_label == "alpha"


def test_attribute_matches_brute_force(rng):
    fps = [random_fp(rng, f"S{i}", offset=rng.uniform(-1, 1)) for i in range(5)]
    for kind in ScoreKind:
        for _ in range(100):
            r = rng.standard_normal(8) * 2
            best, best_label = None, None
            for fp in sorted(fps, key=lambda f: f.label):
                if kind is ScoreKind.MAHALANOBIS:
                    d = r - fp.mean
                    s = np.sqrt(d @ np.linalg.inv(fp.covariance) @ d)
                    better = best is None or s < best
                else:
                    rc, fc = r - r.mean(), fp.mean - fp.mean.mean()
                    s = rc @ fc / np.linalg.norm(rc) / np.linalg.norm(fc)
                    better = best is None or s > best
                if better:
                    best, best_label = s, fp.label
            assert attribute_multi(r, fps, kind).predicted_label == best_label


@given(st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_attribution_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    fps = [random_fp(rng, f"S{i}", n=10, offset=i * 0.3) for i in range(4)]
    r = rng.standard_normal(8)
    for kind in ScoreKind:
        res = attribute_multi(r, fps, kind)
        labels = sorted(res.per_candidate)
        for f in (np.exp, lambda v: 3 * v + 7, np.arctan):
            transformed = [f(res.per_candidate[k]) for k in labels]
            pick = np.argmax(transformed) if kind.higher_is_closer else np.argmin(transformed)
            assert labels[pick] == res.predicted_label


def test_attribute_errors(rng):
    with pytest.raises(ConfigError):
        attribute_multi(np.zeros(8), [])
    a = random_fp(rng, "A")
    b = random_fp(rng, "B", dim_cfg=CFG4)
    with pytest.raises(ConfigError, match="different configurations"):
        attribute_multi(np.zeros(8), [a, b])


def test_score_matrix_shape(rng):
    fps = [random_fp(rng, "A"), random_fp(rng, "B")]
    x = rng.standard_normal((7, 8))
    m = score_matrix(x, fps, "mahalanobis")
    assert m.shape == (7, 2)
    assert m[3, 1] == pytest.approx(mahalanobis_score(x[3], fps[1]), rel=1e-12)
    c = score_matrix(x, fps, "correlation")
    assert c[5, 0] == pytest.approx(correlation_score(x[5], fps[0]), abs=1e-12)


# --- threshold sweep / detection ------------------------------------------------------


def exhaustive_best_f1(d, is_synth):
    d = np.asarray(d)
    u = np.unique(d)
    cands = list(0.5 * (u[:-1] + u[1:])) + [u[0] - 1.0, u[-1] + 1.0]
    best = 0.0
    for tau in cands:
        pred = d < tau
        tp = np.sum(pred & is_synth)
        fp = np.sum(pred & ~is_synth)
        fn = np.sum(~pred & is_synth)
        f1 = 2 * tp / (2 * tp + fp + fn)
        best = max(best, f1)
    return best


def test_sweep_separable():
    th = sweep_threshold([0.1, 0.2, 0.9, 1.0], ["synthetic", "synthetic", "real", "real"])
    assert th.tau == pytest.approx(0.55)
    assert th.calibration_f1 == 1.0


def test_sweep_all_equal():
    th = sweep_threshold([0.5] * 4, ["synthetic", "real", "synthetic", "real"])
    assert th.calibration_f1 == pytest.approx(2 / 3)
    assert th.tau > 0.5
    th = sweep_threshold([0.5] * 4, ["synthetic", "real", "real", "real"])
    assert th.calibration_f1 == pytest.approx(2 * 0.25 / 1.25)


def test_sweep_matches_exhaustive_scan():
    for seed in range(200):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 40))
        d = np.round(rng.exponential(1.0, n), int(rng.integers(0, 3)))
        is_synth = rng.random(n) < 0.5
        if is_synth.all() or not is_synth.any():
            is_synth[0] = not is_synth[0]
        labels = np.where(is_synth, "synthetic", "real")
        th = sweep_threshold(d, labels)
        assert th.calibration_f1 == exhaustive_best_f1(d, is_synth)
        pred = d < th.tau
        tp, fp, fn = np.sum(pred & is_synth), np.sum(pred & ~is_synth), np.sum(~pred & is_synth)
        assert 2 * tp / (2 * tp + fp + fn) == th.calibration_f1


def test_sweep_tie_prefers_larger_tau():
    # tau=0.15 and tau=0.35 both give F1 = 2/3... the larger one wins
    d = [0.1, 0.2, 0.5]
    th = sweep_threshold(d, ["synthetic", "real", "synthetic"])
    cands = threshold_candidates(np.array(d))
    assert th.tau == max(
        t for t in cands if exhaustive_best_f1([x for x in d], np.array([1, 0, 1], bool)) == th.calibration_f1 and t >= th.tau
    )
    assert th.tau > 0.5


def test_sweep_errors():
    with pytest.raises(ConfigError, match="both"):
        sweep_threshold([0.1, 0.2], ["synthetic", "synthetic"])
    with pytest.raises(ConfigError):
        sweep_threshold([0.1, 0.2], ["synthetic"])
    with pytest.raises(ConfigError):
        sweep_threshold([0.1, 0.2], ["synthetic", "fake"])


def test_detect_boundaries(rng):
    fps = [random_fp(rng, "A"), random_fp(rng, "B", offset=3.0)]
    res = detect(fps[1].mean, fps, DetectionThreshold(0.5))
    assert res.decision == "synthetic" and res.min_distance == 0.0 and res.nearest_label == "B"
    assert detect(fps[1].mean, fps, DetectionThreshold(0.0)).decision == "real"


def test_detect_matches_brute_force_and_is_monotone(rng):
    fps = [random_fp(rng, f"S{i}", offset=i) for i in range(3)]
    for _ in range(50):
        r = rng.standard_normal(8) * 2
        d = min(np.sqrt((r - f.mean) @ np.linalg.inv(f.covariance) @ (r - f.mean)) for f in fps)
        tau = rng.uniform(0, 10)
        res = detect(r, fps, DetectionThreshold(tau))
        assert res.min_distance == pytest.approx(d, rel=1e-9)
        assert res.decision == ("synthetic" if d < tau else "real")
        decisions = [detect(r, fps, t).decision for t in np.linspace(0, 12, 25)]
        first = decisions.index("synthetic") if "synthetic" in decisions else len(decisions)
        assert all(x == "synthetic" for x in decisions[first:])


def test_detection_threshold_invariant():
    with pytest.raises(ConfigError):
        DetectionThreshold(1.0, 1.5)
