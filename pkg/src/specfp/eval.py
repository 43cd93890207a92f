"""Evaluation protocols over a manifest of labelled clips.

Each protocol returns an EvalReport; all randomness derives from the seed.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .audio_io import AudioSignal, NoiseSpec, load_wav, mix_noise
from .dsp import CODEC_STFT, LOWPASS_STFT, DEFAULT_LOWPASS, FilterSpec, StftConfig, design_fir
from .errors import ConfigError
from .fingerprint import (
    EXTERNAL_PREFIX,
    Fingerprint,
    ResidualVector,
    estimate_fingerprint,
    residual,
    residual_from_pair,
)
from .fixtures import clip_seed
from .manifest import REAL_LABEL, Manifest, ManifestEntry, split_manifest
from .metrics import auroc, binary_metrics, macro_metrics
from .scoring import ScoreKind, attribute_batch, min_distances, score_matrix, sweep_threshold

SINGLE_RATIOS = (0.8, 0.0, 0.2)
THREE_WAY_RATIOS = (0.8, 0.1, 0.1)
AVG_ROW = "Avg."


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("SPECFP_JOBS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class FeatureConfig:
    """How residuals are extracted and scored.

    ``filter`` is a FilterSpec or an ``external:<tag>`` string; the external
    form reads each clip's pre-filtered companion from ``companion_dir`` at
    the same relative path as in the manifest.
    """

    filter: FilterSpec | str = DEFAULT_LOWPASS
    stft: StftConfig = LOWPASS_STFT
    score_kind: ScoreKind = ScoreKind.MAHALANOBIS
    companion_dir: str | None = None
    shrinkage: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "score_kind", ScoreKind(self.score_kind))
        if isinstance(self.filter, str):
            if not self.filter.startswith(EXTERNAL_PREFIX) or len(self.filter) == len(EXTERNAL_PREFIX):
                raise ConfigError(f"filter must be a FilterSpec or 'external:<tag>', got {self.filter!r}")
            if self.companion_dir is None:
                raise ConfigError("external filters need a companion_dir with the pre-filtered clips")

    @property
    def external(self) -> bool:
        return isinstance(self.filter, str)

    @property
    def filter_id(self) -> str:
        return self.filter if isinstance(self.filter, str) else str(self.filter)

    @property
    def name(self) -> str:
        return f"{self.filter_id} stft={self.stft} {self.score_kind.value}"

    def describe(self) -> dict:
        d = {"filter": self.filter_id, "stft": str(self.stft), "score": self.score_kind.value}
        if not self.external:
            d["stopband_atten_db"] = self.filter.stopband_atten_db
        if self.companion_dir is not None:
            d["companion_dir"] = self.companion_dir
        d["shrinkage"] = "auto" if self.shrinkage is None else self.shrinkage
        return d


def codec_features(companion_dir: str, tag: str = "encodec") -> FeatureConfig:
    """External-codec residuals with the 2048:128 STFT and correlation scoring."""
    return FeatureConfig(EXTERNAL_PREFIX + tag, CODEC_STFT, ScoreKind.CORRELATION, companion_dir)


# --- residual extraction -----------------------------------------------------


@lru_cache(maxsize=32)
def _cached_fir(spec: FilterSpec, sample_rate: int):
    return design_fir(spec, sample_rate)


@dataclass(frozen=True)
class _Task:
    path: str
    features: FeatureConfig
    companion: str | None = None
    noise_path: str | None = None
    snr_db: float | None = None
    noise_seed: int = 0


@lru_cache(maxsize=64)
def _cached_noise(path: str) -> AudioSignal:
    return load_wav(path)


def _run_task(task: _Task) -> tuple[np.ndarray, int]:
    try:
        sig = load_wav(task.path)
        if task.noise_path is not None:
            sig = mix_noise(sig, _cached_noise(task.noise_path), NoiseSpec(task.snr_db, task.noise_seed))
        f = task.features
        if f.external:
            r = residual_from_pair(sig, load_wav(task.companion), f.stft, f.filter)
        else:
            r = residual(sig, _cached_fir(f.filter, sig.sample_rate), f.stft)
    except (ConfigError, ValueError) as exc:
        raise ConfigError(f"{task.path}: {exc}") from exc
    return r.values, sig.sample_rate


@dataclass(frozen=True)
class NoiseCondition:
    noise_paths: tuple[str, ...]
    snr_db: float
    seed: int


class ResidualStore:
    """Memoized residual extraction for the clips of one manifest.

    Results depend only on (clip, features, noise condition), never on the
    job count or request order.
    """

    def __init__(self, manifest: Manifest, jobs: int | None = None):
        self.manifest = manifest
        self.jobs = default_jobs() if jobs is None else max(1, int(jobs))
        self._cache: dict[tuple, tuple[np.ndarray, int]] = {}

    def _task(self, entry: ManifestEntry, features: FeatureConfig, noise: NoiseCondition | None) -> _Task:
        path = self.manifest.resolve(entry)
        companion = None
        if features.external:
            rel = entry.path if not os.path.isabs(entry.path) else os.path.relpath(entry.path, self.manifest.root)
            companion = os.path.join(features.companion_dir, rel)
        if noise is None:
            return _Task(path, features, companion)
        pick = clip_seed(noise.seed, entry.path, 0) % len(noise.noise_paths)
        return _Task(
            path, features, companion, noise.noise_paths[pick], noise.snr_db, clip_seed(noise.seed, entry.path, 1)
        )

    def residuals(
        self, entries: Sequence[ManifestEntry], features: FeatureConfig, noise: NoiseCondition | None = None
    ) -> tuple[np.ndarray, int]:
        """(n, F) residual matrix for ``entries`` and their common sample rate."""
        if not entries:
            raise ConfigError("no clips to extract residuals from")
        keys = [(e.path, features, noise) for e in entries]
        missing = [(k, e) for k, e in zip(keys, entries) if k not in self._cache]
        missing = list({k: e for k, e in missing}.items())
        if missing:
            tasks = [self._task(e, features, noise) for _, e in missing]
            if self.jobs > 1 and len(tasks) > 1:
                with ProcessPoolExecutor(self.jobs) as pool:
                    results = list(pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * self.jobs))))
            else:
                results = [_run_task(t) for t in tasks]
            for (k, _), res in zip(missing, results):
                self._cache[k] = res
        rows = [self._cache[k] for k in keys]
        rates = {sr for _, sr in rows}
        if len(rates) != 1:
            raise ConfigError(f"clips have mixed sample rates {sorted(rates)}; resample them beforehand")
        return np.stack([v for v, _ in rows]), rates.pop()


def build_fingerprint(
    label: str, entries: Sequence[ManifestEntry], features: FeatureConfig, store: ResidualStore
) -> Fingerprint:
    x, sr = store.residuals(entries, features)
    vectors = [ResidualVector(v, features.stft, features.filter_id) for v in x]
    spec = None if features.external else features.filter
    coeffs = None if features.external else _cached_fir(features.filter, sr).coefficients
    return estimate_fingerprint(label, vectors, features.shrinkage, sample_rate=sr, filter_spec=spec, coefficients=coeffs)


# --- reports -------------------------------------------------------------------


@dataclass
class Table:
    """Grid of per-trial values; ``None`` marks an empty cell (e.g. the diagonal)."""

    rows: list[str]
    columns: list[str]
    trials: dict[tuple[str, str], list[float]] = field(default_factory=dict)
    digits: int = 2
    corner: str = "Source \\ Target"

    def add(self, row: str, col: str, value: float) -> None:
        self.trials.setdefault((row, col), []).append(float(value))

    def mean(self, row: str, col: str) -> float | None:
        v = self.trials.get((row, col))
        return float(np.mean(v)) if v else None

    def std(self, row: str, col: str) -> float | None:
        v = self.trials.get((row, col))
        return float(np.std(v)) if v else None

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "columns": self.columns,
            "mean": [[self.mean(r, c) for c in self.columns] for r in self.rows],
            "std": [[self.std(r, c) for c in self.columns] for r in self.rows],
        }


@dataclass
class EvalReport:
    task: str
    tables: dict[str, Table]
    metrics: dict[str, float]
    config_echo: dict
    seed: int
    curve: list[tuple[float, float]] | None = None

    def to_dict(self) -> dict:
        d = {
            "task": self.task,
            "seed": self.seed,
            "config": self.config_echo,
            "metrics": self.metrics,
            "tables": {k: t.to_dict() for k, t in self.tables.items()},
        }
        if self.curve is not None:
            d["curve"] = [{"snr_db": s, "auroc": a} for s, a in self.curve]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def curve_csv(self) -> str:
        lines = ["snr_db,auroc"]
        lines += [f"{float(s)!r},{float(a)!r}" for s, a in self.curve or []]
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        out = [f"task: {self.task}   seed: {self.seed}"]
        for k in sorted(self.config_echo):
            out.append(f"  {k}: {self.config_echo[k]}")
        groups: dict[str, list[Table]] = {}
        for name, table in self.tables.items():
            groups.setdefault(name.split("@", 1)[0], []).append(table)
        for name, tables in groups.items():
            out.append("")
            out.append(f"[{name}]")
            out.extend(render_tables(tables))
        if self.metrics:
            out.append("")
            width = max(len(k) for k in self.metrics)
            for k in sorted(self.metrics):
                out.append(f"{k.ljust(width)}  {self.metrics[k]:.4f}")
        return "\n".join(out) + "\n"


def render_tables(tables: Sequence[Table]) -> list[str]:
    """Aligned text grid; several same-shaped tables share cells as ``a / b``."""
    first = tables[0]

    def cell(r, c):
        vals = [t.mean(r, c) for t in tables]
        if all(v is None for v in vals):
            return "-"
        return " / ".join("-" if v is None else f"{v:.{t.digits}f}" for v, t in zip(vals, tables))

    grid = [[first.corner] + list(first.columns)]
    grid += [[r] + [cell(r, c) for c in first.columns] for r in first.rows]
    widths = [max(len(row[i]) for row in grid) for i in range(len(grid[0]))]
    return ["  ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(row, widths))) for row in grid]


# --- splits ----------------------------------------------------------------------


def trial_splits(manifest: Manifest, ratios: Sequence[float], seed: int) -> Manifest:
    """Keep user-assigned splits; randomly split every label that has none."""
    fixed, free = [], []
    for label in manifest.labels:
        entries = manifest.of_label(label)
        n_marked = sum(e.split is not None for e in entries)
        if n_marked == len(entries):
            fixed.extend(entries)
        elif n_marked == 0:
            free.extend(entries)
        else:
            raise ConfigError(f"label {label!r} has split values on only some of its entries")
    if free:
        free = list(split_manifest(Manifest(tuple(free), manifest.root), ratios, seed).entries)
    return Manifest(tuple(fixed + free), manifest.root)


def _subsample(rng: np.random.Generator, items: list, n: int) -> list:
    if len(items) <= n:
        return list(items)
    idx = np.sort(rng.choice(len(items), size=n, replace=False))
    return [items[i] for i in idx]


def _oriented_scores(x: np.ndarray, fp: Fingerprint, kind: ScoreKind) -> np.ndarray:
    s = score_matrix(x, [fp], kind)[:, 0]
    return s if kind.higher_is_closer else -s


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


# --- open-world single-model attribution ------------------------------------------


def _single_trial(
    split: Manifest,
    target: str,
    features: FeatureConfig,
    store: ResidualStore,
    rng: np.random.Generator,
    noise: NoiseCondition | None = None,
) -> dict[str, float]:
    train = split.of_label(target, "train")
    test = split.of_label(target, "test")
    if not train:
        raise ConfigError(f"target {target!r} has no training clips")
    if not test:
        raise ConfigError(f"target {target!r} has no test clips")
    fp = build_fingerprint(target, train, features, store)
    out = {}
    for source in split.labels:
        if source == target:
            continue
        pool = split.of_label(source, "test")
        if not pool:
            raise ConfigError(f"source {source!r} has no test clips")
        n = min(len(pool), len(test))
        pos = _subsample(rng, test, n)
        neg = _subsample(rng, pool, n)
        xp, _ = store.residuals(pos, features, noise)
        xn, _ = store.residuals(neg, features, noise)
        scores = np.concatenate([_oriented_scores(xp, fp, features.score_kind), _oriented_scores(xn, fp, features.score_kind)])
        out[source] = auroc(scores, [True] * n + [False] * n)
    return out


def _source_rows(manifest: Manifest) -> list[str]:
    rows = manifest.synthetic_labels
    if REAL_LABEL in manifest.labels:
        rows.append(REAL_LABEL)
    return rows


def single_model_experiment(
    target_label: str | Sequence[str],
    manifest: Manifest,
    features: FeatureConfig | Sequence[FeatureConfig] = FeatureConfig(),
    seed: int = 0,
    trials: int = 1,
    *,
    store: ResidualStore | None = None,
    noise: NoiseCondition | None = None,
) -> EvalReport:
    """AUROC of target-vs-source discrimination for every other source.

    Several targets give the columns of one source-by-target table; several
    feature configurations are rendered side by side as ``a / b`` cells.
    """
    targets = _as_list(target_label)
    configs = _as_list(features)
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    for t in targets:
        if t not in manifest.labels:
            raise ConfigError(f"target {t!r} not found in manifest (labels: {manifest.labels})")
    if len(manifest.labels) < 2:
        raise ConfigError("manifest needs at least one source besides the target")
    store = store or ResidualStore(manifest)
    rows = _source_rows(manifest) + [AVG_ROW]
    tables = {}
    metrics = {}
    for ci, cfg in enumerate(configs):
        table = Table(rows, list(targets))
        for trial in range(trials):
            trial_seed = seed + trial
            split = trial_splits(manifest, SINGLE_RATIOS, trial_seed)
            for target in targets:
                rng = np.random.default_rng([trial_seed, clip_seed(0, target, ci) % 2**32])
                res = _single_trial(split, target, cfg, store, rng, noise)
                for source, value in res.items():
                    table.add(source, target, value)
                table.add(AVG_ROW, target, float(np.mean(list(res.values()))))
        suffix = f"@{ci}" if len(configs) > 1 else ""
        tables["auroc" + suffix] = table
        for target in targets:
            metrics[f"avg_auroc[{target}]{suffix}"] = table.mean(AVG_ROW, target)
            metrics[f"min_auroc[{target}]{suffix}"] = min(
                table.mean(r, target) for r in rows[:-1] if table.mean(r, target) is not None
            )
        metrics["avg_auroc" + suffix] = float(np.mean([table.mean(AVG_ROW, t) for t in targets]))
    echo = {
        "targets": ",".join(targets),
        "features": " | ".join(c.name for c in configs),
        "trials": trials,
        "ratios": "train/test {}/{}".format(*SINGLE_RATIOS[::2]),
        "n_clips": len(manifest),
    }
    return EvalReport("single_model", tables, metrics, echo, seed)


# --- closed-world multi-model attribution ------------------------------------------


def closed_world_experiment(
    manifest: Manifest,
    features: FeatureConfig = FeatureConfig(),
    seed: int = 0,
    trials: int = 1,
    *,
    store: ResidualStore | None = None,
) -> EvalReport:
    """Attribute every test clip to the nearest of the known systems' fingerprints."""
    labels = manifest.synthetic_labels
    if len(labels) < 2:
        raise ConfigError("closed-world attribution needs at least two synthetic labels")
    sub = Manifest(tuple(e for e in manifest if e.label in labels), manifest.root)
    store = store or ResidualStore(manifest)
    confusion = Table(labels, labels, digits=0, corner="True \\ Predicted")
    per_trial = Table([f"trial {t}" for t in range(trials)], ["accuracy", "f1", "precision", "recall"], digits=3, corner="")
    collected: dict[str, list[float]] = {}
    for trial in range(trials):
        trial_seed = seed + trial
        split = trial_splits(sub, THREE_WAY_RATIOS, trial_seed)
        fps = []
        for label in labels:
            train = split.of_label(label, "train")
            if len(train) < 2:
                raise ConfigError(f"label {label!r} has too few training clips to build a fingerprint")
            fps.append(build_fingerprint(label, train, features, store))
        tests = {label: split.of_label(label, "test") for label in labels}
        n = min(len(v) for v in tests.values())
        if n == 0:
            empty = [k for k, v in tests.items() if not v]
            raise ConfigError(f"labels {empty} have no test clips")
        rng = np.random.default_rng(trial_seed)
        chosen = [e for label in labels for e in _subsample(rng, tests[label], n)]
        x, _ = store.residuals(chosen, features)
        preds = attribute_batch(x, fps, features.score_kind)
        truths = [e.label for e in chosen]
        m = macro_metrics(preds, truths)
        for k, v in m.items():
            collected.setdefault(k, []).append(v)
            per_trial.add(f"trial {trial}", k, v)
        counts: dict[tuple[str, str], int] = {}
        for p, t in zip(preds, truths):
            counts[(t, p)] = counts.get((t, p), 0) + 1
        for t in labels:
            for p in labels:
                confusion.add(t, p, counts.get((t, p), 0))
    metrics = {}
    for k, v in collected.items():
        metrics[k] = float(np.mean(v))
        metrics[k + "_std"] = float(np.std(v))
    echo = {
        "labels": ",".join(labels),
        "features": features.name,
        "trials": trials,
        "ratios": "train/val/test {}/{}/{}".format(*THREE_WAY_RATIOS),
        "n_clips": len(sub),
    }
    return EvalReport("closed_world", {"confusion": confusion, "trials": per_trial}, metrics, echo, seed)


# --- training-free real-vs-synthetic detection -------------------------------------


def _balanced_detection_set(rng, synthetic: list, real: list) -> tuple[list, np.ndarray]:
    """Synthetic clips plus real clips resampled with replacement to the same count."""
    if not synthetic or not real:
        raise ConfigError("detection needs both synthetic and real clips in every split")
    idx = rng.choice(len(real), size=len(synthetic), replace=len(real) < len(synthetic))
    chosen_real = [real[i] for i in np.sort(idx)]
    return synthetic + chosen_real, np.array([True] * len(synthetic) + [False] * len(chosen_real))


def detection_experiment(
    manifest: Manifest,
    features: FeatureConfig = FeatureConfig(),
    seed: int = 0,
    trials: int = 1,
    *,
    store: ResidualStore | None = None,
    tau_override: float | None = None,
) -> EvalReport:
    """Minimum Mahalanobis distance to any known fingerprint, thresholded at tau.

    tau maximizes F1 on the validation split unless ``tau_override`` is given.
    """
    if REAL_LABEL not in manifest.labels:
        raise ConfigError(f"detection needs clips labelled {REAL_LABEL!r}")
    synth_labels = manifest.synthetic_labels
    if not synth_labels:
        raise ConfigError("detection needs at least one synthetic label")
    store = store or ResidualStore(manifest)
    per_trial = Table([f"trial {t}" for t in range(trials)], ["tau", "accuracy", "f1", "precision", "recall"], digits=3, corner="")
    collected: dict[str, list[float]] = {}
    for trial in range(trials):
        trial_seed = seed + trial
        split = trial_splits(manifest, THREE_WAY_RATIOS, trial_seed)
        fps = [build_fingerprint(lab, split.of_label(lab, "train"), features, store) for lab in synth_labels]
        rng = np.random.default_rng(trial_seed)

        def distances(name):
            synth = [e for lab in synth_labels for e in split.of_label(lab, name)]
            clips, truth = _balanced_detection_set(rng, synth, split.of_label(REAL_LABEL, name))
            x, _ = store.residuals(clips, features)
            return min_distances(x, fps)[0], truth

        if tau_override is None:
            d_val, y_val = distances("val")
            threshold = sweep_threshold(d_val, y_val)
            tau = threshold.tau
            collected.setdefault("calibration_f1", []).append(threshold.calibration_f1)
        else:
            tau = float(tau_override)
        d_test, y_test = distances("test")
        m = binary_metrics(d_test < tau, y_test)
        m["tau"] = tau
        for k, v in m.items():
            collected.setdefault(k, []).append(v)
            per_trial.add(f"trial {trial}", k, v)
    metrics = {}
    for k, v in collected.items():
        metrics[k] = float(np.mean(v))
        if k != "tau":
            metrics[k + "_std"] = float(np.std(v))
    echo = {
        "synthetic_labels": ",".join(synth_labels),
        "features": features.name,
        "trials": trials,
        "ratios": "train/val/test {}/{}/{}".format(*THREE_WAY_RATIOS),
        "tau": "calibrated (max F1 on val)" if tau_override is None else tau_override,
        "n_clips": len(manifest),
    }
    return EvalReport("detection", {"trials": per_trial}, metrics, echo, seed)


# --- noise robustness ---------------------------------------------------------------


def noise_robustness_experiment(
    manifest: Manifest,
    noise_manifest: Manifest,
    snr_list: Sequence[float],
    features: FeatureConfig = FeatureConfig(),
    seed: int = 0,
    trials: int = 1,
    *,
    targets: Sequence[str] | None = None,
    store: ResidualStore | None = None,
) -> EvalReport:
    """Single-model AUROC with noise added to test clips only, one run per SNR."""
    snr_list = [float(s) for s in snr_list]
    if not snr_list:
        raise ConfigError("snr_list must not be empty")
    if len(noise_manifest) == 0:
        raise ConfigError("noise manifest is empty")
    if features.external:
        raise ConfigError("noise robustness needs an in-package filter; externally filtered companions cannot be re-filtered after mixing")
    targets = list(targets) if targets else manifest.synthetic_labels
    store = store or ResidualStore(manifest)
    noise_paths = tuple(noise_manifest.resolve(e) for e in noise_manifest)
    snr_rows = [f"{s:g} dB" for s in snr_list]
    table = Table(snr_rows, targets + [AVG_ROW], corner="SNR \\ Target")
    curve = []
    for snr, row in zip(snr_list, snr_rows):
        cond = NoiseCondition(noise_paths, snr, seed)
        rep = single_model_experiment(targets, manifest, features, seed, trials, store=store, noise=cond)
        t = rep.tables["auroc"]
        for target in targets:
            table.add(row, target, t.mean(AVG_ROW, target))
        avg = rep.metrics["avg_auroc"]
        table.add(row, AVG_ROW, avg)
        curve.append((snr, avg))
    metrics = {f"avg_auroc[{s:g}dB]": a for s, a in curve}
    echo = {
        "targets": ",".join(targets),
        "features": features.name,
        "trials": trials,
        "snr_db": ",".join(f"{s:g}" for s in snr_list),
        "n_noise_clips": len(noise_manifest),
        "n_clips": len(manifest),
    }
    return EvalReport("noise", {"auroc_vs_snr": table}, metrics, echo, seed, curve)
