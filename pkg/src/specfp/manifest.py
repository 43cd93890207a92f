"""Dataset manifests: ``path,label,split`` CSV files."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

SPLITS = ("train", "val", "test")
REAL_LABEL = "real"


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: str
    split: str | None = None

    def __post_init__(self):
        if not self.path:
            raise ConfigError("manifest entry with empty path")
        if not self.label:
            raise ConfigError(f"manifest entry {self.path!r} has an empty label")
        if self.split is not None and self.split not in SPLITS:
            raise ConfigError(f"manifest entry {self.path!r}: unknown split {self.split!r}")


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]
    root: str = ""

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def labels(self) -> list[str]:
        return sorted({e.label for e in self.entries})

    @property
    def synthetic_labels(self) -> list[str]:
        return [lab for lab in self.labels if lab != REAL_LABEL]

    @property
    def has_splits(self) -> bool:
        return any(e.split is not None for e in self.entries)

    def of_label(self, label: str, split: str | None = None) -> list[ManifestEntry]:
        return [e for e in self.entries if e.label == label and (split is None or e.split == split)]

    def resolve(self, entry: ManifestEntry) -> str:
        """Absolute path of ``entry``; relative paths are taken from the manifest's folder."""
        if os.path.isabs(entry.path) or not self.root:
            return entry.path
        return os.path.join(self.root, entry.path)


def read_manifest(path: str | os.PathLike) -> Manifest:
    path = os.fspath(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        if "path" not in fields or "label" not in fields:
            raise ConfigError(f"{path}: manifest header must contain 'path,label[,split]'")
        entries = []
        for lineno, row in enumerate(reader, start=2):
            split = (row.get("split") or "").strip() or None
            try:
                entries.append(ManifestEntry(row["path"].strip(), row["label"].strip(), split))
            except ConfigError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
    return Manifest(tuple(entries), os.path.dirname(os.path.abspath(path)))


def write_manifest(manifest: Manifest, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "label", "split"])
        for e in manifest.entries:
            w.writerow([e.path, e.label, e.split or ""])


def split_counts(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    """Floor-based (train, val, test) counts with the remainder going to train."""
    n_val = int(np.floor(n * ratios[1] + 1e-9))
    n_test = int(np.floor(n * ratios[2] + 1e-9))
    return n - n_val - n_test, n_val, n_test


def split_manifest(manifest: Manifest, ratios: Sequence[float] = (0.8, 0.1, 0.1), seed: int = 0) -> Manifest:
    """Per-label stratified random split; existing split values are overwritten."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    needed = sum(r > 0 for r in ratios)
    rng = np.random.default_rng(seed)
    assigned: dict[int, str] = {}
    for label in manifest.labels:
        idx = [i for i, e in enumerate(manifest.entries) if e.label == label]
        if len(idx) < needed:
            raise ConfigError(f"label {label!r} has {len(idx)} entries, fewer than the {needed} splits requested")
        perm = rng.permutation(len(idx))
        n_train, n_val, _ = split_counts(len(idx), ratios)
        for rank, p in enumerate(perm):
            name = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
            assigned[idx[p]] = name
    entries = tuple(replace(e, split=assigned[i]) for i, e in enumerate(manifest.entries))
    return Manifest(entries, manifest.root)


def concat(manifests: Iterable[Manifest]) -> Manifest:
    manifests = list(manifests)
    return Manifest(tuple(e for m in manifests for e in m.entries), manifests[0].root if manifests else "")
