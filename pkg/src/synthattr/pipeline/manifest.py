"""Dataset manifests and stratified, non-overlapping splitting."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ClassTooSmall, ConfigError, DataError, IoFailure

SPLITS = ("train", "val", "test", "eval")
UNASSIGNED = "unassigned"
UNKNOWN_LABEL = "?"
CLEAN_TAG = "none"
AUG_MARK = "@aug"
CSV_HEADER = ("relative_path", "label", "split", "aug_tag")


@dataclass(frozen=True)
class ManifestEntry:
    relative_path: str
    label: Optional[int]
    split: str = UNASSIGNED
    aug_tag: str = CLEAN_TAG

    @property
    def is_augmented(self) -> bool:
        return self.aug_tag not in ("", CLEAN_TAG)

    @property
    def source_path(self) -> str:
        """Path of the clean file this entry is built from."""
        return self.relative_path.split(AUG_MARK, 1)[0]


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry]
    root: Path = field(default_factory=Path)
    seed: int = 0

    def __post_init__(self):
        self.root = Path(self.root)
        seen = set()
        for e in self.entries:
            if e.relative_path in seen:
                raise DataError(f"duplicate manifest path {e.relative_path!r}")
            seen.add(e.relative_path)
            if e.split not in SPLITS and e.split != UNASSIGNED:
                raise DataError(f"unknown split {e.split!r} for {e.relative_path!r}")

    def __len__(self) -> int:
        return len(self.entries)

    def with_entries(self, entries: Sequence[ManifestEntry]) -> "DatasetManifest":
        return DatasetManifest(list(entries), self.root, self.seed)

    def subset(self, split: str) -> List[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    def counts(self) -> Dict[str, int]:
        out: Dict[str, int] = defaultdict(int)
        for e in self.entries:
            out[e.split] += 1
        return dict(out)

    def class_counts(self, split: Optional[str] = None) -> Dict[Optional[int], int]:
        out: Dict[Optional[int], int] = defaultdict(int)
        for e in self.entries:
            if split is None or e.split == split:
                out[e.label] += 1
        return dict(out)

    def resolve(self, entry: ManifestEntry) -> Path:
        return self.root / entry.source_path


def _format_label(label: Optional[int]) -> str:
    return UNKNOWN_LABEL if label is None else str(label)


def _parse_label(text: str) -> Optional[int]:
    text = text.strip()
    return None if text in (UNKNOWN_LABEL, "") else int(text)


def write_manifest(manifest: DatasetManifest, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for e in manifest.entries:
            writer.writerow((e.relative_path, _format_label(e.label), e.split, e.aug_tag))
    return path


def read_manifest(path: Union[str, Path], root: Union[str, Path, None] = None, seed: int = 0) -> DatasetManifest:
    """Load a manifest CSV. ``root`` defaults to the CSV's directory."""
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if tuple(reader.fieldnames or ()) != CSV_HEADER:
                raise DataError(f"{path}: expected header {','.join(CSV_HEADER)}")
            entries = [
                ManifestEntry(row["relative_path"], _parse_label(row["label"]), row["split"] or UNASSIGNED, row["aug_tag"] or CLEAN_TAG)
                for row in reader
            ]
    except OSError as exc:
        raise IoFailure(f"cannot read manifest {path}: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: bad label value ({exc})") from exc
    return DatasetManifest(entries, Path(root) if root is not None else path.parent, seed)


def _slice_sizes(n: int, fractions: Tuple[float, float, float]) -> Tuple[int, int, int]:
    # residue goes to train; the epsilon guards products like 0.29 * 100
    n_val = math.floor(fractions[1] * n + 1e-9)
    n_test = math.floor(fractions[2] * n + 1e-9)
    return n - n_val - n_test, n_val, n_test


def stratified_split(
    manifest: DatasetManifest,
    fractions: Tuple[float, float, float] = (0.72, 0.08, 0.20),
    seed: int = 0,
) -> DatasetManifest:
    """Assign labeled clips to train/val/test per class.

    Each class is shuffled with the seeded generator and sliced in
    proportion to ``fractions``. Unlabeled clips go to ``eval``; augmented
    variants follow their source clip.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must be three non-negative numbers summing to 1, got {fractions}")

    by_class: Dict[int, List[str]] = defaultdict(list)
    for e in manifest.entries:
        if not e.is_augmented and e.label is not None:
            by_class[e.label].append(e.relative_path)

    rng = np.random.default_rng(seed)
    assignment: Dict[str, str] = {}
    for label in sorted(by_class):
        paths = by_class[label]
        sizes = _slice_sizes(len(paths), fractions)
        for name, size, frac in zip(("train", "val", "test"), sizes, fractions):
            if frac > 0 and size == 0:
                raise ClassTooSmall(f"class {label} has {len(paths)} clips; too few for fractions {fractions}")
        order = rng.permutation(len(paths))
        bounds = np.cumsum(sizes)
        for rank, idx in enumerate(order):
            split = "train" if rank < bounds[0] else "val" if rank < bounds[1] else "test"
            assignment[paths[idx]] = split

    out = []
    for e in manifest.entries:
        if e.label is None:
            split = "eval"
        else:
            split = assignment.get(e.source_path)
            if split is None:
                raise DataError(f"augmented entry {e.relative_path!r} has no clean source in the manifest")
        out.append(replace(e, split=split))
    return manifest.with_entries(out)


def check_split_integrity(manifest: DatasetManifest) -> None:
    """Raise if splits overlap, leave labeled clips unassigned, or separate
    an augmented variant from its source."""
    source_split = {e.relative_path: e.split for e in manifest.entries if not e.is_augmented}
    for e in manifest.entries:
        if e.label is not None and e.split not in ("train", "val", "test"):
            raise DataError(f"labeled entry {e.relative_path!r} is in split {e.split!r}")
        if e.is_augmented and source_split.get(e.source_path) != e.split:
            raise DataError(f"augmented entry {e.relative_path!r} is not in its source's split")


def iter_labels(entries: Iterable[ManifestEntry]) -> np.ndarray:
    return np.array([e.label for e in entries], dtype=np.int64)
