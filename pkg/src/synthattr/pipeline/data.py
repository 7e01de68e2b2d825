"""Turning manifest entries into model inputs."""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..audio import AudioClip, load_wav, normalize_length, resample
from ..augment import AugmentationSpec, apply_spec, default_specs, expand_with_augmentations
from ..errors import EmptySplit, MissingFile
from ..features import pooled_features
from .manifest import DatasetManifest, ManifestEntry


def load_entry(manifest: DatasetManifest, entry: ManifestEntry, sample_rate: int, clip_seconds: float) -> AudioClip:
    """Read the source WAV, bring it to ``sample_rate`` and ``clip_seconds``,
    then replay the entry's augmentation, if any."""
    path = manifest.resolve(entry)
    if not path.is_file():
        raise MissingFile(f"{path} does not exist")
    clip = load_wav(path, label=entry.label, source_id=entry.relative_path)
    clip = normalize_length(resample(clip, sample_rate), clip_seconds)
    if entry.is_augmented:
        clip = apply_spec(clip, AugmentationSpec.from_tag(entry.aug_tag))
    return clip


def select_entries(manifest: DatasetManifest, split: str, augment: bool) -> List[ManifestEntry]:
    """Entries of ``split``; augmented variants only when ``augment`` is set."""
    return [e for e in manifest.subset(split) if augment or not e.is_augmented]


def prepare_manifest(manifest: DatasetManifest, augment: bool, specs: Optional[Sequence[AugmentationSpec]] = None) -> DatasetManifest:
    """With ``augment`` on and no variants listed yet, add the default three."""
    if augment and not any(e.is_augmented for e in manifest.entries):
        return expand_with_augmentations(manifest, specs or default_specs())
    return manifest


def waveform_matrix(
    manifest: DatasetManifest, entries: Sequence[ManifestEntry], sample_rate: int, clip_seconds: float, dtype=np.float32
) -> Tuple[np.ndarray, np.ndarray]:
    """(N, L) waveforms and (N,) labels (-1 for unlabeled)."""
    if not entries:
        raise EmptySplit("no entries to load")
    length = int(round(clip_seconds * sample_rate))
    x = np.empty((len(entries), length), dtype=dtype)
    y = np.empty(len(entries), dtype=np.int64)
    for i, entry in enumerate(entries):
        x[i] = load_entry(manifest, entry, sample_rate, clip_seconds).samples
        y[i] = -1 if entry.label is None else entry.label
    return x, y


def feature_matrix(
    manifest: DatasetManifest, entries: Sequence[ManifestEntry], kind: str, sample_rate: int, clip_seconds: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Pooled per-clip feature vectors (classical models) and labels."""
    if not entries:
        raise EmptySplit("no entries to load")
    rows, labels = [], []
    for entry in entries:
        rows.append(pooled_features(load_entry(manifest, entry, sample_rate, clip_seconds), kind))
        labels.append(-1 if entry.label is None else entry.label)
    return np.array(rows), np.array(labels, dtype=np.int64)


def batches(n: int, batch_size: int, rng: np.random.Generator):
    """Index batches over a fresh permutation. A trailing batch of one is
    folded into the previous batch; train-mode batchnorm needs two rows."""
    order = rng.permutation(n)
    starts = list(range(0, n, batch_size))
    if len(starts) > 1 and n - starts[-1] == 1:
        starts.pop()
    for i, s in enumerate(starts):
        end = starts[i + 1] if i + 1 < len(starts) else n
        yield order[s:end]
