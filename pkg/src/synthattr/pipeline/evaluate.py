"""Loading trained runs, scoring a split, and writing predictions."""

from __future__ import annotations

import csv
import html
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..classical import MODEL_MAGIC, Standardizer, load_classical
from ..errors import DataError, EmptySplit, IoFailure
from ..features import pooled_features
from ..nn.checkpoint import MAGIC as NET_MAGIC
from ..nn.checkpoint import load_checkpoint
from .config import ExperimentConfig, load_config
from .data import load_entry, waveform_matrix
from .manifest import DatasetManifest, ManifestEntry
from .train import CHECKPOINT, predict_batched

log = logging.getLogger(__name__)


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows true, columns predicted

    @classmethod
    def from_predictions(cls, y_true, y_pred, class_count: int) -> "ConfusionMatrix":
        counts = np.zeros((class_count, class_count), dtype=np.int64)
        np.add.at(counts, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
        return cls(counts)

    @property
    def class_count(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else 0.0

    def to_csv(self) -> str:
        lines = ["true\\pred," + ",".join(str(c) for c in range(self.class_count))]
        lines += [f"{i}," + ",".join(str(v) for v in row) for i, row in enumerate(self.counts)]
        return "\n".join(lines) + "\n"

    def to_svg(self, title: str = "Confusion matrix", cell: int = 48) -> str:
        c = self.class_count
        left, top = 60, 50
        width, height = left + c * cell + 20, top + c * cell + 40
        row_tot = self.counts.sum(axis=1, keepdims=True)
        frac = np.divide(self.counts, row_tot, out=np.zeros(self.counts.shape), where=row_tot > 0)
        out = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
            f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">{html.escape(title)}</text>',
            f'<text x="{left + c * cell / 2:.0f}" y="{height - 8}" text-anchor="middle" font-family="sans-serif" font-size="12">predicted</text>',
            f'<text x="14" y="{top + c * cell / 2:.0f}" font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 14 {top + c * cell / 2:.0f})" text-anchor="middle">true</text>',
        ]
        for i in range(c):
            out.append(f'<text x="{left - 8}" y="{top + i * cell + cell / 2 + 4:.0f}" text-anchor="end" font-family="sans-serif" font-size="11">{i}</text>')
            out.append(f'<text x="{left + i * cell + cell / 2:.0f}" y="{top - 6}" text-anchor="middle" font-family="sans-serif" font-size="11">{i}</text>')
            for j in range(c):
                shade = int(round(255 * (1 - frac[i, j])))
                colour = f"rgb({shade},{shade},255)"
                ink = "white" if frac[i, j] > 0.5 else "black"
                x, y = left + j * cell, top + i * cell
                out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{colour}" stroke="#888"/>')
                out.append(
                    f'<text x="{x + cell / 2:.0f}" y="{y + cell / 2 + 4:.0f}" text-anchor="middle" '
                    f'font-family="sans-serif" font-size="11" fill="{ink}">{self.counts[i, j]}</text>'
                )
        out.append("</svg>")
        return "\n".join(out) + "\n"


class Predictor:
    """A trained network or classical model plus the input settings of its run."""

    def __init__(self, model, config: ExperimentConfig, standardizer: Optional[Standardizer] = None):
        self.model = model
        self.config = config
        self.standardizer = standardizer

    @property
    def is_network(self) -> bool:
        return self.standardizer is None and hasattr(self.model, "embed")

    def _clip_input(self, manifest: DatasetManifest, entry: ManifestEntry) -> np.ndarray:
        clip = load_entry(manifest, entry, self.config.sample_rate, self.config.clip_seconds)
        if self.is_network:
            return clip.samples
        return pooled_features(clip, self.config.feature)

    def inputs(self, manifest: DatasetManifest, entries: Sequence[ManifestEntry]) -> np.ndarray:
        if self.is_network:
            return waveform_matrix(manifest, entries, self.config.sample_rate, self.config.clip_seconds, self.model.dtype)[0]
        return np.array([self._clip_input(manifest, e) for e in entries])

    def predict_inputs(self, x: np.ndarray) -> np.ndarray:
        if self.is_network:
            return predict_batched(self.model, x)
        return self.model.predict(self.standardizer.transform(x))

    def predict(self, manifest: DatasetManifest, entries: Sequence[ManifestEntry]) -> np.ndarray:
        if not entries:
            return np.zeros(0, dtype=np.int64)
        return self.predict_inputs(self.inputs(manifest, entries))


def load_predictor(run_dir: Union[str, Path], checkpoint: Optional[Union[str, Path]] = None) -> Predictor:
    run_dir = Path(run_dir)
    snapshot = run_dir / "config.snapshot"
    if not snapshot.is_file():
        raise IoFailure(f"{run_dir} has no config.snapshot")
    config = load_config(snapshot)
    path = Path(checkpoint) if checkpoint is not None else run_dir / CHECKPOINT
    try:
        magic = path.read_bytes()[:4]
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if magic == MODEL_MAGIC:
        model, std = load_classical(path)
        return Predictor(model, config, std)
    if magic != NET_MAGIC:
        raise DataError(f"{path} is neither a network checkpoint nor a classical model")
    model, _ = load_checkpoint(path, dtype=np.dtype(config.dtype))
    return Predictor(model, config)


@dataclass
class EvalResult:
    accuracy: float
    confusion: ConfusionMatrix
    predictions: np.ndarray
    labels: np.ndarray


def evaluate(
    predictor: Predictor,
    manifest: DatasetManifest,
    split: str = "test",
    out_dir: Union[str, Path, None] = None,
    include_augmented: bool = True,
) -> EvalResult:
    """Accuracy and confusion matrix over the labeled entries of ``split``.
    With ``out_dir`` set, writes confusion.csv and confusion.svg there."""
    entries = [e for e in manifest.subset(split) if e.label is not None and (include_augmented or not e.is_augmented)]
    if not entries:
        raise EmptySplit(f"split {split!r} has no labeled entries")
    labels = np.array([e.label for e in entries], dtype=np.int64)
    preds = predictor.predict(manifest, entries)
    cm = ConfusionMatrix.from_predictions(labels, preds, predictor.config.num_classes)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "confusion.csv").write_text(cm.to_csv())
        (out_dir / "confusion.svg").write_text(cm.to_svg(f"{predictor.config.model} on {split} (accuracy {cm.accuracy:.2f})"))
    return EvalResult(cm.accuracy, cm, preds, labels)


FAILED = "failed"


def predict_unlabeled(
    predictor: Predictor, manifest: DatasetManifest, out_path: Union[str, Path], split: str = "eval"
) -> List[Tuple[str, str]]:
    """Write ``relative_path,predicted_label`` rows in manifest order.

    A clip that cannot be read is logged and gets the label ``failed``; the
    remaining clips are still predicted.
    """
    rows = []
    for entry in manifest.subset(split):
        try:
            x = predictor.inputs(manifest, [entry])
        except DataError as exc:
            log.warning("cannot predict %s: %s", entry.relative_path, exc)
            rows.append((entry.relative_path, FAILED))
            continue
        rows.append((entry.relative_path, str(int(predictor.predict_inputs(x)[0]))))
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with out_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("relative_path", "predicted_label"))
        writer.writerows(rows)
    return rows


def collect_embeddings(
    predictor: Optional[Predictor], manifest: DatasetManifest, split: str, clip_seconds: float = 3.0, sample_rate: int = 16000
) -> Tuple[np.ndarray, np.ndarray]:
    """Penultimate activations of a network run, or pooled MFCC vectors when
    ``predictor`` is None. Returns (vectors, labels) over labeled entries."""
    entries = [e for e in manifest.subset(split) if e.label is not None]
    if not entries:
        raise EmptySplit(f"split {split!r} has no labeled entries")
    labels = np.array([e.label for e in entries], dtype=np.int64)
    if predictor is None:
        feats = [pooled_features(load_entry(manifest, e, sample_rate, clip_seconds), "MFCC") for e in entries]
        return np.array(feats), labels
    if not predictor.is_network:
        raise DataError("embeddings need a network run")
    x = predictor.inputs(manifest, entries)
    vecs = np.concatenate([predictor.model.embed(x[i : i + 32]) for i in range(0, len(x), 32)])
    return vecs.astype(np.float64), labels
