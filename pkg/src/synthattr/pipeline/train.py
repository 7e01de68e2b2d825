"""Epoch loop for the networks and one-shot fitting for the classical models.

A run directory receives ``config.snapshot``, ``log.csv``, ``checkpoint.bin``
(best validation accuracy) and ``checkpoint_last.bin``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Union

import numpy as np

from ..classical import Standardizer, export_svm_weights_csv, gmm_fit, save_classical, svm_train
from ..errors import EmptySplit, NonFiniteLoss
from ..models import TSSDNet, build_model
from ..nn.checkpoint import save_checkpoint
from ..nn.functional import softmax_crossentropy
from ..nn.optim import Optimizer, learning_rate
from .config import ExperimentConfig, save_config
from .data import batches, feature_matrix, prepare_manifest, select_entries, waveform_matrix
from .manifest import DatasetManifest

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "lr", "train_loss", "train_accuracy", "val_accuracy")
CHECKPOINT = "checkpoint.bin"
LAST_CHECKPOINT = "checkpoint_last.bin"
EVAL_BATCH = 32


@dataclass
class TrainResult:
    run_dir: Path
    checkpoint: Path
    rows: List[dict] = field(default_factory=list)
    model: object = None
    best_epoch: int = 0

    @property
    def learning_rates(self) -> List[float]:
        return [r["lr"] for r in self.rows]


def _format(value) -> str:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


class LogWriter:
    def __init__(self, path: Path):
        self.path = path
        self._fh = path.open("w", newline="")
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self._writer.writerow(LOG_COLUMNS)

    def write(self, row: dict) -> None:
        self._writer.writerow([_format(row[c]) for c in LOG_COLUMNS])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_log(path: Union[str, Path]) -> List[dict]:
    with Path(path).open(newline="") as fh:
        return [
            {k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()}
            for row in csv.DictReader(fh)
        ]


def predict_batched(model: TSSDNet, x: np.ndarray, batch: int = EVAL_BATCH) -> np.ndarray:
    if len(x) == 0:
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([model.predict(x[i : i + batch]) for i in range(0, len(x), batch)])


def _splits(config: ExperimentConfig, manifest: DatasetManifest):
    manifest = prepare_manifest(manifest, config.augment)
    train = select_entries(manifest, "train", config.augment)
    val = select_entries(manifest, "val", config.augment)
    if not train or not val:
        raise EmptySplit(f"need non-empty train and val splits, got {len(train)} and {len(val)}")
    return manifest, train, val


def train_network(
    config: ExperimentConfig,
    manifest: DatasetManifest,
    run_dir: Path,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    manifest, train_entries, val_entries = _splits(config, manifest)
    dtype = np.dtype(config.dtype)
    x_train, y_train = waveform_matrix(manifest, train_entries, config.sample_rate, config.clip_seconds, dtype)
    x_val, y_val = waveform_matrix(manifest, val_entries, config.sample_rate, config.clip_seconds, dtype)

    tc = config.train_config()
    model = build_model(config.model, config.model_config(), seed=config.seed, dtype=dtype)
    opt = Optimizer(model.parameters(), tc)
    rng = np.random.default_rng([config.seed, 1])
    best_path, last_path = run_dir / CHECKPOINT, run_dir / LAST_CHECKPOINT
    writer = LogWriter(run_dir / "log.csv")
    result = TrainResult(run_dir, best_path, model=model)
    best_acc = -1.0
    try:
        for epoch in range(tc.epochs):
            losses, correct = [], 0
            for step, idx in enumerate(batches(len(x_train), tc.batch_size, rng)):
                model.zero_grad()
                logits = model.forward(x_train[idx], train=True)
                loss, grad = softmax_crossentropy(logits, y_train[idx])
                if not math.isfinite(loss):
                    raise NonFiniteLoss(f"loss is {loss} at epoch {epoch}, batch {step}; lr {learning_rate(tc, epoch):g}")
                model.backward(grad)
                opt.step(epoch)
                losses.append(loss * len(idx))
                correct += int(np.sum(np.argmax(logits, axis=1) == y_train[idx]))
            val_acc = float(np.mean(predict_batched(model, x_val) == y_val))
            row = {
                "epoch": epoch,
                "lr": learning_rate(tc, epoch),
                "train_loss": float(np.sum(losses) / len(x_train)),
                "train_accuracy": correct / len(x_train),
                "val_accuracy": val_acc,
            }
            writer.write(row)
            result.rows.append(row)
            extra = {"epoch": epoch, "val_accuracy": val_acc, "clip_seconds": config.clip_seconds, "sample_rate": config.sample_rate}
            if val_acc > best_acc:
                best_acc = val_acc
                result.best_epoch = epoch
                save_checkpoint(model, best_path, extra)
            save_checkpoint(model, last_path, extra)
            log.info("epoch %d loss %.4f train %.3f val %.3f", epoch, row["train_loss"], row["train_accuracy"], val_acc)
            if on_epoch:
                on_epoch(row)
    finally:
        writer.close()
    return result


def train_classical(config: ExperimentConfig, manifest: DatasetManifest, run_dir: Path) -> TrainResult:
    manifest, train_entries, val_entries = _splits(config, manifest)
    x_train, y_train = feature_matrix(manifest, train_entries, config.feature, config.sample_rate, config.clip_seconds)
    x_val, y_val = feature_matrix(manifest, val_entries, config.feature, config.sample_rate, config.clip_seconds)
    std = Standardizer.fit(x_train)  # train split only
    z_train, z_val = std.transform(x_train), std.transform(x_val)
    if config.model == "svm":
        model = svm_train(z_train, y_train, config.svm_lambda, config.svm_epochs, config.seed)
        loss = float(model.objective_history[-1].mean())
        lr = 0.1
        export_svm_weights_csv(model, run_dir / "svm_weights.csv")
    else:
        model = gmm_fit(z_train, y_train, config.gmm_components, config.seed)
        loss = float(-np.mean([m.log_likelihood[-1] for m in model.mixtures]))
        lr = 0.0
    row = {
        "epoch": 0,
        "lr": lr,
        "train_loss": loss,
        "train_accuracy": float(np.mean(model.predict(z_train) == y_train)),
        "val_accuracy": float(np.mean(model.predict(z_val) == y_val)),
    }
    writer = LogWriter(run_dir / "log.csv")
    writer.write(row)
    writer.close()
    save_classical(run_dir / CHECKPOINT, model, std)
    return TrainResult(run_dir, run_dir / CHECKPOINT, [row], model)


def train_model(
    config: ExperimentConfig,
    manifest: DatasetManifest,
    run_dir: Union[str, Path, None] = None,
    on_epoch: Optional[Callable[[dict], None]] = None,
) -> TrainResult:
    """Train per ``config`` and write the run directory (default
    ``<runs_dir>/<run_id>``)."""
    run_dir = Path(run_dir) if run_dir is not None else config.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    save_config(config, run_dir / "config.snapshot")
    if config.is_network:
        return train_network(config, manifest, run_dir, on_epoch)
    return train_classical(config, manifest, run_dir)
