"""Manifests, splitting, the fixture corpus, and the train/evaluate harness."""

from .config import DESK, PAPER, ExperimentConfig, load_config, save_config
from .evaluate import ConfusionMatrix, EvalResult, Predictor, evaluate, load_predictor, predict_unlabeled
from .fixture import generate_fixture_corpus, scaled_durations
from .manifest import (
    DatasetManifest,
    ManifestEntry,
    check_split_integrity,
    read_manifest,
    stratified_split,
    write_manifest,
)
from .train import TrainResult, read_log, train_model
