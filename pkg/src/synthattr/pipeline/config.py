"""Experiment configuration: a flat ``key = value`` file whose every key can
be overridden from the command line with ``--key value``."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from ..errors import ConfigInvalid, IoFailure
from ..models import ARCH_INC, ARCH_RES, IncTssdConfig, ResTssdConfig
from ..nn.optim import TrainConfig

MODELS = (ARCH_INC, ARCH_RES, "svm", "gmm")
FEATURES = ("RW", "MS", "MFCC")
DTYPES = ("float32", "float64")


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = ARCH_INC
    feature: str = "RW"
    augment: bool = False
    clip_seconds: float = 6.0
    sample_rate: int = 16000
    num_classes: int = 6
    seed: int = 0
    dtype: str = "float32"
    # paths
    manifest: str = "manifest.csv"
    data_root: str = ""
    runs_dir: str = "runs"
    run_id: str = ""
    # optimisation
    batch_size: int = 128
    epochs: int = 200
    lr0: float = 1e-3
    gamma: float = 0.95
    optimizer: str = "adam"
    momentum: float = 0.9
    # network shape
    branch_channels: int = 16
    num_blocks: int = 4
    stage_channels: Tuple[int, ...] = (16, 32, 64, 128)
    blocks_per_stage: int = 1
    penultimate_width: int = 32
    # classical baselines
    svm_lambda: float = 1e-4
    svm_epochs: int = 50
    gmm_components: int = 3

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigInvalid(f"model must be one of {MODELS}, got {self.model!r}")
        if self.feature not in FEATURES:
            raise ConfigInvalid(f"feature must be one of {FEATURES}, got {self.feature!r}")
        if self.is_network != (self.feature == "RW"):
            raise ConfigInvalid(f"feature {self.feature} is not usable with model {self.model}")
        if self.dtype not in DTYPES:
            raise ConfigInvalid(f"dtype must be one of {DTYPES}, got {self.dtype!r}")
        if self.clip_seconds <= 0:
            raise ConfigInvalid("clip_seconds must be positive")
        if self.sample_rate <= 0:
            raise ConfigInvalid("sample_rate must be positive")
        self.train_config()  # validates the optimiser fields
        if self.is_network:
            self.model_config().validate()

    @property
    def is_network(self) -> bool:
        return self.model in (ARCH_INC, ARCH_RES)

    @property
    def resolved_run_id(self) -> str:
        return self.run_id or f"{self.model}-{self.feature.lower()}-s{self.seed}"

    @property
    def run_dir(self) -> Path:
        return Path(self.runs_dir) / self.resolved_run_id

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            batch_size=self.batch_size,
            epochs=self.epochs,
            lr0=self.lr0,
            gamma=self.gamma,
            seed=self.seed,
            optimizer=self.optimizer,
            momentum=self.momentum,
        )

    def model_config(self):
        if self.model == ARCH_INC:
            return IncTssdConfig(self.branch_channels, self.num_blocks, self.penultimate_width, self.num_classes)
        if self.model == ARCH_RES:
            return ResTssdConfig(tuple(self.stage_channels), self.blocks_per_stage, self.penultimate_width, self.num_classes)
        raise ConfigInvalid(f"{self.model} has no network config")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {format_value(getattr(self, f.name))}\n" for f in fields(self))


# shipped profiles: the published training setup and a CPU-sized one
PAPER = ExperimentConfig()
DESK = ExperimentConfig(
    clip_seconds=3.0,
    batch_size=8,
    epochs=6,
    branch_channels=8,
    num_blocks=2,
    stage_channels=(16, 32),
)
PROFILES = {"paper": PAPER, "desk": DESK}


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _field_types() -> Dict[str, type]:
    defaults = ExperimentConfig()
    return {f.name: type(getattr(defaults, f.name)) for f in fields(ExperimentConfig)}


def parse_value(key: str, text: str):
    types = _field_types()
    if key not in types:
        raise ConfigInvalid(f"unknown config key {key!r}")
    kind = types[key]
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind is tuple:
            return tuple(int(v) for v in text.split(",") if v.strip())
        return kind(text)
    except ValueError as exc:
        raise ConfigInvalid(f"bad value for {key}: {text!r}") from exc


def parse_config_text(text: str) -> Dict[str, object]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = parse_value(key, value)
    return values


def load_config(
    path: Union[str, Path, None] = None,
    overrides: Optional[Dict[str, object]] = None,
    profile: Optional[str] = None,
) -> ExperimentConfig:
    """Profile defaults, then the file, then ``overrides`` (strings are parsed)."""
    if profile is not None and profile not in PROFILES:
        raise ConfigInvalid(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    base = PROFILES[profile or "paper"]
    values: Dict[str, object] = {}
    if path is not None:
        try:
            values.update(parse_config_text(Path(path).read_text()))
        except OSError as exc:
            raise IoFailure(f"cannot read config {path}: {exc}") from exc
    for key, value in (overrides or {}).items():
        values[key] = parse_value(key, value) if isinstance(value, str) else value
    if "feature" not in values and "model" in values:
        # the feature kind follows the model unless set explicitly
        values["feature"] = "RW" if values["model"] in (ARCH_INC, ARCH_RES) else "MFCC"
    return base.replace(**values)


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(config.to_text())
    return path


def config_keys() -> List[str]:
    return [f.name for f in fields(ExperimentConfig)]
