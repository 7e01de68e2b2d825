"""Raw-waveform TSSDNet classifiers: Inception-style and ResNet-style.

Both share the stem (1x7 conv, 16 channels, BN, ReLU, max-pool 4) and the
head (global max pool, fully connected layers, class logits). The
penultimate 32-wide ReLU activation is the embedding used for analysis.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Tuple, Union

import numpy as np

from .errors import ConfigInvalid
from .nn import functional as F
from .nn.layers import (
    BatchNorm1d,
    Concat,
    Conv1d,
    GlobalMaxPool1d,
    Linear,
    MaxPool1d,
    Module,
    ReLU,
    Residual,
    Sequential,
)

ARCH_INC = "inc-tssd"
ARCH_RES = "res-tssd"
STEM_CHANNELS = 16
POOL = 4


@dataclass(frozen=True)
class IncTssdConfig:
    branch_channels: int = 16
    num_blocks: int = 4
    penultimate_width: int = 32
    num_classes: int = 6
    dilations: Tuple[int, ...] = (1, 2, 3, 4)

    def validate(self) -> None:
        d = tuple(self.dilations)
        if len(set(d)) != len(d) or min(d, default=0) < 1:
            raise ConfigInvalid(f"dilations must be distinct and >= 1, got {d}")
        if self.num_classes not in (5, 6):
            raise ConfigInvalid(f"num_classes must be 5 or 6, got {self.num_classes}")
        if self.branch_channels < 1 or self.num_blocks < 1 or self.penultimate_width < 1:
            raise ConfigInvalid("branch_channels, num_blocks and penultimate_width must be positive")


@dataclass(frozen=True)
class ResTssdConfig:
    stage_channels: Tuple[int, ...] = (16, 32, 64, 128)
    blocks_per_stage: int = 1
    penultimate_width: int = 32
    num_classes: int = 6

    def validate(self) -> None:
        ch = tuple(self.stage_channels)
        if not ch or any(b <= a for a, b in zip(ch, ch[1:])) or ch[0] < 1:
            raise ConfigInvalid(f"stage_channels must be positive and strictly increasing, got {ch}")
        if self.num_classes not in (5, 6):
            raise ConfigInvalid(f"num_classes must be 5 or 6, got {self.num_classes}")
        if self.blocks_per_stage < 1 or self.penultimate_width < 1:
            raise ConfigInvalid("blocks_per_stage and penultimate_width must be positive")


def _conv_bn_relu(in_ch, out_ch, kernel, dilation, rng, dtype) -> Sequential:
    return Sequential(
        [
            ("conv", Conv1d(in_ch, out_ch, kernel, dilation, rng=rng, dtype=dtype)),
            ("bn", BatchNorm1d(out_ch, dtype=dtype)),
            ("relu", ReLU()),
        ]
    )


class TSSDNet(Module):
    """Common container: ``trunk`` maps (B, 1, L) to (B, C) pooled features,
    ``embedder`` (``head_layers`` Linear+ReLU pairs) to the (B, 32)
    embedding, ``classifier`` to logits."""

    def __init__(self, arch: str, config, trunk: Module, trunk_width: int, dtype, rng, head_layers: int = 2):
        super().__init__()
        self.arch = arch
        self.config = config
        self.dtype = np.dtype(dtype)
        width = config.penultimate_width
        self.trunk = self.add("trunk", trunk)
        self.embedder = self.add("embedder", self._make_embedder(trunk_width, width, head_layers, rng))
        self.classifier = self.add("classifier", Linear(width, config.num_classes, rng=rng, dtype=dtype))

    def _make_embedder(self, trunk_width, width, depth, rng) -> Sequential:
        layers = []
        for i in range(1, depth + 1):
            layers.append((f"fc{i}", Linear(trunk_width if i == 1 else width, width, rng=rng, dtype=self.dtype)))
            layers.append((f"relu{i}", ReLU()))
        return Sequential(layers)

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    def _prepare(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == 2:
            x = x[:, None, :]
        return x

    def forward(self, x, train=False, record=True):
        h = self.trunk.forward(self._prepare(x), train, record)
        h = self.embedder.forward(h, train, record)
        return self.classifier.forward(h, train, record)

    def backward(self, grad):
        grad = self.classifier.backward(grad)
        grad = self.embedder.backward(grad)
        return self.trunk.backward(grad)

    def embed(self, x, train=False, record=False) -> np.ndarray:
        h = self.trunk.forward(self._prepare(x), train, record)
        return self.embedder.forward(h, train, record)

    def predict_proba(self, x) -> np.ndarray:
        return F.softmax(self.forward(x, train=False, record=False))

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.forward(x, train=False, record=False), axis=1)

    def config_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.config).items()}


def _stem(rng, dtype) -> Sequential:
    return Sequential(
        [
            ("conv", Conv1d(1, STEM_CHANNELS, 7, 1, rng=rng, dtype=dtype, input_grad=False)),
            ("bn", BatchNorm1d(STEM_CHANNELS, dtype=dtype)),
            ("relu", ReLU()),
            ("pool", MaxPool1d(POOL)),
        ]
    )


def inception_block(in_ch: int, branch_channels: int, dilations, rng, dtype) -> Concat:
    """Parallel dilated 1x3 conv + BN + ReLU branches, channel-concatenated."""
    return Concat(
        [(f"d{d}", _conv_bn_relu(in_ch, branch_channels, 3, d, rng, dtype)) for d in dilations]
    )


def build_inc_tssdnet(config: IncTssdConfig = IncTssdConfig(), seed: int = 0, dtype=np.float32) -> TSSDNet:
    config.validate()
    rng = np.random.default_rng(seed)
    layers = [("stem", _stem(rng, dtype))]
    width = STEM_CHANNELS
    out_width = config.branch_channels * len(config.dilations)
    for i in range(config.num_blocks):
        layers.append((f"block{i}", inception_block(width, config.branch_channels, config.dilations, rng, dtype)))
        width = out_width
        last = i == config.num_blocks - 1
        layers.append((f"pool{i}", GlobalMaxPool1d() if last else MaxPool1d(POOL)))
    return TSSDNet(ARCH_INC, config, Sequential(layers), width, dtype, rng)


def residual_block(in_ch: int, out_ch: int, rng, dtype) -> Sequential:
    body = Sequential(
        [
            ("conv1", Conv1d(in_ch, out_ch, 3, 1, rng=rng, dtype=dtype)),
            ("bn1", BatchNorm1d(out_ch, dtype=dtype)),
            ("relu1", ReLU()),
            ("conv2", Conv1d(out_ch, out_ch, 3, 1, rng=rng, dtype=dtype)),
            ("bn2", BatchNorm1d(out_ch, dtype=dtype)),
        ]
    )
    shortcut = None if in_ch == out_ch else Conv1d(in_ch, out_ch, 1, 1, rng=rng, dtype=dtype)
    return Sequential([("add", Residual(body, shortcut)), ("relu", ReLU())])


def build_res_tssdnet(config: ResTssdConfig = ResTssdConfig(), seed: int = 0, dtype=np.float32) -> TSSDNet:
    config.validate()
    rng = np.random.default_rng(seed)
    layers = [("stem", _stem(rng, dtype))]
    width = STEM_CHANNELS
    for s, ch in enumerate(config.stage_channels):
        for b in range(config.blocks_per_stage):
            layers.append((f"stage{s}.{b}", residual_block(width, ch, rng, dtype)))
            width = ch
        layers.append((f"pool{s}", MaxPool1d(POOL)))
    layers.append(("gpool", GlobalMaxPool1d()))
    return TSSDNet(ARCH_RES, config, Sequential(layers), width, dtype, rng, head_layers=1)


def build_model(arch: str, config: Union[IncTssdConfig, ResTssdConfig, dict, None] = None, seed: int = 0, dtype=np.float32) -> TSSDNet:
    """Build either architecture from its id and a config object or dict."""
    if arch == ARCH_INC:
        cls, builder = IncTssdConfig, build_inc_tssdnet
    elif arch == ARCH_RES:
        cls, builder = ResTssdConfig, build_res_tssdnet
    else:
        raise ConfigInvalid(f"unknown architecture {arch!r}")
    if config is None:
        config = cls()
    elif isinstance(config, dict):
        config = cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in config.items()})
    return builder(config, seed=seed, dtype=dtype)


def embed(model: TSSDNet, batch: np.ndarray) -> np.ndarray:
    """Penultimate (post-ReLU) activations in eval mode."""
    return model.embed(batch)
