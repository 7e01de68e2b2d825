"""Adam / SGD-momentum with an exponential per-epoch learning-rate decay."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ..errors import ConfigInvalid, NonFiniteGradient
from .tensor import Tensor

OPTIMIZERS = ("adam", "sgd_momentum", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 128
    epochs: int = 200
    lr0: float = 1e-3
    gamma: float = 0.95
    seed: int = 0
    optimizer: str = "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ConfigInvalid(f"gamma must be in (0, 1], got {self.gamma}")
        if self.batch_size < 1:
            raise ConfigInvalid(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigInvalid(f"epochs must be >= 1, got {self.epochs}")
        if self.lr0 <= 0:
            raise ConfigInvalid(f"lr0 must be positive, got {self.lr0}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigInvalid(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")


def learning_rate(config: TrainConfig, epoch: int) -> float:
    return config.lr0 * config.gamma**epoch


class Optimizer:
    """Updates ``Tensor.data`` in place from ``Tensor.grad``.

    Parameters without a gradient are skipped. ``sgd`` is plain gradient
    descent; ``sgd_momentum`` uses heavy-ball momentum.
    """

    def __init__(self, params: Sequence[Tensor], config: TrainConfig):
        self.params = list(params)
        self.config = config
        self.t = 0
        self._m: List[Optional[np.ndarray]] = [None] * len(self.params)
        self._v: List[Optional[np.ndarray]] = [None] * len(self.params)

    def step(self, epoch: int) -> float:
        grads = [p.grad for p in self.params]
        for g in grads:
            if g is not None and not np.all(np.isfinite(g)):
                raise NonFiniteGradient("gradient contains NaN or Inf; step aborted")
        lr = learning_rate(self.config, epoch)
        cfg = self.config
        self.t += 1
        for i, (p, g) in enumerate(zip(self.params, grads)):
            if g is None:
                continue
            if cfg.optimizer == "adam":
                m = self._m[i] if self._m[i] is not None else np.zeros_like(p.data)
                v = self._v[i] if self._v[i] is not None else np.zeros_like(p.data)
                m = cfg.beta1 * m + (1 - cfg.beta1) * g
                v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
                self._m[i], self._v[i] = m, v
                m_hat = m / (1 - cfg.beta1**self.t)
                v_hat = v / (1 - cfg.beta2**self.t)
                p.data -= (lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)).astype(p.data.dtype)
            elif cfg.optimizer == "sgd_momentum":
                buf = g if self._m[i] is None else cfg.momentum * self._m[i] + g
                self._m[i] = buf
                p.data -= (lr * buf).astype(p.data.dtype)
            else:
                p.data -= (lr * g).astype(p.data.dtype)
        return lr


def optimizer_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    config: TrainConfig,
    epoch: int,
    optimizer: Optional[Optimizer] = None,
) -> List[np.ndarray]:
    """Functional wrapper: returns updated copies of ``params``.

    Pass the same ``optimizer`` across calls to carry Adam/momentum state;
    it must have been built over tensors matching ``params``.
    """
    tensors = [Tensor(np.array(p, copy=True), np.asarray(g)) for p, g in zip(params, grads)]
    if optimizer is None:
        optimizer = Optimizer(tensors, config)
    else:
        for slot, t in zip(optimizer.params, tensors):
            slot.data, slot.grad = t.data, t.grad
        tensors = optimizer.params
    optimizer.step(epoch)
    return [t.data for t in tensors]
