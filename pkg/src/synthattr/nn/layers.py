"""Stateful layers built on :mod:`synthattr.nn.functional`.

A forward call with ``record=True`` (the default) caches what the backward
pass needs on the layer itself. Inference paths pass ``record=False`` and
touch no layer state, so frozen models can be shared across threads.
"""

from __future__ import annotations

import math
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import functional as F
from .tensor import Tensor


class Module:
    def __init__(self):
        self._children: Dict[str, "Module"] = {}
        self._params: Dict[str, Tensor] = {}
        self._buffers: Dict[str, np.ndarray] = {}

    def add(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(f"{prefix}{cname}.")

    def parameters(self) -> List[Tensor]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, b in self._buffers.items():
            yield prefix + name, b
        for cname, child in self._children.items():
            yield from child.named_buffers(f"{prefix}{cname}.")

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters():
            p.data[...] = state[name]
        for name, b in self.named_buffers():
            b[...] = state[name]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def forward(self, x: np.ndarray, train: bool = False, record: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    __call__ = forward


def _kaiming_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _bias_uniform(rng: np.random.Generator, n: int, fan_in: int, dtype) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=n).astype(dtype)


class Conv1d(Module):
    def __init__(
        self, in_ch: int, out_ch: int, kernel: int, dilation: int = 1, rng=None, dtype=np.float32, input_grad: bool = True
    ):
        super().__init__()
        self.input_grad = input_grad
        rng = rng if rng is not None else np.random.default_rng(0)
        fan_in = in_ch * kernel
        self.dilation = dilation
        self.weight = Tensor(_kaiming_uniform(rng, (out_ch, in_ch, kernel), fan_in, dtype))
        self.bias = Tensor(_bias_uniform(rng, out_ch, fan_in, dtype))
        self._params = {"weight": self.weight, "bias": self.bias}
        self._cache = None

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def forward(self, x, train=False, record=True):
        cols = F.im2col(x, self.weight.shape[2], self.dilation)
        y = F.conv1d_forward(x, self.weight.data, self.bias.data, self.dilation, cols=cols)
        if record:
            self._cache = (x, cols)
        return y

    def backward(self, grad):
        x, cols = self._cache
        gx, gw, gb = F.conv1d_backward(x, self.weight.data, grad, self.dilation, cols=cols, input_grad=self.input_grad)
        self.weight.accumulate(gw)
        self.bias.accumulate(gb)
        self._cache = None
        return gx


class BatchNorm1d(Module):
    def __init__(self, channels: int, momentum: float = F.BN_MOMENTUM, eps: float = F.BN_EPS, dtype=np.float32):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(channels, dtype=dtype))
        self.beta = Tensor(np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._params = {"gamma": self.gamma, "beta": self.beta}
        self._buffers = {"running_mean": self.running_mean, "running_var": self.running_var}
        self._cache = None

    def forward(self, x, train=False, record=True):
        y, cache, (mean, var) = F.batchnorm1d_forward(
            x, self.gamma.data, self.beta.data, self.running_mean, self.running_var, train, self.momentum, self.eps
        )
        if train and record:
            # in place so buffer references held elsewhere stay valid
            self.running_mean[...] = mean
            self.running_var[...] = var
        if record:
            self._cache = cache
        return y

    def backward(self, grad):
        gx, gg, gb = F.batchnorm1d_backward(self._cache, grad)
        self.gamma.accumulate(gg)
        self.beta.accumulate(gb)
        self._cache = None
        return gx


class ReLU(Module):
    def forward(self, x, train=False, record=True):
        y = F.relu_forward(x)
        if record:
            self._y = y
        return y

    def backward(self, grad):
        g = F.relu_backward(self._y, grad)
        self._y = None
        return g


class MaxPool1d(Module):
    def __init__(self, window: int):
        super().__init__()
        self.window = window

    def forward(self, x, train=False, record=True):
        y, idx = F.maxpool1d_forward(x, self.window)
        if record:
            self._cache = (idx, x.shape[2])
        return y

    def backward(self, grad):
        idx, length = self._cache
        self._cache = None
        return F.maxpool1d_backward(grad, idx, length, self.window)


class GlobalMaxPool1d(Module):
    def forward(self, x, train=False, record=True):
        y, idx = F.global_maxpool_forward(x)
        if record:
            self._cache = (idx, x.shape[2])
        return y

    def backward(self, grad):
        idx, length = self._cache
        self._cache = None
        return F.global_maxpool_backward(grad, idx, length)


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weight = Tensor(_kaiming_uniform(rng, (out_features, in_features), in_features, dtype))
        self.bias = Tensor(_bias_uniform(rng, out_features, in_features, dtype))
        self._params = {"weight": self.weight, "bias": self.bias}

    def forward(self, x, train=False, record=True):
        if record:
            self._x = x
        return F.linear_forward(x, self.weight.data, self.bias.data)

    def backward(self, grad):
        gx, gw, gb = F.linear_backward(self._x, self.weight.data, grad)
        self.weight.accumulate(gw)
        self.bias.accumulate(gb)
        self._x = None
        return gx


class Sequential(Module):
    def __init__(self, layers: Sequence[Tuple[str, Module]]):
        super().__init__()
        for name, layer in layers:
            self.add(name, layer)

    def __iter__(self):
        return iter(self._children.values())

    def forward(self, x, train=False, record=True):
        for layer in self._children.values():
            x = layer.forward(x, train, record)
        return x

    def backward(self, grad):
        for layer in reversed(list(self._children.values())):
            grad = layer.backward(grad)
        return grad


class Concat(Module):
    """Parallel branches over one input, joined along the channel axis."""

    def __init__(self, branches: Sequence[Tuple[str, Module]]):
        super().__init__()
        for name, branch in branches:
            self.add(name, branch)

    def forward(self, x, train=False, record=True):
        outs = [b.forward(x, train, record) for b in self._children.values()]
        if record:
            self._widths = [o.shape[1] for o in outs]
        return np.concatenate(outs, axis=1)

    def backward(self, grad):
        splits = np.cumsum(self._widths)[:-1]
        gx = None
        for branch, g in zip(self._children.values(), np.split(grad, splits, axis=1)):
            gb = branch.backward(np.ascontiguousarray(g))
            gx = gb if gx is None else gx + gb
        return gx


class Residual(Module):
    """``body(x) + shortcut(x)``; an absent shortcut is the identity."""

    def __init__(self, body: Module, shortcut: Optional[Module] = None):
        super().__init__()
        self.add("body", body)
        if shortcut is not None:
            self.add("shortcut", shortcut)
        self.shortcut = shortcut
        self.body = body

    def forward(self, x, train=False, record=True):
        skip = x if self.shortcut is None else self.shortcut.forward(x, train, record)
        return self.body.forward(x, train, record) + skip

    def backward(self, grad):
        gx = self.body.backward(grad)
        return gx + (grad if self.shortcut is None else self.shortcut.backward(grad))
