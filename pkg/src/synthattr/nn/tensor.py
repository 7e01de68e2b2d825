from __future__ import annotations

from typing import Optional

import numpy as np


class Tensor:
    """An array with an optional gradient slot of the same shape."""

    __slots__ = ("data", "grad")

    def __init__(self, data, grad: Optional[np.ndarray] = None):
        self.data = np.asarray(data)
        if grad is not None and np.shape(grad) != self.data.shape:
            raise ValueError(f"grad shape {np.shape(grad)} != data shape {self.data.shape}")
        self.grad = grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        g = np.asarray(g, dtype=self.data.dtype).reshape(self.data.shape)
        self.grad = g.copy() if self.grad is None else self.grad + g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={'set' if self.grad is not None else 'none'})"
