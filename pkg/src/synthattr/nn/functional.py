"""Forward and backward passes for the fixed layer set, on plain ndarrays.

Activations are laid out (batch, channels, length). Every backward function
takes the upstream gradient plus whatever the forward pass cached and
returns exact reverse-mode gradients.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

from . import _kernels as _k
from ..errors import DegenerateBatch, ShapeMismatch, TargetOutOfRange, WindowLargerThanLength

BN_MOMENTUM = 0.1
BN_EPS = 1e-5


def _check_conv(x: np.ndarray, w: np.ndarray, dilation: int) -> int:
    if x.ndim != 3 or w.ndim != 3:
        raise ShapeMismatch(f"conv1d expects x (B,C,L) and w (O,C,K), got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"input has {x.shape[1]} channels, kernel expects {w.shape[1]}")
    k = w.shape[2]
    if k % 2 == 0:
        raise ShapeMismatch(f"'same' padding needs an odd kernel, got {k}")
    if dilation < 1:
        raise ShapeMismatch(f"dilation must be >= 1, got {dilation}")
    return dilation * (k - 1) // 2


def im2col(x: np.ndarray, k: int, dilation: int) -> np.ndarray:
    """(B, C, L) -> (B, C*k, L) with zero padding; column c*k + j holds tap j."""
    b, c, length = x.shape
    half = (k - 1) // 2
    cols = np.zeros((b, c, k, length), dtype=x.dtype)
    for j in range(k):
        shift = (j - half) * dilation
        if abs(shift) >= length:
            continue  # tap falls entirely in the padding
        if shift >= 0:
            cols[:, :, j, : length - shift] = x[:, :, shift:]
        else:
            cols[:, :, j, -shift:] = x[:, :, : length + shift]
    return cols.reshape(b, c * k, length)


def conv1d_forward(
    x: np.ndarray, w: np.ndarray, bias: Optional[np.ndarray], dilation: int = 1, cols: Optional[np.ndarray] = None
) -> np.ndarray:
    """Stride-1 dilated cross-correlation with length-preserving padding."""
    _check_conv(x, w, dilation)
    if cols is None:
        cols = im2col(x, w.shape[2], dilation)
    y = np.matmul(w.reshape(w.shape[0], -1), cols)
    if bias is not None:
        y += bias[None, :, None]
    return y


def conv1d_backward(
    x: np.ndarray,
    w: np.ndarray,
    grad_out: np.ndarray,
    dilation: int = 1,
    cols: Optional[np.ndarray] = None,
    input_grad: bool = True,
) -> Tuple[Optional[np.ndarray], np.ndarray, np.ndarray]:
    """Returns (grad_x, grad_w, grad_bias); grad_x is None when
    ``input_grad`` is false (first layer of a network)."""
    pad = _check_conv(x, w, dilation)
    b, c, length = x.shape
    o, _, k = w.shape
    if grad_out.shape != (b, o, length):
        raise ShapeMismatch(f"grad_out shape {grad_out.shape} does not match forward output {(b, o, length)}")
    if cols is None:
        cols = im2col(x, k, dilation)
    grad_w = np.matmul(grad_out, cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
    grad_b = grad_out.sum(axis=(0, 2))
    if not input_grad:
        return None, grad_w, grad_b
    gcols = np.matmul(w.reshape(o, -1).T, grad_out).reshape(b, c, k, length)
    gxp = np.zeros((b, c, length + 2 * pad), dtype=grad_out.dtype)
    for j in range(k):
        gxp[:, :, j * dilation : j * dilation + length] += gcols[:, :, j, :]
    return gxp[:, :, pad : pad + length], grad_w, grad_b


def batchnorm1d_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = BN_MOMENTUM,
    eps: float = BN_EPS,
):
    """Per-channel normalization over (batch, length).

    Returns ``(y, cache, (new_running_mean, new_running_var))``; in eval
    mode the running statistics come back unchanged.
    """
    if x.ndim != 3 or x.shape[1] != gamma.shape[0]:
        raise ShapeMismatch(f"batchnorm over {gamma.shape[0]} channels got input {x.shape}")
    if train:
        n = x.shape[0] * x.shape[2]
        if n < 2:
            raise DegenerateBatch("train-mode batchnorm needs at least 2 values per channel")
        y, xhat, mean, var, inv_std = _k.batchnorm_train_forward(np.ascontiguousarray(x), gamma, beta, eps)
        new_mean = (1 - momentum) * running_mean + momentum * mean
        new_var = (1 - momentum) * running_var + momentum * var * (n / (n - 1))
        running = (new_mean.astype(running_mean.dtype), new_var.astype(running_var.dtype))
        return y, (xhat, inv_std, gamma, True), running
    inv_std = 1.0 / np.sqrt(running_var + eps)
    xhat = (x - running_mean[None, :, None]) * inv_std[None, :, None]
    y = xhat * gamma[None, :, None] + beta[None, :, None]
    return y, (xhat, inv_std, gamma, False), (running_mean, running_var)


def batchnorm1d_backward(cache, grad_out: np.ndarray):
    """Returns (grad_x, grad_gamma, grad_beta)."""
    xhat, inv_std, gamma, train = cache
    if not train:
        grad_gamma = np.sum(grad_out * xhat, axis=(0, 2))
        grad_beta = grad_out.sum(axis=(0, 2))
        return grad_out * (gamma * inv_std)[None, :, None], grad_gamma, grad_beta
    grad_x, grad_gamma, grad_beta = _k.batchnorm_train_backward(np.ascontiguousarray(grad_out), xhat, gamma, inv_std)
    return grad_x, grad_gamma.astype(gamma.dtype), grad_beta.astype(gamma.dtype)


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(y: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (y > 0)


def maxpool1d_forward(x: np.ndarray, window: int) -> Tuple[np.ndarray, np.ndarray]:
    """Non-overlapping max pooling; a trailing partial window is dropped.

    Returns the pooled values and the within-window argmax (first on ties).
    """
    b, c, length = x.shape
    if window > length:
        raise WindowLargerThanLength(f"window {window} exceeds length {length}")
    return _k.maxpool_forward(np.ascontiguousarray(x), window)


def maxpool1d_backward(grad_out: np.ndarray, idx: np.ndarray, length: int, window: int) -> np.ndarray:
    return _k.maxpool_backward(np.ascontiguousarray(grad_out), idx, length, window)


def global_maxpool_forward(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    idx = np.argmax(x, axis=2)
    return np.take_along_axis(x, idx[..., None], axis=2)[..., 0], idx


def global_maxpool_backward(grad_out: np.ndarray, idx: np.ndarray, length: int) -> np.ndarray:
    b, c = grad_out.shape
    grad_x = np.zeros((b, c, length), dtype=grad_out.dtype)
    np.put_along_axis(grad_x, idx[..., None], grad_out[..., None], axis=2)
    return grad_x


def linear_forward(x: np.ndarray, w: np.ndarray, bias: Optional[np.ndarray]) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeMismatch(f"linear expects (B,{w.shape[1]}) input, got {x.shape}")
    y = x @ w.T
    if bias is not None:
        y += bias
    return y


def linear_backward(x: np.ndarray, w: np.ndarray, grad_out: np.ndarray):
    """Returns (grad_x, grad_w, grad_bias)."""
    return grad_out @ w, grad_out.T @ x, grad_out.sum(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_crossentropy(logits: np.ndarray, targets) -> Tuple[float, np.ndarray]:
    """Mean negative log-likelihood and its gradient w.r.t. the logits."""
    targets = np.asarray(targets, dtype=np.int64)
    b, n_classes = logits.shape
    if targets.shape != (b,):
        raise ShapeMismatch(f"expected {b} targets, got shape {targets.shape}")
    if np.any(targets < 0) or np.any(targets >= n_classes):
        raise TargetOutOfRange(f"targets must lie in [0, {n_classes}), got {targets.min()}..{targets.max()}")
    logp = log_softmax(logits)
    rows = np.arange(b)
    loss = float(-logp[rows, targets].mean())
    grad = np.exp(logp)
    grad[rows, targets] -= 1.0
    grad /= b
    return loss, grad
