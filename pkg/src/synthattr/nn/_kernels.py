"""Compiled inner loops for the memory-bound layers (pooling, batchnorm).

The numpy formulations allocate several full-size temporaries per call; at
(8, 16, 48000) that dominates a training step.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def maxpool_forward(x, window):
    b_n, c_n, length = x.shape
    out_len = length // window
    y = np.empty((b_n, c_n, out_len), x.dtype)
    idx = np.empty((b_n, c_n, out_len), np.int64)
    for b in range(b_n):
        for c in range(c_n):
            for t in range(out_len):
                base = t * window
                best = x[b, c, base]
                k = 0
                for j in range(1, window):
                    v = x[b, c, base + j]
                    if v > best:
                        best = v
                        k = j
                y[b, c, t] = best
                idx[b, c, t] = k
    return y, idx


@numba.njit(cache=True)
def maxpool_backward(grad, idx, length, window):
    b_n, c_n, out_len = grad.shape
    gx = np.zeros((b_n, c_n, length), grad.dtype)
    for b in range(b_n):
        for c in range(c_n):
            for t in range(out_len):
                gx[b, c, t * window + idx[b, c, t]] = grad[b, c, t]
    return gx


@numba.njit(cache=True)
def batchnorm_train_forward(x, gamma, beta, eps):
    """Returns (y, xhat, mean, biased_var, inv_std); statistics in float64."""
    b_n, c_n, length = x.shape
    n = b_n * length
    y = np.empty_like(x)
    xhat = np.empty_like(x)
    mean = np.zeros(c_n)
    var = np.zeros(c_n)
    inv_std = np.zeros(c_n)
    for c in range(c_n):
        s = 0.0
        for b in range(b_n):
            for t in range(length):
                s += x[b, c, t]
        m = s / n
        ss = 0.0
        for b in range(b_n):
            for t in range(length):
                d = x[b, c, t] - m
                ss += d * d
        v = ss / n
        inv = 1.0 / np.sqrt(v + eps)
        g = gamma[c]
        bt = beta[c]
        for b in range(b_n):
            for t in range(length):
                h = (x[b, c, t] - m) * inv
                xhat[b, c, t] = h
                y[b, c, t] = h * g + bt
        mean[c] = m
        var[c] = v
        inv_std[c] = inv
    return y, xhat, mean, var, inv_std


@numba.njit(cache=True)
def batchnorm_train_backward(grad, xhat, gamma, inv_std):
    """Returns (grad_x, grad_gamma, grad_beta) for batch-statistics mode."""
    b_n, c_n, length = grad.shape
    n = b_n * length
    gx = np.empty_like(grad)
    g_gamma = np.zeros(c_n)
    g_beta = np.zeros(c_n)
    for c in range(c_n):
        sg = 0.0
        sgx = 0.0
        for b in range(b_n):
            for t in range(length):
                g = grad[b, c, t]
                sg += g
                sgx += g * xhat[b, c, t]
        mg = sg / n
        mgx = sgx / n
        scale = gamma[c] * inv_std[c]
        for b in range(b_n):
            for t in range(length):
                gx[b, c, t] = scale * (grad[b, c, t] - mg - xhat[b, c, t] * mgx)
        g_gamma[c] = sgx
        g_beta[c] = sg
    return gx, g_gamma, g_beta
