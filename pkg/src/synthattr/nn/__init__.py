"""Minimal numpy layer set with exact reverse-mode gradients."""

from .checkpoint import load_checkpoint, save_checkpoint
from .functional import (
    batchnorm1d_backward,
    batchnorm1d_forward,
    conv1d_backward,
    conv1d_forward,
    global_maxpool_backward,
    global_maxpool_forward,
    linear_backward,
    linear_forward,
    maxpool1d_backward,
    maxpool1d_forward,
    softmax,
    softmax_crossentropy,
)
from .layers import BatchNorm1d, Concat, Conv1d, GlobalMaxPool1d, Linear, MaxPool1d, Module, ReLU, Residual, Sequential
from .optim import Optimizer, TrainConfig, learning_rate, optimizer_step
from .tensor import Tensor
