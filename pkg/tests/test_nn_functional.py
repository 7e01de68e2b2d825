import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from synthattr.errors import DegenerateBatch, ShapeMismatch, TargetOutOfRange, WindowLargerThanLength
from synthattr.nn import functional as F
from synthattr.testkit import finite_diff_gradient, naive_conv1d, naive_matmul, relative_error


def _probe(shape, rng):
    return rng.standard_normal(shape)


# ------------------------------------------------------------------ conv


def test_conv_identity_kernel(rng):
    x = rng.standard_normal((1, 1, 10))
    w = np.array([[[0.0, 1.0, 0.0]]])
    assert np.array_equal(F.conv1d_forward(x, w, np.zeros(1)), x)


def test_conv_zero_input_gives_bias(rng):
    w = rng.standard_normal((3, 2, 5))
    y = F.conv1d_forward(np.zeros((2, 2, 7)), w, np.array([1.5, -2.0, 0.25]), dilation=2)
    assert np.all(y == np.array([1.5, -2.0, 0.25])[None, :, None])


def test_conv_hand_case():
    x = np.array([[[1.0, 2.0, 3.0, 4.0]]])
    w = np.array([[[1.0, 0.0, -1.0]]])
    y = F.conv1d_forward(x, w, None, dilation=2)
    # y[t] = x[t-2] - x[t+2], zero outside
    assert np.array_equal(y[0, 0], [-3.0, -4.0, 1.0, 2.0])
    assert np.array_equal(y, naive_conv1d(x, w, None, 2, 2))


@given(
    b=st.integers(1, 2),
    cin=st.integers(1, 3),
    cout=st.integers(1, 3),
    length=st.integers(1, 12),
    k=st.sampled_from([1, 3, 5]),
    d=st.integers(1, 4),
    seed=st.integers(0, 2**16),
)
def test_conv_matches_naive(b, cin, cout, length, k, d, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((b, cin, length))
    w = rng.standard_normal((cout, cin, k))
    bias = rng.standard_normal(cout)
    y = F.conv1d_forward(x, w, bias, d)
    assert y.shape == (b, cout, length)
    assert np.max(np.abs(y - naive_conv1d(x, w, bias, d))) < 1e-12


def test_conv_even_kernel_rejected():
    with pytest.raises(ShapeMismatch):
        F.conv1d_forward(np.zeros((1, 1, 4)), np.zeros((1, 1, 2)), None)


def test_conv_channel_mismatch():
    with pytest.raises(ShapeMismatch):
        F.conv1d_forward(np.zeros((1, 2, 4)), np.zeros((1, 3, 3)), None)


def test_conv_backward_zero_upstream(rng):
    x, w = rng.standard_normal((2, 2, 8)), rng.standard_normal((3, 2, 3))
    gx, gw, gb = F.conv1d_backward(x, w, np.zeros((2, 3, 8)), 2)
    assert not gx.any() and not gw.any() and not gb.any()


def test_conv_backward_identity(rng):
    x = rng.standard_normal((2, 1, 9))
    g = rng.standard_normal((2, 1, 9))
    gx, _, _ = F.conv1d_backward(x, np.array([[[0.0, 1.0, 0.0]]]), g)
    assert np.array_equal(gx, g)


def test_conv_gradients_finite_difference(rng):
    x, w, b = rng.standard_normal((2, 2, 8)), rng.standard_normal((2, 2, 3)), rng.standard_normal(2)
    r = rng.standard_normal((2, 2, 8))
    gx, gw, gb = F.conv1d_backward(x, w, r, dilation=2)
    loss = lambda x_, w_, b_: float(np.sum(F.conv1d_forward(x_, w_, b_, 2) * r))
    assert relative_error(gx, finite_diff_gradient(lambda v: loss(v, w, b), x)).max() < 1e-6
    assert relative_error(gw, finite_diff_gradient(lambda v: loss(x, v, b), w)).max() < 1e-6
    assert relative_error(gb, finite_diff_gradient(lambda v: loss(x, w, v), b)).max() < 1e-6


def test_conv_skips_input_grad(rng):
    x, w = rng.standard_normal((1, 1, 6)), rng.standard_normal((2, 1, 3))
    gx, gw, _ = F.conv1d_backward(x, w, np.ones((1, 2, 6)), input_grad=False)
    assert gx is None and gw.shape == w.shape


# ------------------------------------------------------------------ batchnorm


def test_bn_fixed_point(rng):
    x = rng.standard_normal((4, 3, 50))
    x = (x - x.mean(axis=(0, 2), keepdims=True)) / x.std(axis=(0, 2), keepdims=True)
    y, _, _ = F.batchnorm1d_forward(x, np.ones(3), np.zeros(3), np.zeros(3), np.ones(3), True)
    assert np.allclose(y, x, atol=1e-5)


def test_bn_train_statistics(rng):
    x = 3 + 5 * rng.standard_normal((4, 2, 30))
    y, _, (rm, rv) = F.batchnorm1d_forward(x, np.ones(2), np.zeros(2), np.zeros(2), np.ones(2), True)
    assert np.all(np.abs(y.mean(axis=(0, 2))) < 1e-6)
    assert np.all(np.abs(y.var(axis=(0, 2)) - 1) < 1e-6)
    n = 4 * 30
    assert np.allclose(rm, 0.1 * x.mean(axis=(0, 2)))
    assert np.allclose(rv, 0.9 + 0.1 * x.var(axis=(0, 2)) * n / (n - 1))


def test_bn_eval_uses_running_stats(rng):
    x = rng.standard_normal((2, 2, 5))
    y, _, stats = F.batchnorm1d_forward(x, np.array([2.0, 1.0]), np.array([0.5, 0.0]), np.array([1.0, -1.0]), np.array([4.0, 1.0]), False)
    expected0 = (x[:, 0] - 1.0) / np.sqrt(4.0 + 1e-5) * 2.0 + 0.5
    assert np.allclose(y[:, 0], expected0)


def test_bn_degenerate_batch():
    with pytest.raises(DegenerateBatch):
        F.batchnorm1d_forward(np.ones((1, 2, 1)), np.ones(2), np.zeros(2), np.zeros(2), np.ones(2), True)


@pytest.mark.parametrize("train", [True, False])
def test_bn_gradients(rng, train):
    x = rng.standard_normal((3, 2, 5))
    gamma, beta = rng.uniform(0.5, 2, 2), rng.standard_normal(2)
    rm, rv = rng.standard_normal(2), rng.uniform(0.5, 2, 2)
    r = rng.standard_normal(x.shape)

    def loss(x_, g_, b_):
        return float(np.sum(F.batchnorm1d_forward(x_, g_, b_, rm, rv, train)[0] * r))

    _, cache, _ = F.batchnorm1d_forward(x, gamma, beta, rm, rv, train)
    gx, gg, gb = F.batchnorm1d_backward(cache, r)
    assert relative_error(gx, finite_diff_gradient(lambda v: loss(v, gamma, beta), x)).max() < 1e-5
    assert relative_error(gg, finite_diff_gradient(lambda v: loss(x, v, beta), gamma)).max() < 1e-5
    assert relative_error(gb, finite_diff_gradient(lambda v: loss(x, gamma, v), beta)).max() < 1e-5


# ------------------------------------------------------------------ pooling


def test_maxpool_identity(rng):
    x = rng.standard_normal((2, 3, 7))
    assert np.array_equal(F.maxpool1d_forward(x, 1)[0], x)


def test_maxpool_hand_case():
    y, _ = F.maxpool1d_forward(np.array([[[1.0, 3, 2, 0, 5, 1, 1, 1]]]), 4)
    assert np.array_equal(y[0, 0], [3.0, 5.0])


def test_maxpool_ties_route_to_first():
    x = np.full((1, 1, 8), 2.0)
    y, idx = F.maxpool1d_forward(x, 4)
    assert np.all(y == 2.0)
    g = F.maxpool1d_backward(np.ones_like(y), idx, 8, 4)
    assert np.array_equal(g[0, 0], [1, 0, 0, 0, 1, 0, 0, 0])


def test_maxpool_window_too_large():
    with pytest.raises(WindowLargerThanLength):
        F.maxpool1d_forward(np.zeros((1, 1, 3)), 4)


def test_maxpool_gradient(rng):
    x = rng.permutation(40).reshape(2, 2, 10).astype(np.float64)  # distinct values
    r = rng.standard_normal((2, 2, 2))
    y, idx = F.maxpool1d_forward(x, 4)
    g = F.maxpool1d_backward(r, idx, 10, 4)
    num = finite_diff_gradient(lambda v: float(np.sum(F.maxpool1d_forward(v, 4)[0] * r)), x, step=1e-6)
    assert relative_error(g, num).max() < 1e-6


def test_global_maxpool():
    x = np.arange(12.0).reshape(1, 2, 6)
    y, idx = F.global_maxpool_forward(x)
    assert np.array_equal(y, [[5.0, 11.0]])
    single = np.array([[[0.3], [-2.0]]])
    assert np.array_equal(F.global_maxpool_forward(single)[0], [[0.3, -2.0]])


def test_global_maxpool_gradient(rng):
    x = rng.standard_normal((2, 3, 6))
    r = rng.standard_normal((2, 3))
    _, idx = F.global_maxpool_forward(x)
    g = F.global_maxpool_backward(r, idx, 6)
    num = finite_diff_gradient(lambda v: float(np.sum(F.global_maxpool_forward(v)[0] * r)), x, step=1e-7)
    assert relative_error(g, num).max() < 1e-6


# ------------------------------------------------------------------ linear, softmax


def test_linear_identity_and_zero(rng):
    x = rng.standard_normal((3, 4))
    assert np.array_equal(F.linear_forward(x, np.eye(4), np.zeros(4)), x)
    b = rng.standard_normal(2)
    assert np.array_equal(F.linear_forward(np.zeros((3, 4)), rng.standard_normal((2, 4)), b), np.tile(b, (3, 1)))


def test_linear_matches_naive(rng):
    x, w, b = rng.standard_normal((3, 4)), rng.standard_normal((5, 4)), rng.standard_normal(5)
    assert np.allclose(F.linear_forward(x, w, b), naive_matmul(x, w.T) + b, rtol=1e-13)


def test_linear_gradients(rng):
    x, w, b = rng.standard_normal((3, 4)), rng.standard_normal((2, 4)), rng.standard_normal(2)
    r = rng.standard_normal((3, 2))
    gx, gw, gb = F.linear_backward(x, w, r)
    loss = lambda x_, w_, b_: float(np.sum(F.linear_forward(x_, w_, b_) * r))
    assert relative_error(gx, finite_diff_gradient(lambda v: loss(v, w, b), x)).max() < 1e-6
    assert relative_error(gw, finite_diff_gradient(lambda v: loss(x, v, b), w)).max() < 1e-6
    assert relative_error(gb, finite_diff_gradient(lambda v: loss(x, w, v), b)).max() < 1e-6


def test_relu_gradient(rng):
    x = rng.standard_normal((2, 3, 4))
    r = rng.standard_normal(x.shape)
    g = F.relu_backward(F.relu_forward(x), r)
    num = finite_diff_gradient(lambda v: float(np.sum(F.relu_forward(v) * r)), x)
    assert relative_error(g, num).max() < 1e-6


def test_softmax_basics(rng):
    assert np.allclose(F.softmax(np.array([[2.0, 2.0]])), [[0.5, 0.5]])
    logits = rng.standard_normal((4, 6)) * 30
    p = F.softmax(logits)
    assert np.all(np.abs(p.sum(axis=1) - 1) < 1e-12)
    assert np.allclose(F.softmax(logits + 123.0), p, atol=1e-15)


def test_uniform_logits_loss():
    loss, _ = F.softmax_crossentropy(np.zeros((3, 6)), [0, 3, 5])
    assert abs(loss - math.log(6)) < 1e-12


def test_crossentropy_gradient(rng):
    logits = rng.standard_normal((4, 6))
    targets = np.array([0, 5, 2, 2])
    _, g = F.softmax_crossentropy(logits, targets)
    num = finite_diff_gradient(lambda v: F.softmax_crossentropy(v, targets)[0], logits)
    assert relative_error(g, num).max() < 1e-6


def test_crossentropy_target_range():
    with pytest.raises(TargetOutOfRange):
        F.softmax_crossentropy(np.zeros((2, 6)), [0, 6])
