import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthattr.errors import ConfigInvalid
from synthattr.models import (
    ARCH_INC,
    ARCH_RES,
    IncTssdConfig,
    ResTssdConfig,
    build_inc_tssdnet,
    build_model,
    build_res_tssdnet,
    embed,
    residual_block,
)
from synthattr.nn import functional as F
from synthattr.nn.optim import Optimizer, TrainConfig
from synthattr.testkit import grad_check

SMALL_INC = IncTssdConfig(branch_channels=2, num_blocks=2)
SMALL_RES = ResTssdConfig(stage_channels=(4, 8))


def test_inc_default_shapes():
    model = build_inc_tssdnet()
    x = np.random.default_rng(0).standard_normal((2, 96000)).astype(np.float32)
    logits = model.forward(x, record=False)
    assert logits.shape == (2, 6)
    assert np.allclose(F.softmax(logits).sum(axis=1), 1.0)
    e = embed(model, x)
    assert e.shape == (2, 32) and np.all(e >= 0)
    assert np.array_equal(e, embed(model, x))


def test_inc_block_width():
    model = build_inc_tssdnet(IncTssdConfig(branch_channels=5, num_blocks=2))
    h = model.trunk.forward(np.zeros((1, 1, 64), np.float32), record=False)
    assert h.shape == (1, 20)


def test_res_default_shapes(rng):
    model = build_res_tssdnet()
    x = rng.standard_normal((2, 1, 4096)).astype(np.float32)
    assert model.forward(x, record=False).shape == (2, 6)
    assert embed(model, x).shape == (2, 32)
    # one hidden layer in the Res head, two in the Inc head
    assert len(list(model.embedder)) == 2 and len(list(build_inc_tssdnet().embedder)) == 4


@pytest.mark.parametrize("bad", [dict(dilations=(1, 1, 2)), dict(dilations=(0, 1)), dict(num_classes=7)])
def test_inc_config_invalid(bad):
    with pytest.raises(ConfigInvalid):
        build_inc_tssdnet(IncTssdConfig(**bad))


def test_res_config_invalid():
    with pytest.raises(ConfigInvalid):
        build_res_tssdnet(ResTssdConfig(stage_channels=(32, 16)))
    with pytest.raises(ConfigInvalid):
        build_model("vgg")


def test_zero_residual_branch_is_relu_of_input(rng):
    block = residual_block(4, 4, rng, np.float64)
    for name, p in block.named_parameters():
        if "body" in name and not name.endswith("gamma"):
            p.data[...] = 0.0
    x = rng.standard_normal((2, 4, 16))
    assert np.array_equal(block.forward(x, train=False, record=False), np.maximum(x, 0))


@pytest.mark.parametrize("arch,cfg", [(ARCH_INC, SMALL_INC), (ARCH_RES, SMALL_RES)])
def test_class_count_surgery(arch, cfg):
    six = build_model(arch, cfg)
    five = build_model(arch, type(cfg)(**{**cfg.__dict__, "num_classes": 5}))
    s6 = {k: v.shape for k, v in six.state_dict().items()}
    s5 = {k: v.shape for k, v in five.state_dict().items()}
    diff = {k for k in s6 if s6[k] != s5[k]}
    assert diff == {"classifier.weight", "classifier.bias"}
    assert five.forward(np.zeros((1, 1, 256), np.float32), record=False).shape == (1, 5)


@settings(max_examples=10)
@given(arch=st.sampled_from([ARCH_INC, ARCH_RES]), blocks=st.integers(1, 3), seed=st.integers(0, 100))
def test_forward_finite_at_minimum_length(arch, blocks, seed):
    if arch == ARCH_INC:
        cfg = IncTssdConfig(branch_channels=2, num_blocks=blocks)
    else:
        cfg = ResTssdConfig(stage_channels=tuple(4 * 2**i for i in range(blocks)))
    model = build_model(arch, cfg, seed=seed)
    x = np.random.default_rng(seed).standard_normal((2, 1, 4 ** (blocks + 1))).astype(np.float32)
    assert np.all(np.isfinite(model.forward(x, train=True, record=False)))


@pytest.mark.parametrize("arch,cfg", [(ARCH_INC, SMALL_INC), (ARCH_RES, SMALL_RES)])
def test_full_network_gradcheck(arch, cfg):
    model = build_model(arch, cfg, seed=2, dtype=np.float64)
    rng = np.random.default_rng(9)
    x = rng.standard_normal((3, 1, 256))
    y = np.array([0, 3, 5])

    def loss():
        return F.softmax_crossentropy(model.forward(x, train=True, record=False), y)[0]

    model.zero_grad()
    _, g = F.softmax_crossentropy(model.forward(x, train=True), y)
    model.backward(g)
    names = ["trunk.stem.conv.weight", "classifier.weight", "embedder.fc1.weight"]
    params = {n: p.data for n, p in model.named_parameters() if n in names}
    analytic = {n: p.grad.copy() for n, p in model.named_parameters() if n in names}
    report = grad_check(loss, params, analytic, step=1e-6, tol=1e-5, max_coords=12, rng=rng)
    assert report.passed, report.errors


@pytest.mark.parametrize("arch,cfg", [(ARCH_INC, SMALL_INC), (ARCH_RES, SMALL_RES)])
def test_single_step_descent(arch, cfg):
    model = build_model(arch, cfg, seed=4, dtype=np.float64)
    x = np.random.default_rng(1).standard_normal((1, 1, 512))
    y = np.array([2])
    before, g = F.softmax_crossentropy(model.forward(x, train=True), y)
    model.zero_grad()
    model.backward(g)
    Optimizer(model.parameters(), TrainConfig(optimizer="sgd", lr0=1e-4)).step(0)
    after, _ = F.softmax_crossentropy(model.forward(x, train=True, record=False), y)
    assert after < before
