import numpy as np
import pytest

from attmidflow import autodiff as ad
from attmidflow.autodiff import Tensor, check_gradients
from attmidflow.errors import ShapeError
from attmidflow.nn import (
    AttentionGate,
    BlockKind,
    BlockSpec,
    CardinalityBlock,
    InceptionBlock,
    ResidualBlock,
    apply_block,
    build_block,
)

KINDS = list(BlockKind)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("stride", [1, 2])
def test_channel_and_stride_contract(kind, stride, rng):
    spec = BlockSpec(kind, 8, 16, stride, cardinality_width=32, scale_divisor=8)
    y = apply_block(build_block(spec, rng), Tensor(rng.normal(size=(3, 8, 8, 8))))
    assert y.shape == (3, 16, 8 // stride, 8 // stride)


@pytest.mark.parametrize("kind", KINDS)
def test_channel_mismatch_rejected(kind, rng):
    block = build_block(BlockSpec(kind, 8, 16, 1, scale_divisor=8), rng)
    with pytest.raises(ShapeError, match="8 input channels"):
        block(Tensor(np.zeros((1, 4, 8, 8))))


def test_residual_zero_branch_passes_input_through_activation(rng):
    block = ResidualBlock(BlockSpec("residual", 64, 64, 1), rng)
    for p in (block.conv1, block.conv2):
        p.weight.data[:] = 0
        p.bias.data[:] = 0
    assert block.shortcut.identity
    x = rng.normal(size=(1, 64, 6, 6)).astype(np.float32)
    y = block(Tensor(x)).data
    np.testing.assert_allclose(y, np.where(x > 0, x, 0.1 * x), rtol=1e-6)


def test_residual_projection_shortcut_when_shapes_differ(rng):
    block = ResidualBlock(BlockSpec("residual", 8, 16, 2), rng)
    assert not block.shortcut.identity
    assert block.shortcut.proj.kernel == 1 and block.shortcut.proj.stride == 2


def test_cardinality_block_equals_four_summed_paths(rng, f64):
    spec = BlockSpec("cardinality", 128, 256, 1, cardinality_width=32)
    block = CardinalityBlock(spec, rng)
    assert block.reduce.out_ch == 4 * 32 and block.grouped.groups == 4
    x = Tensor(rng.normal(size=(1, 128, 4, 4)))
    y = block(x).data
    assert y.shape[1] == 256

    # oracle: four independent bottleneck paths of width 32, each reduce -> 3x3 -> expand-slice, summed
    lrelu = lambda v: np.where(v > 0, v, 0.1 * v)  # noqa: E731
    r = lrelu(block.reduce(x).data)
    total = np.zeros((1, 256, 4, 4))
    for g in range(4):
        sl = slice(32 * g, 32 * (g + 1))
        h = ad.conv2d(Tensor(r[:, sl]), Tensor(block.grouped.weight.data[sl]), Tensor(block.grouped.bias.data[sl]), 1, 1)
        h = lrelu(h.data)
        total += ad.conv2d(Tensor(h), Tensor(block.expand.weight.data[:, sl]), None, 1, 0).data
    total += block.expand.bias.data[None, :, None, None]
    expected = lrelu(total + block.shortcut(x).data)
    np.testing.assert_allclose(y, expected, rtol=1e-10, atol=1e-12)


def test_cardinality_width_64_doubles_inner_channels(rng):
    a = CardinalityBlock(BlockSpec("cardinality", 64, 128, 1, 32), rng)
    b = CardinalityBlock(BlockSpec("cardinality", 64, 128, 1, 64), rng)
    assert (a.reduce.out_ch, b.reduce.out_ch) == (128, 256)


def test_cardinality_width_restricted():
    with pytest.raises(ValueError):
        BlockSpec("cardinality", 8, 8, 1, cardinality_width=16)


def test_inception_branches_concatenate_to_out_channels(rng):
    block = InceptionBlock(BlockSpec("inception", 64, 128, 2), rng)
    branches = block.branches(Tensor(rng.normal(size=(1, 64, 8, 8))))
    assert [b.shape[1] for b in branches] == [32, 32, 32, 32]
    assert all(b.shape[2:] == (4, 4) for b in branches)
    assert block(Tensor(rng.normal(size=(1, 64, 8, 8)))).shape == (1, 128, 4, 4)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("stride", [1, 2])
def test_block_gradients_64bit(kind, stride, f64):
    rng = np.random.default_rng(3)
    block = build_block(BlockSpec(kind, 4, 8, stride, scale_divisor=32, kernel=3), rng)
    x = Tensor(rng.normal(size=(1, 4, 4, 4)), requires_grad=True)
    w = Tensor(np.random.default_rng(9).normal(size=(1, 8, 4 // stride, 4 // stride)))
    params = block.parameters()
    assert check_gradients(lambda: (block(x) * w).sum(), [x] + params) < 1e-6


def test_attention_gate_gradients_64bit(f64):
    rng = np.random.default_rng(4)
    gate = AttentionGate(8, rng)
    gate.attdeconv2.weight.data[:] = rng.normal(0, 0.3, gate.attdeconv2.weight.shape)
    gate.attdeconv2.bias.data[:] = rng.normal(0, 0.3, gate.attdeconv2.bias.shape)
    x = Tensor(rng.normal(size=(1, 8, 4, 4)), requires_grad=True)
    w = Tensor(rng.normal(size=(1, 8, 4, 4)))
    assert check_gradients(lambda: (gate(x) * w).sum(), [x] + gate.parameters()) < 1e-6
