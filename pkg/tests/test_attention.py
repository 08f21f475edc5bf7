import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attmidflow import autodiff as ad
from attmidflow.autodiff import Tensor
from attmidflow.errors import ShapeError
from attmidflow.nn import AttentionGate, apply_attention, attention_param_count


def sigmoid(v):
    return 1 / (1 + np.exp(-v))


def test_zero_initialised_gate_is_plain_sigmoid(rng):
    gate = AttentionGate(16, rng)
    x = rng.normal(0, 3, size=(2, 16, 8, 8)).astype(np.float32)
    np.testing.assert_allclose(apply_attention(gate, Tensor(x)).data, sigmoid(x.astype(np.float64)), atol=1e-6)


def test_zero_input_gives_one_half(rng):
    gate = AttentionGate(8, rng)
    gate.attdeconv2.weight.data[:] = 1.0
    y = gate(Tensor(np.zeros((1, 8, 4, 4))))
    assert np.all(y.data == 0.5)


def test_scalar_probe_mask_one():
    x = Tensor(np.ones((1, 8, 4, 4)))
    y = ad.sigmoid(x + x * Tensor(np.ones((1, 8, 4, 4))))
    assert y.data[0, 0, 0, 0] == pytest.approx(0.880797, abs=1e-6)


def test_layer_shapes(rng):
    gate = AttentionGate(64, rng)
    x = Tensor(rng.normal(size=(1, 64, 16, 16)))
    h1 = gate.attconv1(x)
    h2 = gate.attconv2(h1)
    h3 = gate.attdeconv1(h2)
    h4 = gate.attdeconv2(h3)
    assert [h.shape[1:] for h in (h1, h2, h3, h4)] == [(16, 8, 8), (8, 4, 4), (16, 8, 8), (64, 16, 16)]


def test_indivisible_spatial_size_rejected(rng):
    gate = AttentionGate(8, rng)
    with pytest.raises(ShapeError, match="divisible by 4"):
        gate(Tensor(np.zeros((1, 8, 6, 8))))


def test_channels_must_divide_by_eight():
    with pytest.raises(ValueError):
        AttentionGate(12)
    with pytest.raises(ValueError):
        attention_param_count(12)


def test_param_count_closed_form_512():
    assert attention_param_count(512) == 1_844_032


def test_param_count_enumeration_8():
    gate = AttentionGate(8)
    assert attention_param_count(8) == sum(p.size for p in gate.parameters()) == gate.param_count()


def test_param_count_quadratic():
    assert attention_param_count(2048) / attention_param_count(1024) == pytest.approx(4, rel=1e-3)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 20))
def test_output_strictly_inside_unit_interval(seed, scale):
    rng = np.random.default_rng(seed)
    gate = AttentionGate(8, rng)
    gate.attdeconv2.weight.data[:] = rng.normal(0, 0.5, gate.attdeconv2.weight.shape)
    with ad.precision(np.float64):
        x = Tensor(rng.normal(0, scale, (1, 8, 4, 4)), dtype=np.float64)
        pre = (x + x * gate.mask(x)).data
        y = gate(x).data
    # float64 sigmoid rounds to exactly 0 or 1 once |pre-activation| passes ~36.7
    representable = np.abs(pre) < 36
    assert np.all((y > 0) & (y < 1) | ~representable)
    assert np.all((y >= 0) & (y <= 1))


@settings(max_examples=50, deadline=None)
@given(x2=st.floats(0, 5), dx=st.floats(1e-3, 5), c=st.floats(0, 3))
def test_monotone_under_frozen_mask(x2, dx, c):
    x1 = x2 + dx
    gate_out = lambda v: ad.sigmoid(Tensor([v]) + Tensor([v]) * Tensor([c])).data[0]  # noqa: E731
    with ad.precision(np.float64):
        assert gate_out(x1) > gate_out(x2)


def test_disabled_gate_is_sigmoid(rng):
    gate = AttentionGate(8, rng)
    gate.attdeconv2.weight.data[:] = 1.0
    gate.enabled = False
    x = rng.normal(size=(1, 8, 4, 4))
    np.testing.assert_allclose(gate(Tensor(x)).data, sigmoid(x), atol=1e-6)
