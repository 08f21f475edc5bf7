from dataclasses import replace

import numpy as np
import pytest

from attmidflow import autodiff as ad
from attmidflow.autodiff import Tensor
from attmidflow.errors import CheckpointError, ShapeError
from attmidflow.models import (
    ZOO,
    FlowNet,
    ModelSpec,
    build_model,
    layer_report,
    load_checkpoint,
    load_model,
    model_spec,
    param_count,
    save_checkpoint,
)
from attmidflow.nn import Module, attention_param_count

PAPER_FLOWNETS_PARAMS = 38.5e6


@pytest.fixture(scope="module")
def mid_full():
    return build_model("MidFlowNetRes")


def test_zoo_has_every_variant():
    bases = ["FlowNetRes", "FlowNetInc", "FlowNeXt32", "FlowNeXt64"]
    expected = {"FlowNetS"} | {p + b for p in ("", "Att", "Mid", "AttMid") for b in bases}
    assert set(ZOO) == expected


def test_midway_concat_channels(mid_full):
    assert mid_full.concat_channels == {
        "concat": 2432, "concat5": 1026, "concat6": 2050, "concat3": 514,
        "concat2": 258, "concat1": 66, "concat0": 34,
    }


def test_midway_concat_channels_in_executed_graph(mid_full):
    rows = {r.name: r for r in layer_report(mid_full, (64, 64))}
    got = {n: rows[n].out_shape[1] for n in ("concat", "concat5", "concat6", "concat3", "concat2", "concat1", "concat0")}
    assert got == mid_full.concat_channels
    assert rows["pr0"].out_shape == (1, 2, 64, 64)


def test_scale_arithmetic_384x512():
    model = build_model("AttMidFlowNeXt32", width_divisor=16)
    with ad.no_grad():
        pyr = model(Tensor(np.zeros((1, 6, 384, 512), np.float32)))
    shapes = {k: v.shape[2:] for k, v in pyr}
    assert shapes == {0: (384, 512), 1: (192, 256), 2: (96, 128), 3: (48, 64), 4: (24, 32), 5: (12, 16), 6: (6, 8)}


def test_flownets_baseline_pyramid_stops_at_quarter_scale():
    model = build_model("FlowNetS", width_divisor=8)
    with ad.no_grad():
        pyr = model(Tensor(np.zeros((2, 6, 64, 128), np.float32)))
    assert sorted(k for k, _ in pyr) == [2, 3, 4, 5, 6]
    assert pyr.full_resolution().shape == (2, 2, 64, 128)


def test_flownets_param_count_matches_reference():
    n = param_count(model_spec("FlowNetS"))
    assert abs(n - PAPER_FLOWNETS_PARAMS) / PAPER_FLOWNETS_PARAMS < 0.05


@pytest.mark.parametrize("name", ["AttFlowNetRes", "AttMidFlowNeXt64"])
def test_attention_params_are_base_plus_gates(name):
    base_spec = model_spec(name.replace("Att", "", 1), 8)
    att = build_model(name, width_divisor=8)
    base = build_model(base_spec)
    gates = sum(attention_param_count(g.channels) for g in att.gates.values())
    # Att variants also carry the two full-resolution stages the base lacks
    extended = build_model(replace(base_spec, full_resolution_output=True))
    extra = sum(getattr(extended, n).param_count() for n in ("deconv1", "up2", "pr1", "deconv0", "up1", "pr0"))
    assert extended.param_count() == base.param_count() + (0 if base_spec.use_midway else extra)
    assert att.param_count() == extended.param_count() + gates
    assert att.param_count() == sum(p.size for p in att.parameters())


def test_zero_layer_stub_has_no_params():
    assert Module().param_count() == 0


def test_attmid_with_gates_disabled_matches_mid_graph():
    mid = layer_report(model_spec("MidFlowNetInc", 8))
    attmid = build_model("AttMidFlowNetInc", width_divisor=8)
    attmid.set_attention(False)
    rows = layer_report(attmid)
    sig = [r for r in rows if r.kind == "sigmoid"]
    assert [r.name for r in sig] == ["sigmoid4", "sigmoid3", "sigmoid2", "sigmoid1", "sigmoid0"]
    assert all(r.params == 0 for r in sig)
    rest = [r for r in rows if r.kind != "sigmoid"]
    assert [(r.name, r.out_shape, r.params) for r in rest] == [(r.name, r.out_shape, r.params) for r in mid]


def test_report_rows_follow_execution_and_sum_to_count():
    model = build_model("AttFlowNeXt32", width_divisor=8)
    rows = layer_report(model)
    assert rows[0].name == "block1" and rows[-1].name == "pr0"
    assert sum(r.params for r in rows) == model.param_count()


@pytest.mark.parametrize("name", sorted(ZOO))
def test_every_variant_downsamples_six_times_and_is_finite(name):
    model = build_model(name, width_divisor=8)
    rows = {r.name: r for r in layer_report(model, (64, 128))}
    assert rows["block6_1"].out_shape[2:] == (1, 2)
    with ad.no_grad():
        pyr = model(Tensor(np.random.default_rng(0).uniform(-0.5, 0.5, (1, 6, 64, 128))))
    assert all(np.isfinite(t.data).all() and t.shape[1] == 2 for _, t in pyr)
    if ZOO[name].full_resolution_output:
        assert pyr.finest.shape[2:] == (64, 128)


def test_intensity_shift_keeps_shapes():
    model = build_model("MidFlowNeXt32", width_divisor=8)
    x = np.random.default_rng(0).uniform(-0.5, 0.5, (1, 6, 64, 64))
    with ad.no_grad():
        a = model(Tensor(x))
        b = model(Tensor(x + 0.3))
    assert [t.shape for _, t in a] == [t.shape for _, t in b]


def test_indivisible_input_rejected():
    model = build_model("FlowNetS", width_divisor=8)
    with pytest.raises(ShapeError, match="multiples of 64"):
        model(Tensor(np.zeros((1, 6, 64, 96))))


def test_attention_requires_full_resolution():
    with pytest.raises(ValueError):
        ModelSpec(use_attention=True, full_resolution_output=False)


def test_seeded_construction_is_deterministic():
    a = build_model("AttFlowNetRes", width_divisor=8, seed=3)
    b = build_model("AttFlowNetRes", width_divisor=8, seed=3)
    c = build_model("AttFlowNetRes", width_divisor=8, seed=4)
    sa, sb, sc = a.state_dict(), b.state_dict(), c.state_dict()
    assert all(np.array_equal(sa[k], sb[k]) for k in sa)
    assert any(not np.array_equal(sa[k], sc[k]) for k in sa)


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_round_trip(tmp_path):
    model = build_model("AttMidFlowNeXt32", width_divisor=8, seed=2)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, model, {"note": "x"})
    loaded = load_model(path)
    assert loaded.spec == model.spec
    for k, v in model.state_dict().items():
        assert v.tobytes() == loaded.state_dict()[k].tobytes()
    assert path.read_bytes()[:8] == b"AMFLOWCK"


def test_checkpoint_rejects_other_architecture(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, build_model("FlowNetS", width_divisor=8))
    with pytest.raises(CheckpointError, match="digest|architecture"):
        load_checkpoint(path, model_spec("FlowNetRes", 8))


def test_checkpoint_rejects_tampered_digest(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, build_model("FlowNetS", width_divisor=8))
    raw = bytearray(path.read_bytes())
    raw[12] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


@pytest.mark.parametrize("cut", [4, 30, 200, -3])
def test_checkpoint_truncation_reported(tmp_path, cut):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, build_model("FlowNetS", width_divisor=8))
    raw = path.read_bytes()
    path.write_bytes(raw[:cut])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "m.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\0" * 64)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_flownet_class_exposed():
    assert isinstance(build_model("FlowNetS", width_divisor=8), FlowNet)
