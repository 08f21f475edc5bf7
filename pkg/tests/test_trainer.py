import io
import json

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from attmidflow import autodiff as ad
from attmidflow.data import collate, dataset, generate, translation_scene
from attmidflow.errors import TrainingDiverged
from attmidflow.models import build_model, load_model
from attmidflow.metrics import epe_loss
from attmidflow.nn import Conv2d, Module, Parameter
from attmidflow.train import (
    SGD,
    Adam,
    TrainConfig,
    batch_indices,
    bench,
    evaluate,
    make_optimizer,
    train,
    zero_flow_epe,
)


@pytest.fixture(scope="module")
def pairs():
    return dataset(0, 16, profile="translation")


def micro(seed=0, dtype=np.float32):
    with ad.precision(dtype):
        return build_model("FlowNetS", width_divisor=8, seed=seed)


def test_tiny_learning_rate_leaves_parameters(pairs):
    model = micro()
    before = {k: v.copy() for k, v in model.state_dict().items()}
    train(model, pairs, TrainConfig(iterations=1, batch_size=2, learning_rate=1e-30))
    for k, v in model.state_dict().items():
        np.testing.assert_allclose(v, before[k], rtol=0, atol=1e-25)


def test_adam_scalar_oracle():
    p = Parameter(np.array([1.0]))
    opt = Adam([p], lr=0.1, betas=(0.9, 0.999), eps=1e-8)
    m = v = 0.0
    x = 1.0
    for t in range(1, 6):
        g = 2 * (x - 3)
        p.grad = np.array([g], dtype=p.dtype)
        opt.step()
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        x -= 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert p.data[0] == pytest.approx(x, rel=1e-6)


def test_sgd_momentum_oracle():
    p = Parameter(np.array([2.0]))
    opt = SGD([p], lr=0.5, momentum=0.9)
    p.grad = np.array([1.0], dtype=p.dtype)
    opt.step()
    opt.step()
    assert p.data[0] == pytest.approx(2.0 - 0.5 * 1.0 - 0.5 * 1.9)


def test_make_optimizer_rejects_unknown():
    with pytest.raises(ValueError):
        make_optimizer("rmsprop", [], 0.1)


def test_config_validation_and_schedule(tmp_path):
    with pytest.raises(ValueError):
        TrainConfig(iterations=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    cfg = TrainConfig(learning_rate=1.0, lr_schedule="halve-every-n", lr_halve_every=10)
    assert [cfg.lr_at(i) for i in (0, 9, 10, 25)] == [1.0, 1.0, 0.5, 0.25]
    f = tmp_path / "c.toml"
    f.write_text('iterations = 7\noptimizer = "sgd-momentum"\nloss_weights = [1, 0, 0, 0, 0, 0, 0]\n')
    loaded = TrainConfig.from_file(f)
    assert loaded.iterations == 7 and loaded.optimizer == "sgd-momentum" and loaded.loss_weights[0] == 1.0
    f.write_text("bogus = 1\n")
    with pytest.raises(ValueError, match="bogus"):
        TrainConfig.from_file(f)


def test_batches_cover_each_epoch_once():
    seen = [i for it in range(4) for i in batch_indices(10, 5, 3, it)]
    assert sorted(seen[:10]) == list(range(10)) and sorted(seen[10:]) == list(range(10))
    assert batch_indices(10, 5, 3, 1) == batch_indices(10, 5, 3, 1)


def test_log_records(pairs):
    buf = io.StringIO()
    report = train(micro(), pairs, TrainConfig(iterations=3, batch_size=2, learning_rate=1e-3), log_file=buf)
    recs = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert [r["iteration"] for r in recs] == [1, 2, 3]
    assert set(recs[0]) == {"iteration", "loss", "lr", "wall_clock"}
    assert [r["loss"] for r in recs] == report.losses


def test_resume_reproduces_losses_bit_exact(pairs, tmp_path):
    cfg = TrainConfig(iterations=6, batch_size=2, learning_rate=1e-3, checkpoint_every=3, precision="float64",
                      flip_prob=0.5, jitter=0.1)
    with threadpool_limits(1):
        full = train(micro(dtype=np.float64), pairs, cfg, checkpoint_dir=tmp_path)
        resumed_model = micro(seed=99, dtype=np.float64)
        resumed = train(resumed_model, pairs, cfg, resume_from=tmp_path / "iter_000003.ckpt")
    assert resumed.start_iteration == 3
    assert np.array(resumed.losses).tobytes() == np.array(full.losses[3:]).tobytes()


def test_checkpoint_evaluate_matches_in_memory(pairs, tmp_path):
    model = micro()
    cfg = TrainConfig(iterations=2, batch_size=2, learning_rate=1e-3, checkpoint_every=2)
    train(model, pairs, cfg, checkpoint_dir=tmp_path)
    assert evaluate(load_model(tmp_path / "iter_000002.ckpt"), pairs[:4]) == evaluate(model, pairs[:4])


def test_nan_loss_aborts_with_context(pairs):
    def bad_loss(pyr, y):
        return pyr.finest.sum() * float("nan")

    with pytest.raises(TrainingDiverged) as info:
        train(micro(), pairs, TrainConfig(iterations=3, batch_size=2), loss_fn=bad_loss)
    assert info.value.iteration == 1 and len(info.value.indices) == 2


def test_oracle_model_evaluates_to_zero(pairs):
    assert evaluate(lambda batch: np.stack([p.gt for p in batch]), pairs) == 0.0


def test_zero_flow_epe_is_mean_magnitude(pairs):
    mags = [np.hypot(p.gt[..., 0], p.gt[..., 1]).mean() for p in pairs]
    assert zero_flow_epe(pairs) == pytest.approx(np.mean(mags))
    assert evaluate(lambda batch: np.zeros((len(batch), 64, 64, 2)), pairs) == pytest.approx(zero_flow_epe(pairs))


def test_bench_reports_param_count():
    model = micro()
    r = bench(model, (64, 64), repeats=3)
    assert r.param_count == model.param_count() and len(r.times) == 3 and r.median_seconds > 0
    with pytest.raises(ValueError):
        bench(model, (64, 64), repeats=2)


class TwoConv(Module):
    """Two 7x7 convolutions mapping a frame pair straight to full-resolution flow."""

    def __init__(self, seed=0, width=16):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.conv1 = Conv2d(6, width, 7, rng=rng)
        self.conv2 = Conv2d(width, 2, 7, rng=rng, gain=1.0)

    def forward(self, x):
        return {0: self.conv2(ad.leaky_relu(self.conv1(x), 0.1))}


def constant_translations(n, seed, texture_seed=7, radius=2.0):
    """One fixed texture shifted by a uniform random vector in a disc per sample."""
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.random(n))
    a = rng.uniform(0, 2 * np.pi, n)
    return [generate(translation_scene((ri * np.cos(ai), ri * np.sin(ai)), (64, 64), texture_seed))
            for ri, ai in zip(r, a)]


def probe_loss(pred, y):
    return epe_loss(pred[0], y)


def probe_flows(model):
    def run(batch):
        x, _ = collate(batch)
        with ad.no_grad():
            return np.moveaxis(model(ad.Tensor(x))[0].data, 1, -1)
    return run


@pytest.mark.slow
def test_two_conv_probe_learns_constant_translation():
    train_set, eval_set = constant_translations(256, 1), constant_translations(32, 2)
    model = TwoConv()
    report = train(model, train_set, TrainConfig(iterations=2000, batch_size=4, learning_rate=3e-3),
                   loss_fn=probe_loss)
    err = evaluate(probe_flows(model), eval_set)
    assert err < 0.5 < zero_flow_epe(eval_set)
    assert len(report.losses) == 2000


@pytest.mark.slow
def test_probe_loss_moving_average_never_increases():
    data = constant_translations(8, 3)
    model = TwoConv()
    report = train(model, data, TrainConfig(iterations=300, batch_size=8, learning_rate=1e-3),
                   loss_fn=probe_loss)
    avg = np.convolve(report.losses, np.ones(50) / 50, mode="valid")
    assert np.all(np.diff(avg) <= 0)
    assert avg[-1] < 0.5 * avg[0]
