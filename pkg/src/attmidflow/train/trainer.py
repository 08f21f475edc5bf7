"""Deterministic training loop, evaluation and runtime benchmark for flow networks."""

from __future__ import annotations

import json
import logging
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, TextIO

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..data.dataset import Augment, collate
from ..data.synth import SamplePair
from ..errors import ShapeError, TrainingDiverged
from ..metrics import epe, multiscale_loss
from ..models.checkpoint import load_checkpoint, save_checkpoint
from ..models.flownet import FlowNet
from .config import TrainConfig
from .optim import Optimizer, make_optimizer

log = logging.getLogger(__name__)


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    wall_clock: list[float] = field(default_factory=list)
    start_iteration: int = 0
    final_eval_epe: float | None = None
    seconds: float = 0.0

    def records(self) -> list[dict]:
        return [
            {"iteration": self.start_iteration + i + 1, "loss": loss, "lr": lr, "wall_clock": t}
            for i, (loss, lr, t) in enumerate(zip(self.losses, self.lrs, self.wall_clock))
        ]


def batch_seed(seed: int, iteration: int) -> int:
    return int(np.random.SeedSequence([seed, iteration]).generate_state(1, dtype=np.uint32)[0])


def batch_indices(n: int, batch_size: int, seed: int, iteration: int) -> list[int]:
    """Indices of the batch used at ``iteration`` (0-based).

    Samples are consumed in a fresh seeded permutation per epoch, so any
    iteration's batch can be reconstructed without replaying earlier ones.
    """
    out = []
    start = iteration * batch_size
    for pos in range(start, start + batch_size):
        epoch, offset = divmod(pos, n)
        perm = np.random.default_rng([seed, epoch]).permutation(n)
        out.append(int(perm[offset]))
    return out


def _dtype(cfg: TrainConfig):
    return np.float64 if cfg.precision == "float64" else np.float32


def model_dtype(model) -> np.dtype:
    params = model.parameters()
    return params[0].dtype if params else ad.get_default_dtype()


def train(model: FlowNet, data: Sequence[SamplePair], cfg: TrainConfig,
          eval_data: Sequence[SamplePair] | None = None,
          checkpoint_dir=None, log_file: TextIO | None = None,
          resume_from=None, loss_fn: Callable | None = None) -> TrainReport:
    """Train ``model`` in place on ``data`` for ``cfg.iterations`` steps.

    ``resume_from`` names a checkpoint written by an earlier call; training
    continues from its iteration with the saved optimizer state, giving the
    same subsequent losses as an uninterrupted run.
    """
    if not data:
        raise ValueError("training set is empty")
    dtype = model_dtype(model)
    h, w = data[0].gt.shape[:2]
    if h % 64 or w % 64:
        raise ShapeError(f"training canvas {h}x{w} must be a multiple of 64")
    optim = make_optimizer(cfg.optimizer, model.parameters(), cfg.learning_rate,
                           (cfg.beta1, cfg.beta2), cfg.eps, cfg.momentum)
    start = 0
    if resume_from is not None:
        spec, params, extra, meta = load_checkpoint(resume_from, model.spec)
        model.load_state_dict(params)
        optim.load_state_dict(extra)
        start = int(meta["iteration"])
    augment = Augment(cfg.flip_prob, cfg.jitter)
    weights = cfg.weights
    loss_fn = loss_fn or (lambda pyr, y: multiscale_loss(pyr, y, weights))
    report = TrainReport(start_iteration=start)
    t0 = time.perf_counter()
    n = len(data)
    for it in range(start, cfg.iterations):
        idx = batch_indices(n, cfg.batch_size, cfg.seed, it)
        bseed = batch_seed(cfg.seed, it)
        batch = [data[i] for i in idx]
        if augment.flip_prob or augment.jitter:
            rng = np.random.default_rng(bseed)
            batch = [augment(p, rng) for p in batch]
        x, y = collate(batch, dtype)
        lr = cfg.lr_at(it)
        optim.lr = lr
        loss = loss_fn(model(Tensor(x, dtype=dtype)), y)
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingDiverged(it + 1, bseed, idx)
        model.zero_grad()
        loss.backward()
        optim.step()
        elapsed = time.perf_counter() - t0
        report.losses.append(value)
        report.lrs.append(lr)
        report.wall_clock.append(elapsed)
        if log_file is not None:
            log_file.write(json.dumps({"iteration": it + 1, "loss": value, "lr": lr, "wall_clock": elapsed}) + "\n")
        if checkpoint_dir is not None and cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            save_training_state(Path(checkpoint_dir) / f"iter_{it + 1:06d}.ckpt", model, optim, it + 1, cfg)
    report.seconds = time.perf_counter() - t0
    if eval_data:
        report.final_eval_epe = evaluate(model, eval_data)
    return report


def save_training_state(path, model: FlowNet, optim: Optimizer, iteration: int, cfg: TrainConfig) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(path, model, {"iteration": iteration, "train_config": cfg.to_dict()}, optim.state_dict())


def predict(model: FlowNet, x: np.ndarray, batch_size: int = 16) -> np.ndarray:
    """Full-resolution flow ``(B, 2, H, W)`` for a ``(B, 6, H, W)`` input array."""
    dtype = model_dtype(model)
    outs = []
    with ad.no_grad():
        for i in range(0, len(x), batch_size):
            pyr = model(Tensor(x[i:i + batch_size], dtype=dtype))
            outs.append(pyr.full_resolution().data)
    return np.concatenate(outs, axis=0)


def evaluate(model, data: Sequence[SamplePair], batch_size: int = 16) -> float:
    """Mean endpoint error over ``data`` at full input resolution.

    ``model`` may be a :class:`FlowNet` or any callable mapping a list of
    sample pairs to ``(B, H, W, 2)`` flows.
    """
    if not isinstance(model, FlowNet):
        preds = np.asarray(model(list(data)))
        return float(np.mean([epe(p, s.gt) for p, s in zip(preds, data)]))
    dtype = model_dtype(model)
    total, count = 0.0, 0
    for i in range(0, len(data), batch_size):
        chunk = data[i:i + batch_size]
        x, y = collate(chunk, dtype)
        pred = predict(model, x, batch_size)
        for p, g in zip(pred, y):
            total += epe(p, g, axis=0)
            count += 1
    return total / count


def zero_flow_epe(data: Sequence[SamplePair]) -> float:
    """EPE of predicting no motion: the mean displacement magnitude."""
    return float(np.mean([np.hypot(p.gt[..., 0], p.gt[..., 1]).mean() for p in data]))


@dataclass
class BenchResult:
    median_seconds: float
    param_count: int
    times: list[float]


def bench(model: FlowNet, input_shape, repeats: int = 3) -> BenchResult:
    """Median forward-pass wall clock after one warm-up pass."""
    if repeats < 3:
        raise ValueError(f"repeats must be >= 3, got {repeats}")
    shape = tuple(input_shape)
    if len(shape) == 2:
        shape = (1, 6) + shape
    x = Tensor(np.random.default_rng(0).uniform(-0.5, 0.5, shape), dtype=model_dtype(model))
    times = []
    with ad.no_grad():
        model(x)
        for _ in range(repeats):
            t = time.perf_counter()
            model(x)
            times.append(time.perf_counter() - t)
    return BenchResult(statistics.median(times), model.param_count(), times)
