"""Segment-sampled gesture classification over stacked flow fields.

A clip of ``T`` flow frames is cut into ``K`` equal segments; one snippet of
``L`` consecutive flow frames is taken from each (random position while
training, centred at test time). The snippet's ``u``/``v`` planes are
interleaved into ``2L`` input channels. A small convolutional network scores
every snippet and the clip score is the mean over snippets.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..data.dataset import images_to_input
from ..data.synth import SamplePair
from ..metrics import accuracy
from ..models.flownet import FlowNet
from ..nn import Conv2d, Linear, Module
from ..train.optim import Adam
from ..train.trainer import batch_indices, batch_seed, predict
from .clips import CLASSES, GestureClip

MODES = ("train-random", "test-center")


@dataclass(frozen=True)
class SegmentPlan:
    segments: int = 3
    snippet_len: int = 5
    mode: str = "test-center"

    def __post_init__(self):
        if self.segments < 1 or self.snippet_len < 1:
            raise ValueError(f"segments and snippet_len must be >= 1, got {self.segments}, {self.snippet_len}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def min_length(self) -> int:
        return self.segments * self.snippet_len

    @property
    def channels(self) -> int:
        return 2 * self.snippet_len

    def with_mode(self, mode: str) -> "SegmentPlan":
        return SegmentPlan(self.segments, self.snippet_len, mode)


def segment_bounds(T: int, K: int) -> list[tuple[int, int]]:
    return [(k * T // K, (k + 1) * T // K) for k in range(K)]


def snippet_starts(T: int, plan: SegmentPlan, rng: np.random.Generator | None = None) -> list[int]:
    if T < plan.min_length:
        raise ValueError(
            f"clip has {T} flow frames; {plan.segments} segments of {plan.snippet_len} need at least {plan.min_length}"
        )
    L = plan.snippet_len
    starts = []
    for lo, hi in segment_bounds(T, plan.segments):
        if plan.mode == "test-center":
            starts.append(lo + (hi - lo - L) // 2)
        else:
            rng = rng if rng is not None else np.random.default_rng()
            starts.append(int(rng.integers(lo, hi - L + 1)))
    return starts


def stack_snippet(flows: np.ndarray, start: int, length: int) -> np.ndarray:
    """``(L, H, W, 2)`` flow frames -> ``(2L, H, W)`` with channels ``u0, v0, u1, v1, ...``."""
    chunk = flows[start:start + length]
    L, H, W, _ = chunk.shape
    return np.ascontiguousarray(chunk.transpose(0, 3, 1, 2).reshape(2 * L, H, W))


def sample_snippets(clip: GestureClip, plan: SegmentPlan, rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """``K`` arrays of shape ``(2L, H, W)``."""
    return [stack_snippet(clip.flows, s, plan.snippet_len) for s in snippet_starts(clip.length, plan, rng)]


def consensus(scores: np.ndarray) -> np.ndarray:
    """Mean of the ``(K, C)`` snippet score vectors."""
    return np.asarray(scores, dtype=np.float64).mean(axis=0)


# ---------------------------------------------------------------------------
# network


class GestureNet(Module):
    """Four stride-2 conv blocks, global average pooling and a linear head."""

    def __init__(self, in_ch: int, n_classes: int = len(CLASSES), widths=(16, 32, 32, 64), seed: int = 0):
        super().__init__()
        rng = np.random.default_rng(seed)
        self.in_ch = in_ch
        chans = (in_ch,) + tuple(widths)
        for i in range(4):
            setattr(self, f"conv{i + 1}", Conv2d(chans[i], chans[i + 1], 3, stride=2, rng=rng))
        self.head = Linear(chans[-1], n_classes, rng)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ValueError(f"GestureNet expects (N, {self.in_ch}, H, W), got {x.shape}")
        for i in range(4):
            x = ad.leaky_relu(getattr(self, f"conv{i + 1}")(x), 0.1)
        return self.head(ad.mean(x, axis=(2, 3)))


@dataclass
class GestureClassifier:
    net: GestureNet
    plan: SegmentPlan
    cap: float
    widths: tuple = (16, 32, 32, 64)
    seed: int = 0

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(x, np.float64) / self.cap, -1.0, 1.0)

    def snippet_scores(self, snippets: Sequence[np.ndarray]) -> np.ndarray:
        x = self.normalize(np.stack(snippets))
        dtype = self.net.parameters()[0].dtype
        with ad.no_grad():
            return np.asarray(self.net(Tensor(x, dtype=dtype)).data, np.float64)

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        meta = {"plan": asdict(self.plan), "cap": self.cap, "widths": list(self.widths), "seed": self.seed}
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.frombuffer(json.dumps(meta).encode(), np.uint8), **self.net.state_dict())

    @classmethod
    def load(cls, path) -> "GestureClassifier":
        with np.load(path) as z:
            meta = json.loads(bytes(z["__meta__"]).decode())
            state = {k: z[k] for k in z.files if k != "__meta__"}
        plan = SegmentPlan(**meta["plan"])
        net = GestureNet(plan.channels, widths=tuple(meta["widths"]), seed=meta["seed"])
        net.load_state_dict(state)
        return cls(net, plan, float(meta["cap"]), tuple(meta["widths"]), meta["seed"])


def flow_cap(clips: Sequence[GestureClip], percentile: float = 99.9) -> float:
    """``percentile`` of the absolute flow components in ``clips``.

    Inputs are divided by the cap and clipped to [-1, 1]. A high percentile
    rather than the maximum keeps a few outlier vectors in estimated flow
    from squashing the rest of the signal towards zero.
    """
    values = np.concatenate([np.abs(c.flows).ravel() for c in clips])
    cap = float(np.percentile(values, percentile))
    return cap if cap > 0 else 1.0


@dataclass(frozen=True)
class GestureTrainConfig:
    iterations: int = 300
    batch_size: int = 12
    learning_rate: float = 3e-3
    seed: int = 0
    segments: int = 3
    snippet_len: int = 5

    def __post_init__(self):
        if self.iterations < 1 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ValueError(f"invalid gesture training config {self}")

    @property
    def plan(self) -> SegmentPlan:
        return SegmentPlan(self.segments, self.snippet_len, "train-random")


def train_classifier(clips: Sequence[GestureClip], cfg: GestureTrainConfig = GestureTrainConfig(),
                     cap: float | None = None, widths=(16, 32, 32, 64)) -> tuple[GestureClassifier, list[float]]:
    """Train on segment snippets with mean consensus and cross-entropy on the clip score."""
    if not clips:
        raise ValueError("no training clips")
    plan = cfg.plan
    net = GestureNet(plan.channels, widths=widths, seed=cfg.seed)
    clf = GestureClassifier(net, plan.with_mode("test-center"), cap or flow_cap(clips), tuple(widths), cfg.seed)
    optim = Adam(net.parameters(), cfg.learning_rate)
    dtype = net.parameters()[0].dtype
    K = plan.segments
    losses = []
    for it in range(cfg.iterations):
        idx = batch_indices(len(clips), cfg.batch_size, cfg.seed, it)
        rng = np.random.default_rng(batch_seed(cfg.seed, it))
        snippets = [s for i in idx for s in sample_snippets(clips[i], plan, rng)]
        x = Tensor(clf.normalize(np.stack(snippets)), dtype=dtype)
        logits = net(x)
        clip_logits = ad.mean(ad.reshape(logits, (len(idx), K, logits.shape[1])), axis=1)
        loss = ad.cross_entropy(clip_logits, [clips[i].label for i in idx])
        net.zero_grad()
        loss.backward()
        optim.step()
        losses.append(loss.item())
    return clf, losses


def classify(classifier: GestureClassifier, clip: GestureClip, plan: SegmentPlan | None = None) -> tuple[int, np.ndarray]:
    """Class id (lowest index wins ties) and the consensus score vector."""
    plan = plan or classifier.plan
    scores = consensus(classifier.snippet_scores(sample_snippets(clip, plan)))
    return int(np.argmax(scores)), scores


def evaluate_classifier(classifier: GestureClassifier, clips: Sequence[GestureClip]) -> float:
    predicted = [classify(classifier, c)[0] for c in clips]
    return accuracy(predicted, [c.label for c in clips])


# ---------------------------------------------------------------------------
# mean-flow baseline


def mean_flow(clip: GestureClip) -> np.ndarray:
    return clip.flows.reshape(-1, 2).mean(axis=0).astype(np.float64)


def nearest_centroid_fit(clips: Sequence[GestureClip]) -> np.ndarray:
    feats = np.stack([mean_flow(c) for c in clips])
    labels = np.array([c.label for c in clips])
    return np.stack([feats[labels == k].mean(axis=0) for k in range(len(CLASSES))])


def nearest_centroid_predict(centroids: np.ndarray, clip: GestureClip) -> int:
    d = np.linalg.norm(centroids - mean_flow(clip), axis=1)
    return int(np.argmin(d))


# ---------------------------------------------------------------------------
# flow estimation and the end-to-end pipeline


FlowEstimator = Callable[[np.ndarray, np.ndarray], np.ndarray]


def estimate_flows(flow_model, frames: np.ndarray, batch_size: int = 16) -> np.ndarray:
    """Flow for every consecutive pair of ``(N, H, W, 3)`` frames: ``(N - 1, H, W, 2)``.

    ``flow_model`` is a :class:`FlowNet` or a callable ``(frame_a, frame_b) -> (H, W, 2)``.
    """
    frames = np.asarray(frames)
    if len(frames) < 2:
        raise ValueError(f"need at least 2 frames, got {len(frames)}")
    if isinstance(flow_model, FlowNet):
        x = images_to_input(frames[:-1], frames[1:], flow_model.parameters()[0].dtype)
        return np.ascontiguousarray(predict(flow_model, x, batch_size).transpose(0, 2, 3, 1)).astype(np.float32)
    return np.stack([np.asarray(flow_model(a, b), np.float32) for a, b in zip(frames[:-1], frames[1:])])


def clip_with_estimated_flow(flow_model, clip: GestureClip) -> GestureClip:
    if clip.frames is None:
        raise ValueError("clip has no RGB frames")
    return GestureClip(estimate_flows(flow_model, clip.frames), clip.label, clip.fps, clip.frames)


def flow_training_pairs(clips: Sequence[GestureClip]) -> list[SamplePair]:
    """Every consecutive frame pair of every clip with its analytic flow."""
    pairs = []
    for c in clips:
        if c.frames is None:
            raise ValueError("clip has no RGB frames")
        for t in range(c.length):
            pairs.append(SamplePair(c.frames[t], c.frames[t + 1], c.flows[t]))
    return pairs


@dataclass
class PipelineResult:
    label: int
    scores: np.ndarray
    flow_seconds: float
    classify_seconds: float

    @property
    def total_seconds(self) -> float:
        return self.flow_seconds + self.classify_seconds

    @property
    def class_name(self) -> str:
        return CLASSES[self.label]


def pipeline_recognize(flow_model, classifier: GestureClassifier, rgb_frames: np.ndarray,
                       plan: SegmentPlan | None = None) -> PipelineResult:
    """Estimate flow on consecutive frames, then classify; times both stages."""
    plan = plan or classifier.plan
    if len(rgb_frames) < plan.min_length + 1:
        raise ValueError(f"need at least {plan.min_length + 1} frames, got {len(rgb_frames)}")
    t0 = time.perf_counter()
    flows = estimate_flows(flow_model, rgb_frames)
    t1 = time.perf_counter()
    label, scores = classify(classifier, GestureClip(flows, 0), plan)
    t2 = time.perf_counter()
    return PipelineResult(label, scores, t1 - t0, t2 - t1)


def prediction_record(clip_id: str, label: int, scores: np.ndarray) -> str:
    return json.dumps({"clip": clip_id, "label": CLASSES[label], "scores": [float(s) for s in scores]})
