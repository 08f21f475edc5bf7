"""Endpoint error, the multi-scale training loss and classification accuracy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError

DEFAULT_LOSS_WEIGHTS = (0.0025, 0.005, 0.01, 0.02, 0.08, 0.16, 0.32)


@dataclass(frozen=True)
class LossWeights:
    """One weight per pyramid level, ``w[k]`` for scale ``1 / 2**k``."""

    w: tuple[float, ...] = DEFAULT_LOSS_WEIGHTS

    def __post_init__(self):
        w = tuple(float(v) for v in self.w)
        if len(w) != 7:
            raise ValueError(f"need 7 level weights (levels 0..6), got {len(w)}")
        if any(v < 0 for v in w) or not any(v > 0 for v in w):
            raise ValueError(f"weights must be non-negative with at least one positive, got {w}")
        object.__setattr__(self, "w", w)

    def __getitem__(self, level: int) -> float:
        return self.w[level]

    @classmethod
    def only(cls, level: int) -> "LossWeights":
        w = [0.0] * 7
        w[level] = 1.0
        return cls(tuple(w))


def epe(pred, gt, axis: int = -1) -> float:
    """Mean Euclidean distance between flow vectors; components lie on ``axis``."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"epe: prediction {pred.shape} and ground truth {gt.shape} differ")
    # hypot avoids the underflow of squaring tiny differences
    return float(np.hypot.reduce(pred - gt, axis=axis).mean())


def downsample_flow(gt: np.ndarray, level: int) -> np.ndarray:
    """Average-pool a ``(B, 2, H, W)`` flow by ``2**level``; values stay in input pixels."""
    if level == 0:
        return gt
    f = 2 ** level
    B, C, H, W = gt.shape
    if H % f or W % f:
        raise ShapeError(f"flow of size {H}x{W} cannot be pooled by {f}")
    return gt.reshape(B, C, H // f, f, W // f, f).mean(axis=(3, 5))


def epe_loss(pred: Tensor, gt) -> Tensor:
    """Differentiable endpoint error of ``(B, 2, h, w)`` tensors."""
    gt = ad.as_tensor(gt, dtype=pred.dtype)
    return ad.flow_norm(pred - gt).mean()


def multiscale_loss(pyramid, gt, weights: LossWeights | None = None) -> Tensor:
    """``sum_k w_k * EPE(pr_k, pool(gt, 2**k))`` over the levels the pyramid has.

    ``pyramid`` is a :class:`FlowPyramid` or a ``{level: Tensor}`` mapping and
    ``gt`` a full-resolution ``(B, 2, H, W)`` array.
    """
    weights = weights if weights is not None else LossWeights()
    gt = np.asarray(gt.data if isinstance(gt, Tensor) else gt)
    levels = pyramid.levels if hasattr(pyramid, "levels") else dict(pyramid)
    total = None
    for level, pred in sorted(levels.items()):
        w = weights[level]
        if w == 0:
            continue
        target = downsample_flow(gt, level)
        if pred.shape != target.shape:
            raise ShapeError(f"level {level}: prediction {pred.shape} vs pooled ground truth {target.shape}")
        term = epe_loss(pred, target) * w
        total = term if total is None else total + term
    if total is None:
        any_pred = next(iter(levels.values()))
        return Tensor(np.zeros((), dtype=any_pred.dtype))
    return total


def accuracy(predicted: Sequence[int], truth: Sequence[int]) -> float:
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.size == 0 or truth.size == 0:
        raise ValueError("accuracy of an empty label list is undefined")
    if predicted.shape != truth.shape:
        raise ShapeError(f"accuracy: {predicted.shape[0]} predictions vs {truth.shape[0]} labels")
    return float((predicted == truth).mean())
