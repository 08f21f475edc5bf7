"""Encoder building blocks: plain convolutions and the three stronger extractor families.

Block shapes (the adaptation of each classifier block to a flow encoder):

* ``plain``: one ``k x k`` convolution with the stride, then leaky ReLU.
* ``residual``: two 3x3 convolutions (stride on the first) added to a shortcut
  that is the identity when shapes match and a strided 1x1 projection otherwise.
* ``inception``: four branches of ``out_ch / 4`` channels each, 1x1 /
  1x1 -> 3x3 / 1x1 -> 5x5 / 3x3 avg-pool -> 1x1, every branch strided, concatenated.
* ``cardinality``: 1x1 reduce to ``4 * width`` channels, grouped 3x3 with 4 groups,
  1x1 expand, added to the same shortcut as ``residual``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import ShapeError
from .module import Conv2d, Module

LEAKY_SLOPE = 0.1
CARDINALITY = 4


class BlockKind(str, enum.Enum):
    PLAIN = "plain"
    RESIDUAL = "residual"
    INCEPTION = "inception"
    CARDINALITY = "cardinality"


@dataclass(frozen=True)
class BlockSpec:
    kind: BlockKind
    in_ch: int
    out_ch: int
    stride: int = 1
    cardinality_width: int = 32
    kernel: int = 3
    scale_divisor: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", BlockKind(self.kind))
        if self.in_ch <= 0 or self.out_ch <= 0:
            raise ValueError(f"channel counts must be positive, got {self.in_ch}->{self.out_ch}")
        if self.stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {self.stride}")
        if self.kind is BlockKind.CARDINALITY:
            if self.cardinality_width not in (32, 64):
                raise ValueError(f"cardinality width must be 32 or 64, got {self.cardinality_width}")
            if self.cardinality_width % self.scale_divisor:
                raise ValueError("scale_divisor must divide the cardinality width")
        if self.kind is BlockKind.INCEPTION and self.out_ch % 4:
            raise ValueError(f"inception blocks need out_ch divisible by 4, got {self.out_ch}")

    @property
    def group_width(self) -> int:
        return self.cardinality_width // self.scale_divisor


def _act(x: Tensor) -> Tensor:
    return ad.leaky_relu(x, LEAKY_SLOPE)


class Block(Module):
    spec: BlockSpec

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.spec.in_ch:
            raise ShapeError(
                f"{self.spec.kind.value} block expects {self.spec.in_ch} input channels, got input {x.shape}"
            )
        return self.forward(x)


class PlainBlock(Block):
    def __init__(self, spec: BlockSpec, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        self.conv = Conv2d(spec.in_ch, spec.out_ch, spec.kernel, spec.stride, rng=rng)

    def forward(self, x):
        return _act(self.conv(x))


class Shortcut(Module):
    def __init__(self, in_ch: int, out_ch: int, stride: int, rng: np.random.Generator):
        super().__init__()
        self.identity = in_ch == out_ch and stride == 1
        if not self.identity:
            self.proj = Conv2d(in_ch, out_ch, 1, stride, rng=rng, gain=1.0)

    def forward(self, x):
        return x if self.identity else self.proj(x)


class ResidualBlock(Block):
    def __init__(self, spec: BlockSpec, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        self.conv1 = Conv2d(spec.in_ch, spec.out_ch, 3, spec.stride, rng=rng)
        self.conv2 = Conv2d(spec.out_ch, spec.out_ch, 3, 1, rng=rng, gain=1.0)
        self.shortcut = Shortcut(spec.in_ch, spec.out_ch, spec.stride, rng)

    def forward(self, x):
        return _act(self.conv2(_act(self.conv1(x))) + self.shortcut(x))


class InceptionBlock(Block):
    def __init__(self, spec: BlockSpec, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        b = spec.out_ch // 4
        s = spec.stride
        self.b1 = Conv2d(spec.in_ch, b, 1, s, rng=rng)
        self.b3_reduce = Conv2d(spec.in_ch, b, 1, 1, rng=rng)
        self.b3 = Conv2d(b, b, 3, s, rng=rng)
        self.b5_reduce = Conv2d(spec.in_ch, b, 1, 1, rng=rng)
        self.b5 = Conv2d(b, b, 5, s, rng=rng)
        self.pool_proj = Conv2d(spec.in_ch, b, 1, 1, rng=rng)

    def branches(self, x: Tensor) -> list[Tensor]:
        s = self.spec.stride
        return [
            _act(self.b1(x)),
            _act(self.b3(_act(self.b3_reduce(x)))),
            _act(self.b5(_act(self.b5_reduce(x)))),
            _act(self.pool_proj(ad.avg_pool2d(x, 3, s, 1))),
        ]

    def forward(self, x):
        return ad.concat_channels(self.branches(x))


class CardinalityBlock(Block):
    def __init__(self, spec: BlockSpec, rng: np.random.Generator):
        super().__init__()
        self.spec = spec
        inner = CARDINALITY * spec.group_width
        self.reduce = Conv2d(spec.in_ch, inner, 1, 1, rng=rng)
        self.grouped = Conv2d(inner, inner, 3, spec.stride, groups=CARDINALITY, rng=rng)
        self.expand = Conv2d(inner, spec.out_ch, 1, 1, rng=rng, gain=1.0)
        self.shortcut = Shortcut(spec.in_ch, spec.out_ch, spec.stride, rng)

    def forward(self, x):
        h = _act(self.grouped(_act(self.reduce(x))))
        return _act(self.expand(h) + self.shortcut(x))


_BLOCKS = {
    BlockKind.PLAIN: PlainBlock,
    BlockKind.RESIDUAL: ResidualBlock,
    BlockKind.INCEPTION: InceptionBlock,
    BlockKind.CARDINALITY: CardinalityBlock,
}


def build_block(spec: BlockSpec, rng: np.random.Generator | None = None) -> Block:
    rng = rng if rng is not None else np.random.default_rng(0)
    return _BLOCKS[spec.kind](spec, rng)


def apply_block(block: Block, x: Tensor) -> Tensor:
    return block(x)
