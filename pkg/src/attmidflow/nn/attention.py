"""Contour attention gate: ``y = sigmoid(x + x * A(x))``.

``A`` is a small hourglass: two stride-2 3x3 convolutions (C -> C/4 -> C/8)
followed by two stride-2 4x4 transposed convolutions (C/8 -> C/4 -> C), so
the mask has exactly the shape of ``x`` and the product is elementwise.
The last transposed convolution starts at zero, making ``A(x) = 0`` and the
gate a plain sigmoid until training moves it.
"""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import ShapeError
from .blocks import LEAKY_SLOPE
from .module import Conv2d, ConvTranspose2d, Module


def attention_param_count(channels: int) -> int:
    """Weights plus biases of the mask network for ``channels`` input channels."""
    if channels % 8:
        raise ValueError(f"attention gate needs channels divisible by 8, got {channels}")
    c, q, e = channels, channels // 4, channels // 8
    return 9 * c * q + q + 9 * q * e + e + 16 * e * q + q + 16 * q * c + c


class AttentionGate(Module):
    def __init__(self, channels: int, rng: np.random.Generator | None = None):
        super().__init__()
        if channels % 8:
            raise ValueError(f"attention gate needs channels divisible by 8, got {channels}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.channels = channels
        self.enabled = True
        q, e = channels // 4, channels // 8
        self.attconv1 = Conv2d(channels, q, 3, 2, padding=1, rng=rng)
        self.attconv2 = Conv2d(q, e, 3, 2, padding=1, rng=rng)
        self.attdeconv1 = ConvTranspose2d(e, q, 4, 2, 1, rng=rng)
        self.attdeconv2 = ConvTranspose2d(q, channels, 4, 2, 1, zero_init=True)

    def mask(self, x: Tensor) -> Tensor:
        h = ad.leaky_relu(self.attconv1(x), LEAKY_SLOPE)
        h = ad.leaky_relu(self.attconv2(h), LEAKY_SLOPE)
        h = ad.leaky_relu(self.attdeconv1(h), LEAKY_SLOPE)
        return self.attdeconv2(h)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeError(f"attention gate built for {self.channels} channels, got input {x.shape}")
        H, W = x.shape[2], x.shape[3]
        if H % 4 or W % 4:
            raise ShapeError(
                f"attention gate needs height and width divisible by 4 (two stride-2 stages), got {H}x{W}"
            )
        if not self.enabled:
            return ad.sigmoid(x)
        return ad.sigmoid(x + x * self.mask(x))


def apply_attention(gate: AttentionGate, x: Tensor) -> Tensor:
    return gate(x)
