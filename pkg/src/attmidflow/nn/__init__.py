"""Layers, extractor blocks and the attention gate."""

from .attention import AttentionGate, apply_attention, attention_param_count
from .blocks import (
    Block,
    BlockKind,
    BlockSpec,
    CardinalityBlock,
    InceptionBlock,
    PlainBlock,
    ResidualBlock,
    apply_block,
    build_block,
)
from .module import Conv2d, ConvTranspose2d, Linear, Module, Parameter

__all__ = [
    "AttentionGate", "apply_attention", "attention_param_count",
    "Block", "BlockKind", "BlockSpec", "PlainBlock", "ResidualBlock", "InceptionBlock",
    "CardinalityBlock", "apply_block", "build_block",
    "Module", "Parameter", "Conv2d", "ConvTranspose2d", "Linear",
]
