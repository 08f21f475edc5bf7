"""FlowNetS-family encoder-decoder networks.

One :class:`FlowNet` class covers the whole zoo. A :class:`ModelSpec` picks
the encoder block family and switches the attention gates, the midway
decoder and the full-resolution refinement stages on or off.

Midway decoder, levels named by their scale ``1/2**level``::

    concat  = up(block6_1) | up(block5_1) | block4_1 | pool(block3_1) | pool(block2)   1/16
    pr4     <- concat
    concat5 = block5_1 | deconv4(concat) | down4(pr4)       -> pr5     1/32
    concat6 = block6_1 | deconv5(concat5) | down5(pr5)      -> pr6     1/64
    concat3 = block3_1 | deconv3(concat) | up4(pr4)         -> pr3     1/8
    concat2 = block2   | deconv2(concat3) | up3(pr3)        -> pr2     1/4
    concat1 = deconv1(concat2) | up2(pr2)                   -> pr1     1/2
    concat0 = deconv0(concat1) | up1(pr1)                   -> pr0     1/1

``deconv4``, ``deconv5``, ``down4`` and ``down5`` feed coarser levels, so they
are stride-2 4x4 convolutions rather than transposed ones.

Attention gates wrap the feature part (everything except the 2-channel
upsampled flow) of each decoder map at levels 4 and finer; the gated map
feeds both the prediction head and the next stage. Levels 5 and 6 stay
ungated because at the smallest legal input (64x64) they are 2x2 and 1x1,
too small for the gate's two stride-2 stages.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import asdict, dataclass, replace
from typing import NamedTuple

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..errors import ShapeError
from ..nn import AttentionGate, BlockKind, BlockSpec, Conv2d, ConvTranspose2d, Module, build_block
from ..nn.blocks import LEAKY_SLOPE

ENCODER_NAMES = ("block1", "block2", "block3", "block3_1", "block4", "block4_1",
                 "block5", "block5_1", "block6", "block6_1")
ENCODER_CHANNELS = (64, 128, 256, 256, 512, 512, 512, 512, 1024, 1024)
ENCODER_STRIDES = (2, 2, 2, 1, 2, 1, 2, 1, 2, 1)
PLAIN_KERNELS = (7, 5, 5, 3, 3, 3, 3, 3, 3, 3)
INPUT_MULTIPLE = 64

# transposed-convolution widths of the FlowNetS-style decoder, by target level
FLOWNETS_DECONV = {5: 512, 4: 256, 3: 128, 2: 64, 1: 32, 0: 16}
# midway decoder widths (see module docstring)
MIDWAY_DECONV = {"deconv4": 512, "deconv5": 1024, "deconv3": 256, "deconv2": 128,
                 "deconv1": 64, "deconv0": 32}
GATED_LEVELS = (4, 3, 2, 1, 0)


class Extractor(str, enum.Enum):
    PLAIN = "plain"
    RESIDUAL = "residual"
    INCEPTION = "inception"
    NEXT32 = "next32"
    NEXT64 = "next64"

    @property
    def block_kind(self) -> BlockKind:
        return {
            Extractor.PLAIN: BlockKind.PLAIN,
            Extractor.RESIDUAL: BlockKind.RESIDUAL,
            Extractor.INCEPTION: BlockKind.INCEPTION,
            Extractor.NEXT32: BlockKind.CARDINALITY,
            Extractor.NEXT64: BlockKind.CARDINALITY,
        }[self]

    @property
    def cardinality_width(self) -> int:
        return 64 if self is Extractor.NEXT64 else 32


@dataclass(frozen=True)
class ModelSpec:
    """Architecture of one network. ``width_divisor`` shrinks every internal
    channel count (floored at 8) for desk-scale training; ``seed`` drives the
    weight initialisation only and is not part of the architecture digest."""

    extractor: Extractor = Extractor.PLAIN
    use_attention: bool = False
    use_midway: bool = False
    full_resolution_output: bool = False
    width_divisor: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "extractor", Extractor(self.extractor))
        if (self.use_attention or self.use_midway) and not self.full_resolution_output:
            raise ValueError("attention and midway variants must produce full-resolution output")
        d = self.width_divisor
        if d < 1 or d & (d - 1):
            raise ValueError(f"width_divisor must be a power of two, got {self.width_divisor}")

    def channels(self, c: int) -> int:
        return max(8, c // self.width_divisor)

    @property
    def encoder_channels(self) -> tuple[int, ...]:
        return tuple(self.channels(c) for c in ENCODER_CHANNELS)

    @property
    def finest_level(self) -> int:
        return 0 if self.full_resolution_output else 2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["extractor"] = self.extractor.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)

    def digest(self) -> bytes:
        arch = {k: v for k, v in self.to_dict().items() if k != "seed"}
        return hashlib.sha256(json.dumps(arch, sort_keys=True).encode()).digest()


_BASES = {
    "FlowNetRes": Extractor.RESIDUAL,
    "FlowNetInc": Extractor.INCEPTION,
    "FlowNeXt32": Extractor.NEXT32,
    "FlowNeXt64": Extractor.NEXT64,
}


def _zoo() -> dict[str, ModelSpec]:
    zoo = {"FlowNetS": ModelSpec()}
    for prefix, att, mid in (("", False, False), ("Att", True, False), ("Mid", False, True), ("AttMid", True, True)):
        for base, ext in _BASES.items():
            zoo[prefix + base] = ModelSpec(ext, att, mid, full_resolution_output=att or mid)
    return zoo


ZOO: dict[str, ModelSpec] = _zoo()


def model_spec(name: str, width_divisor: int = 1, seed: int = 0) -> ModelSpec:
    """Look up a zoo entry by (case-insensitive) name."""
    lookup = {k.lower(): v for k, v in ZOO.items()}
    try:
        spec = lookup[name.lower()]
    except KeyError:
        raise KeyError(f"unknown architecture {name!r}; choose from {', '.join(ZOO)}") from None
    return replace(spec, width_divisor=width_divisor, seed=seed)


def spec_name(spec: ModelSpec) -> str:
    for name, s in ZOO.items():
        if replace(spec, width_divisor=1, seed=0) == s:
            return name
    return "custom"


class FlowPyramid:
    """Flow predictions keyed by level; level ``k`` has scale ``1 / 2**k``."""

    def __init__(self, levels: dict[int, Tensor], input_hw: tuple[int, int]):
        self.levels = dict(sorted(levels.items()))
        self.input_hw = input_hw

    def __getitem__(self, level: int) -> Tensor:
        return self.levels[level]

    def __iter__(self):
        return iter(self.levels.items())

    def __len__(self):
        return len(self.levels)

    @property
    def finest_level(self) -> int:
        return min(self.levels)

    @property
    def finest(self) -> Tensor:
        return self.levels[self.finest_level]

    def full_resolution(self) -> Tensor:
        """Finest prediction, bilinearly resized to the input size if needed.

        Flow values are already in input-resolution pixels at every level,
        so resizing does not rescale them.
        """
        f = self.finest
        H, W = self.input_hw
        if f.shape[2:] == (H, W):
            return f
        return ad.bilinear_resize(f, H, W)


class LayerRow(NamedTuple):
    name: str
    kind: str
    out_shape: tuple
    params: int


def _act(x):
    return ad.leaky_relu(x, LEAKY_SLOPE)


class FlowNet(Module):
    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        self.trace: list[LayerRow] | None = None
        rng = np.random.default_rng(spec.seed)
        ch = spec.channels
        enc = spec.encoder_channels
        self.block_names = ENCODER_NAMES

        in_ch = 6
        for i, name in enumerate(ENCODER_NAMES):
            if i == 0 or spec.extractor is Extractor.PLAIN:
                bs = BlockSpec(BlockKind.PLAIN, in_ch, enc[i], ENCODER_STRIDES[i], kernel=PLAIN_KERNELS[i])
            else:
                bs = BlockSpec(spec.extractor.block_kind, in_ch, enc[i], ENCODER_STRIDES[i],
                               cardinality_width=spec.extractor.cardinality_width,
                               scale_divisor=min(spec.width_divisor, spec.extractor.cardinality_width))
            self.add_module(name, build_block(bs, rng))
            in_ch = enc[i]

        self.gates: dict[int, AttentionGate] = {}
        if spec.use_midway:
            self._build_midway(rng, enc, ch)
        else:
            self._build_flownets(rng, enc, ch)

    # -- construction ----------------------------------------------------------
    def _head(self, name: str, in_ch: int, rng):
        self.add_module(name, Conv2d(in_ch, 2, 3, 1, rng=rng, gain=1.0))

    def _gate(self, level: int, feat_ch: int, rng):
        if self.spec.use_attention:
            self.gates[level] = self.add_module(f"att{level}", AttentionGate(feat_ch, rng))

    def _build_flownets(self, rng, enc, ch):
        e = dict(zip(ENCODER_NAMES, enc))
        skips = {5: e["block5_1"], 4: e["block4_1"], 3: e["block3_1"], 2: e["block2"], 1: 0, 0: 0}
        self._head("pr6", e["block6_1"], rng)
        prev = e["block6_1"]
        for level in range(5, self.spec.finest_level - 1, -1):
            d = ch(FLOWNETS_DECONV[level])
            self.add_module(f"deconv{level}", ConvTranspose2d(prev, d, rng=rng))
            self.add_module(f"up{level + 1}", ConvTranspose2d(2, 2, rng=rng, gain=1.0))
            feat = skips[level] + d
            if level in GATED_LEVELS:
                self._gate(level, feat, rng)
            self._head(f"pr{level}", feat + 2, rng)
            prev = feat + 2

    def _build_midway(self, rng, enc, ch):
        e = dict(zip(ENCODER_NAMES, enc))
        mid = e["block6_1"] + e["block5_1"] + e["block4_1"] + e["block3_1"] + e["block2"]
        self.concat_channels = {"concat": mid}
        self._gate(4, mid, rng)
        self._head("pr4", mid, rng)
        # coarse branch
        self.add_module("down4", Conv2d(2, 2, 4, 2, padding=1, rng=rng, gain=1.0))
        d4 = ch(MIDWAY_DECONV["deconv4"])
        self.add_module("deconv4", Conv2d(mid, d4, 4, 2, padding=1, rng=rng))
        c5 = e["block5_1"] + d4 + 2
        self._head("pr5", c5, rng)
        self.add_module("down5", Conv2d(2, 2, 4, 2, padding=1, rng=rng, gain=1.0))
        d5 = ch(MIDWAY_DECONV["deconv5"])
        self.add_module("deconv5", Conv2d(c5, d5, 4, 2, padding=1, rng=rng))
        c6 = e["block6_1"] + d5 + 2
        self._head("pr6", c6, rng)
        self.concat_channels.update(concat5=c5, concat6=c6)
        # fine branch
        prev = mid
        skips = {3: e["block3_1"], 2: e["block2"], 1: 0, 0: 0}
        for level in (3, 2, 1, 0):
            d = ch(MIDWAY_DECONV[f"deconv{level}"])
            self.add_module(f"up{level + 1}", ConvTranspose2d(2, 2, rng=rng, gain=1.0))
            self.add_module(f"deconv{level}", ConvTranspose2d(prev, d, rng=rng))
            feat = skips[level] + d
            self._gate(level, feat, rng)
            self._head(f"pr{level}", feat + 2, rng)
            self.concat_channels[f"concat{level}"] = feat + 2
            prev = feat + 2

    # -- tracing -----------------------------------------------------------------
    def _rec(self, name: str, t: Tensor, kind: str = "", module: Module | None = None) -> Tensor:
        if self.trace is not None:
            params = module.param_count() if module is not None else 0
            self.trace.append(LayerRow(name, kind, tuple(t.shape), params))
        return t

    def _run(self, name: str, x: Tensor, act: bool = False, kind: str = "") -> Tensor:
        module = getattr(self, name)
        y = module(x)
        if act:
            y = _act(y)
        if not kind:
            kind = type(module).__name__
            if hasattr(module, "spec") and isinstance(module.spec, BlockSpec):
                kind = module.spec.kind.value
        return self._rec(name, y, kind, module)

    def _gated(self, level: int, feats: list[Tensor]) -> Tensor:
        x = feats[0] if len(feats) == 1 else ad.concat_channels(feats)
        gate = self.gates.get(level)
        if gate is None:
            return x
        y = gate(x)
        name = f"att{level}" if gate.enabled else f"sigmoid{level}"
        return self._rec(name, y, "attention" if gate.enabled else "sigmoid",
                         gate if gate.enabled else None)

    def set_attention(self, enabled: bool) -> None:
        """Switch every gate between its learned mask and the ``A(x) = 0`` path."""
        for gate in self.gates.values():
            gate.enabled = enabled

    # -- forward -------------------------------------------------------------------
    def forward(self, image_pair: Tensor) -> FlowPyramid:
        x = image_pair
        if x.ndim != 4 or x.shape[1] != 6:
            raise ShapeError(f"expected a (B, 6, H, W) image pair stack, got {x.shape}")
        H, W = x.shape[2], x.shape[3]
        if H % INPUT_MULTIPLE or W % INPUT_MULTIPLE:
            raise ShapeError(f"input height and width must be multiples of {INPUT_MULTIPLE}, got {H}x{W}")
        feats = {}
        for name in ENCODER_NAMES:
            x = self._run(name, x)
            feats[name] = x
        if self.spec.use_midway:
            preds = self._forward_midway(feats)
        else:
            preds = self._forward_flownets(feats)
        return FlowPyramid(preds, (H, W))

    def _forward_flownets(self, f):
        skips = {5: "block5_1", 4: "block4_1", 3: "block3_1", 2: "block2"}
        preds = {6: self._run("pr6", f["block6_1"])}
        prev = f["block6_1"]
        for level in range(5, self.spec.finest_level - 1, -1):
            d = self._run(f"deconv{level}", prev, act=True)
            up = self._run(f"up{level + 1}", preds[level + 1])
            parts = [f[skips[level]], d] if level in skips else [d]
            g = self._gated(level, parts)
            prev = self._rec(f"concat{level}", ad.concat_channels([g, up]), "concat")
            preds[level] = self._run(f"pr{level}", prev)
        return preds

    def _forward_midway(self, f):
        h, w = f["block4_1"].shape[2], f["block4_1"].shape[3]
        parts = [
            self._rec("biup_1", ad.bilinear_resize(f["block6_1"], h, w), "bilinear"),
            self._rec("biup_2", ad.bilinear_resize(f["block5_1"], h, w), "bilinear"),
            f["block4_1"],
            self._rec("avgdown_1", ad.avg_pool2d(f["block3_1"], 2), "avgpool"),
            self._rec("avgdown_2", ad.avg_pool2d(f["block2"], 4), "avgpool"),
        ]
        mid = self._rec("concat", ad.concat_channels(parts), "concat")
        mid = self._gated(4, [mid])
        preds = {4: self._run("pr4", mid)}

        down4 = self._run("down4", preds[4])
        d4 = self._run("deconv4", mid, act=True)
        c5 = self._rec("concat5", ad.concat_channels([f["block5_1"], d4, down4]), "concat")
        preds[5] = self._run("pr5", c5)
        down5 = self._run("down5", preds[5])
        d5 = self._run("deconv5", c5, act=True)
        c6 = self._rec("concat6", ad.concat_channels([f["block6_1"], d5, down5]), "concat")
        preds[6] = self._run("pr6", c6)

        skips = {3: "block3_1", 2: "block2"}
        prev = mid
        for level in (3, 2, 1, 0):
            up = self._run(f"up{level + 1}", preds[level + 1])
            d = self._run(f"deconv{level}", prev, act=True)
            parts = [f[skips[level]], d] if level in skips else [d]
            g = self._gated(level, parts)
            prev = self._rec(f"concat{level}", ad.concat_channels([g, up]), "concat")
            preds[level] = self._run(f"pr{level}", prev)
        return preds


def build_model(spec: ModelSpec | str, **kwargs) -> FlowNet:
    if isinstance(spec, str):
        spec = model_spec(spec, **kwargs)
    return FlowNet(spec)


def param_count(model) -> int:
    """Learned parameters of a model instance or of the model a spec describes."""
    if isinstance(model, ModelSpec):
        model = FlowNet(model)
    return model.param_count()


def layer_report(model, input_hw: tuple[int, int] = (64, 64), batch: int = 1) -> list[LayerRow]:
    """Per-layer ``(name, kind, out_shape, params)`` rows in execution order."""
    if isinstance(model, ModelSpec):
        model = FlowNet(model)
    H, W = input_hw
    dtype = ad.get_default_dtype()
    model.trace = []
    try:
        with ad.no_grad():
            model(Tensor(np.zeros((batch, 6, H, W), dtype=dtype)))
        return list(model.trace)
    finally:
        model.trace = None
