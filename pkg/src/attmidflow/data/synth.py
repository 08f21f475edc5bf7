"""Layered affine scenes with exact ground-truth flow.

A scene is a stack of layers. Layer 0 is the background and covers the whole
plane; every other layer is an ellipse or polygon. Each layer carries a
procedural texture (a sum of random low-frequency sinusoids, so it can be
sampled exactly at any real coordinate) and an affine motion ``A``.

* ``image1(p)`` is the texture of the topmost layer whose shape contains ``p``.
* ``image2(q)`` is the texture of the topmost layer whose *moved* shape
  contains ``q``, sampled at ``A^-1(q)``.
* ``gt(p) = A(p) - p`` for the topmost layer at ``p`` in ``image1``.

Pixel ``(row, col)`` has coordinates ``x = col``, ``y = row``; flow is ``(u, v) = (dx, dy)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import SceneError

DEFAULT_CAP = 16.0
# translation profile reach: about 5% of a 64 px canvas
TRANSLATION_REACH = 3.0


@dataclass(frozen=True)
class Texture:
    """``base + sum_k amp_k * sin(2 pi <freq_k, p> + phase_k)`` per RGB channel."""

    base: np.ndarray          # (3,)
    freqs: np.ndarray         # (K, 2) cycles per pixel
    phases: np.ndarray        # (K, 3)
    amps: np.ndarray          # (K, 3)

    @classmethod
    def random(cls, rng: np.random.Generator, waves: int = 12, max_freq: float = 0.1,
               contrast: float = 0.45) -> "Texture":
        angle = rng.uniform(0, 2 * np.pi, waves)
        radius = rng.uniform(0.02, max_freq, waves)
        freqs = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1)
        amps = rng.uniform(0.3, 1.0, (waves, 3))
        amps *= contrast / amps.sum(axis=0, keepdims=True)
        return cls(rng.uniform(0.3, 0.7, 3), freqs, rng.uniform(0, 2 * np.pi, (waves, 3)), amps)

    @classmethod
    def flat(cls, color) -> "Texture":
        return cls(np.asarray(color, float), np.zeros((0, 2)), np.zeros((0, 3)), np.zeros((0, 3)))

    def sample(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Colour in [0, 1] at real coordinates; returns ``x.shape + (3,)``."""
        out = np.broadcast_to(self.base, x.shape + (3,)).copy()
        for k in range(len(self.freqs)):
            arg = 2 * np.pi * (self.freqs[k, 0] * x + self.freqs[k, 1] * y)
            out += self.amps[k] * np.sin(arg[..., None] + self.phases[k])
        return np.clip(out, 0.0, 1.0)


@dataclass(frozen=True)
class Layer:
    """``shape`` is ``"full"``, ``"ellipse"`` (params cx, cy, rx, ry, theta) or
    ``"polygon"`` (params: N x 2 vertices); ``affine`` is ``[[a, b, tx], [c, d, ty]]``."""

    shape: str
    params: np.ndarray
    texture: Texture
    affine: np.ndarray

    @property
    def linear(self) -> np.ndarray:
        return np.asarray(self.affine, float)[:, :2]

    @property
    def offset(self) -> np.ndarray:
        return np.asarray(self.affine, float)[:, 2]

    def contains(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.shape == "full":
            return np.ones(np.broadcast(x, y).shape, bool)
        if self.shape == "ellipse":
            cx, cy, rx, ry, th = self.params
            dx, dy = x - cx, y - cy
            c, s = np.cos(th), np.sin(th)
            a = (c * dx + s * dy) / rx
            b = (-s * dx + c * dy) / ry
            return a * a + b * b <= 1.0
        if self.shape == "polygon":
            return _point_in_polygon(x, y, np.asarray(self.params, float))
        raise SceneError(f"unknown layer shape {self.shape!r}")

    def forward(self, x, y):
        m, t = self.linear, self.offset
        return m[0, 0] * x + m[0, 1] * y + t[0], m[1, 0] * x + m[1, 1] * y + t[1]

    def inverse(self, x, y):
        m, t = self.linear, self.offset
        inv = np.linalg.inv(m)
        x0, y0 = x - t[0], y - t[1]
        return inv[0, 0] * x0 + inv[0, 1] * y0, inv[1, 0] * x0 + inv[1, 1] * y0


def _point_in_polygon(x, y, verts) -> np.ndarray:
    inside = np.zeros(np.broadcast(x, y).shape, bool)
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
    return inside


@dataclass(frozen=True)
class SceneSpec:
    seed: int
    canvas: tuple[int, int]
    layers: tuple[Layer, ...]
    max_displacement: float = DEFAULT_CAP

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    def validate(self) -> None:
        H, W = self.canvas
        if H < 1 or W < 1:
            raise SceneError(f"canvas must be positive, got {self.canvas}")
        if not 1 <= len(self.layers) <= 8:
            raise SceneError(f"layer count must be 1..8, got {len(self.layers)}")
        if self.layers[0].shape != "full":
            raise SceneError("layer 0 is the background and must cover the full canvas")
        ys, xs = np.mgrid[0:H, 0:W].astype(float)
        for i, layer in enumerate(self.layers):
            det = float(np.linalg.det(layer.linear))
            if not 0.5 <= abs(det) <= 2.0:
                raise SceneError(f"layer {i}: |det| = {abs(det):.3f} outside [0.5, 2]")
            mask = layer.contains(xs, ys)
            if not mask.any():
                continue
            fx, fy = layer.forward(xs[mask], ys[mask])
            worst = float(np.hypot(fx - xs[mask], fy - ys[mask]).max())
            if worst > self.max_displacement:
                raise SceneError(
                    f"layer {i}: displacement {worst:.2f} px exceeds the cap of {self.max_displacement} px"
                )


@dataclass
class SamplePair:
    image1: np.ndarray                 # H x W x 3 uint8
    image2: np.ndarray                 # H x W x 3 uint8
    gt: np.ndarray                     # H x W x 2 float32
    valid: np.ndarray | None = None    # H x W bool, True where the pixel is visible in both frames
    seed: int | None = None
    meta: dict = field(default_factory=dict)


def _quantize(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0, 1) * 255).astype(np.uint8)


def generate(scene: SceneSpec) -> SamplePair:
    """Render both frames and the exact flow. Pure function of ``scene``."""
    scene.validate()
    H, W = scene.canvas
    ys, xs = np.mgrid[0:H, 0:W].astype(float)
    img1 = np.zeros((H, W, 3))
    img2 = np.zeros((H, W, 3))
    owner1 = np.zeros((H, W), int)
    owner2 = np.zeros((H, W), int)
    gt = np.zeros((H, W, 2))
    for i, layer in enumerate(scene.layers):
        m1 = layer.contains(xs, ys)
        img1[m1] = layer.texture.sample(xs[m1], ys[m1])
        owner1[m1] = i
        fx, fy = layer.forward(xs[m1], ys[m1])
        gt[m1, 0] = fx - xs[m1]
        gt[m1, 1] = fy - ys[m1]
        bx, by = layer.inverse(xs, ys)
        m2 = layer.contains(bx, by)
        img2[m2] = layer.texture.sample(bx[m2], by[m2])
        owner2[m2] = i
    valid = _visible_in_both(gt, owner1, owner2)
    return SamplePair(_quantize(img1), _quantize(img2), gt.astype(np.float32), valid, scene.seed)


def _visible_in_both(gt, owner1, owner2) -> np.ndarray:
    """Pixels whose target lands inside frame 2 with all four bilinear neighbours owned by the same layer."""
    H, W = owner1.shape
    ys, xs = np.mgrid[0:H, 0:W].astype(float)
    tx, ty = xs + gt[..., 0], ys + gt[..., 1]
    ok = (tx >= 0) & (tx <= W - 1) & (ty >= 0) & (ty <= H - 1)
    x0 = np.clip(np.floor(tx).astype(int), 0, W - 1)
    y0 = np.clip(np.floor(ty).astype(int), 0, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    y1 = np.minimum(y0 + 1, H - 1)
    for yy, xx in ((y0, x0), (y0, x1), (y1, x0), (y1, x1)):
        ok &= owner2[yy, xx] == owner1
    return ok


# ---------------------------------------------------------------------------
# random scenes


def _about(center, linear, shift) -> np.ndarray:
    """Affine applying ``linear`` about ``center`` followed by ``shift``."""
    c = np.asarray(center, float)
    t = c - linear @ c + np.asarray(shift, float)
    return np.hstack([linear, t[:, None]])


def _rot_scale(theta: float, sx: float, sy: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]]) @ np.diag([sx, sy])


PROFILES = ("chairs", "translation")


def random_scene(seed: int, canvas=(64, 64), profile: str = "chairs",
                 max_displacement: float = DEFAULT_CAP) -> SceneSpec:
    """Draw a scene for ``profile``.

    ``translation``: translating background plus one or two translating
    foreground shapes (displacements up to ``TRANSLATION_REACH`` px). ``chairs``: mild
    rotation/zoom of the background and two to five shapes with independent
    affine motion (displacements up to ``max_displacement``).
    """
    if profile not in PROFILES:
        raise SceneError(f"unknown profile {profile!r}; choose from {PROFILES}")
    rng = np.random.default_rng(seed)
    H, W = canvas
    center = np.array([W / 2, H / 2])
    for _ in range(100):
        layers = []
        if profile == "translation":
            reach = min(TRANSLATION_REACH, max_displacement)
            lin = np.eye(2)
            n_fg = int(rng.integers(1, 3))
        else:
            reach = min(8.0, max_displacement / 2)
            lin = _rot_scale(rng.uniform(-0.05, 0.05), *rng.uniform(0.95, 1.05, 2))
            n_fg = int(rng.integers(2, 6))
        layers.append(Layer("full", np.zeros(0), Texture.random(rng),
                            _about(center, lin, _disc(rng, reach))))
        for _ in range(n_fg):
            c = rng.uniform([0.15 * W, 0.15 * H], [0.85 * W, 0.85 * H])
            size = rng.uniform(0.12, 0.3) * min(H, W)
            if rng.random() < 0.5:
                params = np.array([c[0], c[1], size, size * rng.uniform(0.5, 1.0), rng.uniform(0, np.pi)])
                shape = "ellipse"
            else:
                params = _random_polygon(rng, c, size)
                shape = "polygon"
            if profile == "translation":
                lin = np.eye(2)
            else:
                lin = _rot_scale(rng.uniform(-0.2, 0.2), *rng.uniform(0.9, 1.1, 2))
            layers.append(Layer(shape, params, Texture.random(rng), _about(c, lin, _disc(rng, reach))))
        scene = SceneSpec(seed, (H, W), tuple(layers), max_displacement)
        try:
            scene.validate()
        except SceneError:
            continue
        return scene
    raise SceneError(f"could not draw a {profile} scene within the {max_displacement} px cap")


def _disc(rng, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.random())
    a = rng.uniform(0, 2 * np.pi)
    return np.array([r * np.cos(a), r * np.sin(a)])


def _random_polygon(rng, center, size) -> np.ndarray:
    n = int(rng.integers(3, 8))
    angles = np.sort(rng.uniform(0, 2 * np.pi, n))
    radii = size * rng.uniform(0.6, 1.0, n)
    return np.stack([center[0] + radii * np.cos(angles), center[1] + radii * np.sin(angles)], axis=1)


def translation_scene(shift, canvas=(64, 64), seed: int = 0) -> SceneSpec:
    """Single textured background moving by ``shift = (dx, dy)``."""
    rng = np.random.default_rng(seed)
    affine = np.array([[1.0, 0.0, shift[0]], [0.0, 1.0, shift[1]]])
    return SceneSpec(seed, tuple(canvas), (Layer("full", np.zeros(0), Texture.random(rng), affine),))
