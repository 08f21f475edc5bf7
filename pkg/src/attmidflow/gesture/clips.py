"""Synthetic gesture clips with analytic flow, and their on-disk form.

Each clip shows one textured disc moving over a static textured background.
The disc's per-frame velocity follows the class trajectory:

* ``left``/``right``/``up``/``down``: constant direction.
* ``circle-cw``: the direction angle advances by ``2 pi / T`` every frame
  (clockwise on screen, since image ``y`` points down).
* ``wave``: horizontal motion that reverses periodically: each period is
  mostly leftward with a short rightward return, and the peak speed is set so
  the average drift equals a ``left`` clip's speed. Clip-mean flow therefore
  cannot tell ``wave`` from ``left``; only the temporal pattern can.

Flow frame ``t`` maps RGB frame ``t`` to frame ``t + 1`` and equals the disc
velocity on the disc and zero elsewhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..data.flo import read_flo, write_flo
from ..data.imageio import read_image, write_image
from ..data.synth import Texture

CLASSES = ("left", "right", "up", "down", "circle-cw", "wave")
WAVE_PERIOD = 10
WAVE_LEFT_FRAMES = 8     # of each period; the rest move right
SPEED_RANGE = (0.8, 1.2)
RADIUS_RANGE = (8.0, 10.0)


@dataclass
class GestureClip:
    flows: np.ndarray                   # T x H x W x 2 float32
    label: int
    fps: float = 30.0
    frames: np.ndarray | None = None    # (T + 1) x H x W x 3 uint8

    def __post_init__(self):
        self.flows = np.asarray(self.flows, dtype=np.float32)
        if self.flows.ndim != 4 or self.flows.shape[-1] != 2:
            raise ValueError(f"flows must be T x H x W x 2, got {self.flows.shape}")
        if not 0 <= self.label < len(CLASSES):
            raise ValueError(f"label must be in 0..{len(CLASSES) - 1}, got {self.label}")

    @property
    def length(self) -> int:
        return len(self.flows)

    @property
    def class_name(self) -> str:
        return CLASSES[self.label]


def class_velocities(name: str, T: int, speed: float, phase: float = 0.0) -> np.ndarray:
    """Per-frame ``(u, v)`` velocities, shape ``(T, 2)``.

    ``speed`` is the per-frame speed, except for ``wave`` where it is the
    average leftward drift over a whole period.
    """
    t = np.arange(T)
    if name == "left":
        v = np.tile([-speed, 0.0], (T, 1))
    elif name == "right":
        v = np.tile([speed, 0.0], (T, 1))
    elif name == "up":
        v = np.tile([0.0, -speed], (T, 1))
    elif name == "down":
        v = np.tile([0.0, speed], (T, 1))
    elif name == "circle-cw":
        angle = phase + 2 * np.pi * t / T
        v = speed * np.stack([np.cos(angle), np.sin(angle)], axis=1)
    elif name == "wave":
        shift = int(phase / (2 * np.pi) * WAVE_PERIOD) % WAVE_PERIOD
        sign = np.where(((t + shift) % WAVE_PERIOD) < WAVE_LEFT_FRAMES, -1.0, 1.0)
        peak = speed * WAVE_PERIOD / (2 * WAVE_LEFT_FRAMES - WAVE_PERIOD)
        v = np.stack([peak * sign, np.zeros(T)], axis=1)
    else:
        raise ValueError(f"unknown gesture class {name!r}; choose from {CLASSES}")
    return v


def render_clip(label: int, rng: np.random.Generator, canvas=(64, 64), T: int = 30,
                fps: float = 30.0) -> GestureClip:
    H, W = canvas
    speed = rng.uniform(*SPEED_RANGE)
    radius = rng.uniform(*RADIUS_RANGE)
    phase = rng.uniform(0, 2 * np.pi)
    vel = class_velocities(CLASSES[label], T, speed, phase)
    offsets = np.vstack([np.zeros(2), np.cumsum(vel, axis=0)])    # (T + 1, 2)
    lo = radius + 1 - offsets.min(axis=0)
    hi = np.array([W, H]) - radius - 2 - offsets.max(axis=0)
    if np.any(hi < lo):
        raise ValueError(f"canvas {H}x{W} too small for a {T}-frame {CLASSES[label]} trajectory")
    start = rng.uniform(lo, hi)
    background = Texture.random(rng)
    disc = Texture.random(rng)
    ys, xs = np.mgrid[0:H, 0:W].astype(float)
    bg = background.sample(xs, ys)
    frames = np.empty((T + 1, H, W, 3), np.uint8)
    flows = np.zeros((T, H, W, 2), np.float32)
    for t in range(T + 1):
        cx, cy = start + offsets[t]
        inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius * radius
        img = bg.copy()
        img[inside] = disc.sample(xs[inside] - offsets[t, 0], ys[inside] - offsets[t, 1])
        frames[t] = np.round(img * 255).astype(np.uint8)
        if t < T:
            flows[t][inside] = vel[t]
    return GestureClip(flows, label, fps, frames)


def synth_gesture_dataset(seed: int, per_class: int, canvas=(64, 64), T: int = 30,
                          fps: float = 30.0) -> list[GestureClip]:
    """``per_class`` clips of every class, interleaved by class; exact labels."""
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    children = np.random.SeedSequence(seed).spawn(per_class * len(CLASSES))
    clips = []
    for i, child in enumerate(children):
        clips.append(render_clip(i % len(CLASSES), np.random.default_rng(child), canvas, T, fps))
    return clips


def split_clips(clips, test_fraction: float = 1 / 3) -> tuple[list[GestureClip], list[GestureClip]]:
    """Deterministic split that keeps every class in both halves."""
    train, test = [], []
    seen = [0] * len(CLASSES)
    period = max(2, int(round(1 / test_fraction)))
    for c in clips:
        (test if seen[c.label] % period == period - 1 else train).append(c)
        seen[c.label] += 1
    return train, test


# ---------------------------------------------------------------------------
# storage


def write_clips(root, clips, with_frames: bool = False) -> Path:
    """One directory of ``.flo`` files per clip plus ``manifest.jsonl``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest = root / "manifest.jsonl"
    with open(manifest, "w") as fh:
        for i, clip in enumerate(clips):
            name = f"clip_{i:05d}"
            d = root / name
            d.mkdir(exist_ok=True)
            for t, f in enumerate(clip.flows):
                write_flo(d / f"flow_{t:04d}.flo", f)
            if with_frames and clip.frames is not None:
                for t, img in enumerate(clip.frames):
                    write_image(d / f"frame_{t:04d}.ppm", img)
            fh.write(json.dumps({"clip": name, "label": clip.class_name, "fps": clip.fps,
                                 "frames": clip.length}) + "\n")
    return manifest


def read_clips(manifest, with_frames: bool = False) -> tuple[list[str], list[GestureClip]]:
    manifest = Path(manifest)
    ids, clips = [], []
    with open(manifest) as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                name, label, n = rec["clip"], CLASSES.index(rec["label"]), int(rec["frames"])
            except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{manifest}:{line_no}: bad clip record ({exc})") from None
            d = manifest.parent / name
            flows = np.stack([read_flo(d / f"flow_{t:04d}.flo") for t in range(n)])
            frames = None
            if with_frames:
                frames = np.stack([read_image(d / f"frame_{t:04d}.ppm") for t in range(n + 1)])
            ids.append(name)
            clips.append(GestureClip(flows, label, float(rec.get("fps", 30.0)), frames))
    return ids, clips
