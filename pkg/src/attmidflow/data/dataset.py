"""Datasets of sample pairs: generation, augmentation, batching and on-disk manifests."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .flo import read_flo, write_flo
from .imageio import read_image, write_image
from .synth import SamplePair, generate, random_scene


def sample_seeds(seed: int, count: int) -> list[int]:
    """Independent per-sample seeds spawned from one root seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


def _make(args) -> SamplePair:
    s, canvas, profile = args
    return generate(random_scene(s, canvas, profile))


def dataset(seed: int, count: int, canvas=(64, 64), profile: str = "chairs",
            workers: int = 0) -> list[SamplePair]:
    """``count`` synthetic pairs; sample ``i`` depends only on ``(seed, i)``.

    With ``workers > 0`` samples are rendered in worker processes; the
    result order is the same either way.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    jobs = [(s, tuple(canvas), profile) for s in sample_seeds(seed, count)]
    if workers > 0:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_make, jobs, chunksize=16))
    return [_make(j) for j in jobs]


def train_eval_split(seed: int, n_train: int, n_eval: int, canvas=(64, 64),
                     profile: str = "chairs") -> tuple[list[SamplePair], list[SamplePair]]:
    """Disjoint train and eval sets drawn from separate child seeds."""
    train_seed, eval_seed = (int(c.generate_state(1)[0]) for c in np.random.SeedSequence(seed).spawn(2))
    return dataset(train_seed, n_train, canvas, profile), dataset(eval_seed, n_eval, canvas, profile)


# ---------------------------------------------------------------------------
# augmentation


def hflip(pair: SamplePair) -> SamplePair:
    """Mirror both frames and the flow left-right; ``u`` changes sign."""
    gt = pair.gt[:, ::-1].copy()
    gt[..., 0] *= -1
    valid = None if pair.valid is None else pair.valid[:, ::-1].copy()
    return SamplePair(pair.image1[:, ::-1].copy(), pair.image2[:, ::-1].copy(), gt, valid, pair.seed)


def photometric_jitter(pair: SamplePair, rng: np.random.Generator, strength: float = 0.1) -> SamplePair:
    """Same random contrast, brightness and per-channel gain on both frames."""
    contrast = 1 + rng.uniform(-strength, strength)
    brightness = rng.uniform(-strength, strength)
    gain = 1 + rng.uniform(-strength / 2, strength / 2, 3)

    def apply(img):
        x = img.astype(np.float64) / 255
        x = ((x - 0.5) * contrast + 0.5 + brightness) * gain
        return np.round(np.clip(x, 0, 1) * 255).astype(np.uint8)

    return SamplePair(apply(pair.image1), apply(pair.image2), pair.gt, pair.valid, pair.seed)


@dataclass(frozen=True)
class Augment:
    flip_prob: float = 0.0
    jitter: float = 0.0

    def __call__(self, pair: SamplePair, rng: np.random.Generator) -> SamplePair:
        if self.flip_prob > 0 and rng.random() < self.flip_prob:
            pair = hflip(pair)
        if self.jitter > 0:
            pair = photometric_jitter(pair, rng, self.jitter)
        return pair


# ---------------------------------------------------------------------------
# network tensors


def images_to_input(image1: np.ndarray, image2: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Stack two ``(..., H, W, 3)`` uint8 frames into a ``(B, 6, H, W)`` array in [-0.5, 0.5]."""
    a = np.asarray(image1)
    b = np.asarray(image2)
    if a.ndim == 3:
        a, b = a[None], b[None]
    dtype = np.dtype(dtype)
    x = np.concatenate([a, b], axis=-1).astype(dtype) / dtype.type(255) - dtype.type(0.5)
    return np.ascontiguousarray(x.transpose(0, 3, 1, 2))


def flow_to_chw(flow: np.ndarray, dtype=np.float32) -> np.ndarray:
    """``(..., H, W, 2)`` -> ``(B, 2, H, W)``."""
    f = np.asarray(flow, dtype=dtype)
    if f.ndim == 3:
        f = f[None]
    return np.ascontiguousarray(f.transpose(0, 3, 1, 2))


def flow_to_hwc(flow: np.ndarray) -> np.ndarray:
    """``(B, 2, H, W)`` or ``(2, H, W)`` -> ``(..., H, W, 2)``."""
    f = np.asarray(flow)
    return np.ascontiguousarray(np.moveaxis(f, -3, -1))


def collate(pairs: Sequence[SamplePair], dtype=np.float32) -> tuple[np.ndarray, np.ndarray]:
    x = images_to_input(np.stack([p.image1 for p in pairs]), np.stack([p.image2 for p in pairs]), dtype)
    y = flow_to_chw(np.stack([p.gt for p in pairs]), dtype)
    return x, y


# ---------------------------------------------------------------------------
# files


def write_dataset(root, pairs: Iterable[SamplePair], prefix: str = "") -> Path:
    """Write ``NNNNN_img1.ppm``, ``NNNNN_img2.ppm``, ``NNNNN_flow.flo`` and ``manifest.jsonl``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    manifest = root / "manifest.jsonl"
    with open(manifest, "w") as fh:
        for i, p in enumerate(pairs):
            stem = f"{prefix}{i:05d}"
            rec = {"image1": f"{stem}_img1.ppm", "image2": f"{stem}_img2.ppm", "flow": f"{stem}_flow.flo"}
            write_image(root / rec["image1"], p.image1)
            write_image(root / rec["image2"], p.image2)
            write_flo(root / rec["flow"], p.gt)
            fh.write(json.dumps(rec) + "\n")
    return manifest


def read_manifest(path) -> list[SamplePair]:
    """Load every record of a manifest; paths resolve relative to the manifest."""
    path = Path(path)
    pairs = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                files = [path.parent / rec[k] for k in ("image1", "image2", "flow")]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad manifest record ({exc})") from None
            pairs.append(SamplePair(read_image(files[0]), read_image(files[1]), read_flo(files[2])))
    return pairs


def load_flyingchairs(root, limit: int | None = None) -> list[SamplePair]:
    """Read a FlyingChairs-style directory (``*_img1.ppm``, ``*_img2.ppm``, ``*_flow.flo``)."""
    root = Path(root)
    flows = sorted(root.glob("*_flow.flo"))
    if limit is not None:
        flows = flows[:limit]
    pairs = []
    for f in flows:
        stem = f.name[: -len("_flow.flo")]
        pairs.append(SamplePair(read_image(root / f"{stem}_img1.ppm"),
                                read_image(root / f"{stem}_img2.ppm"), read_flo(f)))
    return pairs
