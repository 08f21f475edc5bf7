"""Flow colour coding: hue is direction, saturation is relative magnitude."""

from __future__ import annotations

import numpy as np
from matplotlib.colors import hsv_to_rgb


def flow_to_color(flow, max_norm: float | None = None) -> np.ndarray:
    """Render an ``H x W x 2`` flow as an ``H x W x 3`` uint8 image.

    Angle 0 (pure +u) is red; zero flow is white. ``max_norm`` defaults to the
    largest vector length in the field.
    """
    flow = np.asarray(flow, dtype=np.float64)
    u, v = flow[..., 0], flow[..., 1]
    mag = np.hypot(u, v)
    if max_norm is None:
        max_norm = float(mag.max()) if mag.size else 0.0
    sat = np.clip(mag / max_norm, 0.0, 1.0) if max_norm > 0 else np.zeros_like(mag)
    hue = np.mod(np.arctan2(v, u), 2 * np.pi) / (2 * np.pi)
    hsv = np.stack([hue, sat, np.ones_like(mag)], axis=-1)
    return np.round(hsv_to_rgb(hsv) * 255).astype(np.uint8)
