"""Middlebury ``.flo`` reader and writer.

File layout, little-endian: float32 magic ``202021.25``, int32 width,
int32 height, then ``height * width`` interleaved float32 ``(u, v)`` pairs in
row-major order.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import FloFormatError

MAGIC = 202021.25
HEADER_BYTES = 12


def write_flo(path, flow) -> None:
    flow = np.asarray(flow)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"flow must be H x W x 2, got {flow.shape}")
    if not np.isfinite(flow).all():
        raise ValueError("flow contains non-finite values")
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(np.array([MAGIC], dtype="<f4").tobytes())
        fh.write(np.array([w, h], dtype="<i4").tobytes())
        fh.write(np.ascontiguousarray(flow, dtype="<f4").tobytes())


def read_flo(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    if len(buf) < HEADER_BYTES:
        raise FloFormatError(f"{path}: truncated header, {len(buf)} bytes where 12 are required (offset 0)")
    magic = np.frombuffer(buf, dtype="<f4", count=1)[0]
    if magic != np.float32(MAGIC):
        raise FloFormatError(f"{path}: bad magic {float(magic)!r} at byte offset 0, expected {MAGIC}")
    w, h = (int(v) for v in np.frombuffer(buf, dtype="<i4", count=2, offset=4))
    if w <= 0 or h <= 0:
        raise FloFormatError(f"{path}: invalid size {w}x{h} at byte offset 4")
    need = HEADER_BYTES + 8 * w * h
    if len(buf) < need:
        raise FloFormatError(
            f"{path}: truncated data, expected {need} bytes for {w}x{h}, file ends at byte offset {len(buf)}"
        )
    if len(buf) > need:
        raise FloFormatError(f"{path}: {len(buf) - need} unexpected trailing bytes after byte offset {need}")
    data = np.frombuffer(buf, dtype="<f4", count=2 * w * h, offset=HEADER_BYTES)
    return data.reshape(h, w, 2).astype(np.float32)
