"""Binary checkpoint files.

Layout (all integers little-endian)::

    8 bytes   magic b"AMFLOWCK"
    uint32    format version
    32 bytes  SHA-256 digest of the model architecture
    uint32    metadata length, then that many bytes of UTF-8 JSON
              (holds the full ModelSpec plus any caller metadata)
    uint32    tensor count, then per tensor:
                uint16 name length, name (UTF-8)
                uint8  dtype code (0 = float32, 1 = float64)
                uint8  ndim, ndim x uint32 dims
                raw little-endian values, row-major
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from ..errors import CheckpointError
from .flownet import FlowNet, ModelSpec

MAGIC = b"AMFLOWCK"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def save_checkpoint(path, model: FlowNet, metadata: dict | None = None,
                    extra: dict[str, np.ndarray] | None = None, spec: ModelSpec | None = None) -> None:
    """Write ``model``'s parameters, then ``extra`` tensors (e.g. optimizer state)."""
    spec = spec if spec is not None else model.spec
    meta = {"spec": spec.to_dict(), **(metadata or {})}
    blob = json.dumps(meta, sort_keys=True).encode()
    tensors = [(f"param/{n}", a) for n, a in model.state_dict().items()]
    tensors += [(f"extra/{n}", np.asarray(a)) for n, a in (extra or {}).items()]
    parts = [MAGIC, struct.pack("<I", VERSION), spec.digest(),
             struct.pack("<I", len(blob)), blob, struct.pack("<I", len(tensors))]
    for name, arr in tensors:
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype)
        if code is None:
            arr = arr.astype(np.float32)
            code = 0
        nb = name.encode()
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<BB", code, arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(b"".join(parts))
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(
                f"{self.path}: truncated while reading {what} at byte {self.pos} "
                f"(need {n} bytes, {len(self.buf) - self.pos} left)"
            )
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_checkpoint(path, expected: ModelSpec | None = None):
    """Return ``(spec, params, extra, metadata)``.

    Raises :class:`CheckpointError` if the file is damaged, if its digest does
    not match the stored spec, or if ``expected`` describes another architecture.
    """
    r = _Reader(Path(path).read_bytes(), path)
    magic = r.take(8, "magic")
    if magic != MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r} at byte 0, expected {MAGIC!r}")
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version} (reader is {VERSION})")
    digest = r.take(32, "digest")
    (n,) = r.unpack("<I", "metadata length")
    meta = json.loads(r.take(n, "metadata").decode())
    spec = ModelSpec.from_dict(meta.pop("spec"))
    if spec.digest() != digest:
        raise CheckpointError(f"{path}: architecture digest does not match the stored spec")
    if expected is not None and expected.digest() != digest:
        raise CheckpointError(
            f"{path}: checkpoint architecture {spec.to_dict()} does not match requested {expected.to_dict()}"
        )
    (count,) = r.unpack("<I", "tensor count")
    params, extra = {}, {}
    for _ in range(count):
        (ln,) = r.unpack("<H", "name length")
        name = r.take(ln, "name").decode()
        code, ndim = r.unpack("<BB", f"header of {name}")
        if code not in _DTYPES:
            raise CheckpointError(f"{path}: unknown dtype code {code} for {name} at byte {r.pos - 2}")
        shape = r.unpack(f"<{ndim}I", f"shape of {name}")
        dt = _DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        arr = np.frombuffer(r.take(nbytes, f"data of {name}"), dtype=dt).reshape(shape)
        arr = arr.astype(dt.newbyteorder("="))
        kind, _, key = name.partition("/")
        (params if kind == "param" else extra)[key] = arr
    if r.pos != len(r.buf):
        raise CheckpointError(f"{path}: {len(r.buf) - r.pos} trailing bytes after byte {r.pos}")
    return spec, params, extra, meta


def load_model(path, expected: ModelSpec | None = None) -> FlowNet:
    spec, params, _, _ = load_checkpoint(path, expected)
    model = FlowNet(spec)
    model.load_state_dict(params)
    return model
