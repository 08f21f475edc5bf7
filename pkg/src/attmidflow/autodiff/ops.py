"""Differentiable operations on :class:`Tensor`.

Layout is channels-major ``(B, C, H, W)`` throughout. Convolutions use an
im2col lowering onto ``numpy.matmul``; the only parallelism is whatever the
linked BLAS does inside a single matmul, which may reassociate sums across
threads. Bit-identical results therefore require a single BLAS thread.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, as_tensor


def _scalar(x) -> bool:
    return isinstance(x, (int, float, np.integer, np.floating))


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes differ, {a.shape} vs {b.shape}")


# ---------------------------------------------------------------------------
# elementwise


def add(x, y) -> Tensor:
    if _scalar(y):
        x = as_tensor(x)
        return Tensor._from_op(x.data + x.data.dtype.type(y), (x,), lambda g: (g,), "add_scalar")
    x, y = as_tensor(x), as_tensor(y)
    _same_shape("add", x, y)
    return Tensor._from_op(x.data + y.data, (x, y), lambda g: (g, g), "add")


def sub(x, y) -> Tensor:
    if _scalar(y):
        return add(x, -y)
    x, y = as_tensor(x), as_tensor(y)
    _same_shape("sub", x, y)
    return Tensor._from_op(x.data - y.data, (x, y), lambda g: (g, -g), "sub")


def neg(x) -> Tensor:
    x = as_tensor(x)
    return Tensor._from_op(-x.data, (x,), lambda g: (-g,), "neg")


def mul(x, y) -> Tensor:
    if _scalar(y):
        x = as_tensor(x)
        c = x.data.dtype.type(y)
        return Tensor._from_op(x.data * c, (x,), lambda g: (g * c,), "mul_scalar")
    x, y = as_tensor(x), as_tensor(y)
    _same_shape("mul", x, y)
    xd, yd = x.data, y.data
    return Tensor._from_op(xd * yd, (x, y), lambda g: (g * yd, g * xd), "mul")


def leaky_relu(x: Tensor, slope: float = 0.1) -> Tensor:
    xd = x.data
    pos = xd > 0
    out = np.where(pos, xd, xd * xd.dtype.type(slope))

    def backward(g):
        return (np.where(pos, g, g * g.dtype.type(slope)),)

    return Tensor._from_op(out, (x,), backward, "leaky_relu")


def sigmoid(x: Tensor) -> Tensor:
    half = x.data.dtype.type(0.5)
    out = half * (np.tanh(half * x.data) + 1)
    return Tensor._from_op(out, (x,), lambda g: (g * out * (1 - out),), "sigmoid")


# ---------------------------------------------------------------------------
# reductions and reshaping


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    shape = x.shape
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor._from_op(out, (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = range(x.ndim) if axis is None else (axis if isinstance(axis, tuple) else (axis,))
    count = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    out = x.data.reshape(shape)
    return Tensor._from_op(out, (x,), lambda g: (g.reshape(src),), "reshape")


def concat_channels(xs: Sequence[Tensor]) -> Tensor:
    """Concatenate ``(B, C_i, H, W)`` tensors along the channel axis."""
    xs = [as_tensor(t) for t in xs]
    if not xs:
        raise ShapeError("concat_channels needs at least one tensor")
    ref = xs[0].shape
    for t in xs:
        if t.ndim != 4 or (t.shape[0], t.shape[2], t.shape[3]) != (ref[0], ref[2], ref[3]):
            raise ShapeError(
                "concat_channels: batch/spatial dims must match, got "
                + ", ".join(str(s.shape) for s in xs)
            )
    sizes = [t.shape[1] for t in xs]
    out = np.concatenate([t.data for t in xs], axis=1)
    bounds = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=1))

    return Tensor._from_op(out, tuple(xs), backward, "concat")


# ---------------------------------------------------------------------------
# convolution


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # (B, C, Ho, Wo, kh, kw) strided view
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def deconv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size - 1) * stride - 2 * padding + k


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    """Cross-correlation. ``weight`` is ``(C_out, C_in / groups, kh, kw)``."""
    if stride < 1 or padding < 0:
        raise ValueError(f"conv2d: need stride >= 1 and padding >= 0, got {stride}, {padding}")
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input and weight, got {x.shape} and {weight.shape}")
    B, C, H, W = x.shape
    Co, Cg, kh, kw = weight.shape
    if C != Cg * groups or Co % groups:
        raise ShapeError(
            f"conv2d: input channels do not match weight; input {x.shape}, weight {weight.shape}, groups {groups}"
        )
    if H + 2 * padding < kh or W + 2 * padding < kw:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {x.shape} (padding {padding})")
    g = groups
    Cog = Co // g
    Ho = conv_output_size(H, kh, stride, padding)
    Wo = conv_output_size(W, kw, stride, padding)
    N = B * Ho * Wo
    K = Cg * kh * kw

    xp = _pad(x.data, padding)
    win = _windows(xp, kh, kw, stride).reshape(B, g, Cg, Ho, Wo, kh, kw)
    cols = np.ascontiguousarray(win.transpose(1, 0, 3, 4, 2, 5, 6)).reshape(g, N, K)
    wm = weight.data.reshape(g, Cog, K)
    out = np.matmul(cols, wm.transpose(0, 2, 1))  # (g, N, Cog)
    out = out.reshape(g, B, Ho, Wo, Cog).transpose(1, 0, 4, 2, 3).reshape(B, Co, Ho, Wo)
    if bias is not None:
        out = out + bias.data.reshape(1, Co, 1, 1)
    out = np.ascontiguousarray(out)

    parents = (x, weight) if bias is None else (x, weight, bias)
    Hp, Wp = xp.shape[2], xp.shape[3]

    def backward(go):
        gm = np.ascontiguousarray(go.reshape(B, g, Cog, Ho, Wo).transpose(1, 0, 3, 4, 2)).reshape(g, N, Cog)
        dw = np.matmul(gm.transpose(0, 2, 1), cols).reshape(Co, Cg, kh, kw) if weight.requires_grad else None
        dx = None
        if x.requires_grad:
            dcols = np.matmul(gm, wm).reshape(g, B, Ho, Wo, Cg, kh, kw)
            dcols = np.ascontiguousarray(dcols.transpose(1, 0, 4, 5, 6, 2, 3))  # B,g,Cg,kh,kw,Ho,Wo
            dxp = np.zeros((B, g, Cg, Hp, Wp), dtype=go.dtype)
            he, we = stride * (Ho - 1) + 1, stride * (Wo - 1) + 1
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, :, i:i + he:stride, j:j + we:stride] += dcols[:, :, :, i, j]
            dxp = dxp.reshape(B, C, Hp, Wp)
            dx = dxp[:, :, padding:padding + H, padding:padding + W] if padding else dxp
        grads = [dx, dw]
        if bias is not None:
            grads.append(go.sum(axis=(0, 2, 3)))
        return grads

    return Tensor._from_op(out, parents, backward, "conv2d")


def deconv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
             stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution. ``weight`` is ``(C_in, C_out, kh, kw)``.

    With the same weight array this is the adjoint of :func:`conv2d` run with
    the same stride and padding.
    """
    if stride < 1 or padding < 0:
        raise ValueError(f"deconv2d: need stride >= 1 and padding >= 0, got {stride}, {padding}")
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"deconv2d: expected 4-D input and weight, got {x.shape} and {weight.shape}")
    B, Ci, H, W = x.shape
    Wci, Co, kh, kw = weight.shape
    if Ci != Wci:
        raise ShapeError(f"deconv2d: input channels do not match weight; input {x.shape}, weight {weight.shape}")
    Hf, Wf = (H - 1) * stride + kh, (W - 1) * stride + kw
    Ho, Wo = Hf - 2 * padding, Wf - 2 * padding
    if Ho < 1 or Wo < 1:
        raise ShapeError(f"deconv2d: padding {padding} leaves an empty output for input {x.shape}")
    N = B * H * W

    xm = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1)).reshape(N, Ci)
    wm = weight.data.reshape(Ci, Co * kh * kw)
    cols = (xm @ wm).reshape(B, H, W, Co, kh, kw)
    cols = np.ascontiguousarray(cols.transpose(0, 3, 4, 5, 1, 2))
    full = np.zeros((B, Co, Hf, Wf), dtype=cols.dtype)
    he, we = stride * (H - 1) + 1, stride * (W - 1) + 1
    for i in range(kh):
        for j in range(kw):
            full[:, :, i:i + he:stride, j:j + we:stride] += cols[:, :, i, j]
    out = full[:, :, padding:padding + Ho, padding:padding + Wo]
    if bias is not None:
        out = out + bias.data.reshape(1, Co, 1, 1)
    out = np.ascontiguousarray(out)
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(go):
        gp = _pad(go, padding)
        gcols = np.ascontiguousarray(_windows(gp, kh, kw, stride).transpose(0, 2, 3, 1, 4, 5))
        gcols = gcols.reshape(N, Co * kh * kw)
        dx = (gcols @ wm.T).reshape(B, H, W, Ci).transpose(0, 3, 1, 2) if x.requires_grad else None
        dw = (xm.T @ gcols).reshape(Ci, Co, kh, kw) if weight.requires_grad else None
        grads = [None if dx is None else np.ascontiguousarray(dx), dw]
        if bias is not None:
            grads.append(go.sum(axis=(0, 2, 3)))
        return grads

    return Tensor._from_op(out, parents, backward, "deconv2d")


def avg_pool2d(x: Tensor, k: int, stride: int | None = None, padding: int = 0) -> Tensor:
    """Mean over ``k x k`` windows; zero padding counts toward the mean."""
    stride = k if stride is None else stride
    B, C, H, W = x.shape
    if H + 2 * padding < k or W + 2 * padding < k:
        raise ShapeError(f"avg_pool2d: window {k} larger than padded input {x.shape}")
    xp = _pad(x.data, padding)
    win = _windows(xp, k, k, stride)
    Ho, Wo = win.shape[2], win.shape[3]
    out = np.ascontiguousarray(win.mean(axis=(4, 5)))
    Hp, Wp = xp.shape[2], xp.shape[3]

    def backward(go):
        share = go / (k * k)
        dxp = np.zeros((B, C, Hp, Wp), dtype=go.dtype)
        he, we = stride * (Ho - 1) + 1, stride * (Wo - 1) + 1
        for i in range(k):
            for j in range(k):
                dxp[:, :, i:i + he:stride, j:j + we:stride] += share
        return (dxp[:, :, padding:padding + H, padding:padding + W],)

    return Tensor._from_op(out, (x,), backward, "avg_pool2d")


def _interp_matrix(n_out: int, n_in: int, dtype) -> np.ndarray:
    # half-pixel centres, edge-clamped (align_corners=False)
    m = np.zeros((n_out, n_in), dtype=dtype)
    if n_out == n_in:
        np.fill_diagonal(m, 1)
        return m
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    i0 = np.floor(src).astype(int)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    rows = np.arange(n_out)
    np.add.at(m, (rows, i0), 1 - frac)
    np.add.at(m, (rows, i1), frac)
    return m


def bilinear_resize(x: Tensor, height: int, width: int) -> Tensor:
    B, C, H, W = x.shape
    rh = _interp_matrix(height, H, x.dtype)
    rw = _interp_matrix(width, W, x.dtype)
    out = np.ascontiguousarray(np.matmul(rh, x.data @ rw.T))

    def backward(go):
        return (np.matmul(rh.T, go @ rw),)

    return Tensor._from_op(out, (x,), backward, "bilinear_resize")


# ---------------------------------------------------------------------------
# heads and losses


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` for ``x`` of shape ``(N, D_in)``."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {weight.shape}")
    xd, wd = x.data, weight.data
    out = xd @ wd.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(go):
        grads = [go @ wd, go.T @ xd]
        if bias is not None:
            grads.append(go.sum(axis=0))
        return grads

    return Tensor._from_op(out, parents, backward, "linear")


def flow_norm(x: Tensor) -> Tensor:
    """Per-pixel Euclidean norm over the channel axis: ``(B, C, H, W) -> (B, H, W)``.

    The gradient at an exactly zero vector is taken to be zero.
    """
    xd = x.data
    n = np.sqrt((xd * xd).sum(axis=1))

    def backward(go):
        safe = np.where(n > 0, n, 1)
        scale = np.where(n > 0, go / safe, 0)
        return (xd * scale[:, None],)

    return Tensor._from_op(n, (x,), backward, "flow_norm")


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy of ``(N, K)`` logits against integer labels."""
    labels = np.asarray(labels, dtype=np.int64)
    z = logits.data
    if z.ndim != 2 or labels.shape != (z.shape[0],):
        raise ShapeError(f"cross_entropy: logits {z.shape} vs labels {labels.shape}")
    n = z.shape[0]
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(n)
    loss = np.asarray((lse - shifted[rows, labels]).mean(), dtype=z.dtype)

    def backward(go):
        p = np.exp(shifted - lse[:, None])
        p[rows, labels] -= 1
        return (p * (go / n),)

    return Tensor._from_op(loss, (logits,), backward, "cross_entropy")
