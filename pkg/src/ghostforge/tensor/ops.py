"""Differentiable operations.

Shapes must match exactly except in ``scale_channels`` (``(B, C, 1, 1)``
gains) and ``scale_spatial`` (``(B, 1, H, W)`` gains); nothing else
broadcasts.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .core import ShapeError, Tensor, as_tensor, make


def _same_shape(a, b, op):
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} differ")


def _need_4d(x, op):
    if x.ndim != 4:
        raise ShapeError(f"{op}: expected (batch, channels, height, width), got {x.shape}")


# ------------------------------------------------------------- elementwise

def add(a, b):
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b)
        return make(a.data + c, (a,), lambda g: (g,), "add_scalar")
    _same_shape(a, b, "add")
    return make(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b):
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b)
        return make(a.data - c, (a,), lambda g: (g,), "sub_scalar")
    _same_shape(a, b, "sub")
    return make(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def neg(a):
    return make(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b):
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b)
        return make(a.data * c, (a,), lambda g: (g * c,), "mul_scalar")
    _same_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return make(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def relu(x):
    mask = x.data > 0.0  # relu'(0) = 0
    return make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x, slope=0.2):
    mask = x.data > 0.0
    factor = np.where(mask, 1.0, slope)
    return make(x.data * factor, (x,), lambda g: (g * factor,), "leaky_relu")


def _sigmoid(v):
    # two-sided form keeps exp from overflowing
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x):
    s = _sigmoid(x.data)
    return make(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(x):
    t = np.tanh(x.data)
    return make(t, (x,), lambda g: (g * (1.0 - t * t),), "tanh")


# --------------------------------------------------------------- reductions

def sum(x):
    shape = x.shape
    return make(np.array(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),), "sum")


def mean(x):
    shape, n = x.shape, x.size
    return make(np.array(x.data.mean()), (x,), lambda g: (np.full(shape, float(g) / n),), "mean")


def mean_square(a):
    d = a.data
    n = d.size
    return make(np.array(np.mean(d * d)), (a,), lambda g: (g * 2.0 * d / n,), "mean_square")


def mse(a, b):
    _same_shape(a, b, "mse")
    d = a.data - b.data
    n = d.size

    def backward(g):
        ga = g * 2.0 * d / n
        return ga, -ga

    return make(np.array(np.mean(d * d)), (a, b), backward, "mse")


def global_avg_pool(x):
    _need_4d(x, "global_avg_pool")
    _, _, h, w = x.shape
    shape = x.shape

    def backward(g):
        return (np.broadcast_to(g / (h * w), shape).copy(),)

    return make(x.data.mean(axis=(2, 3), keepdims=True), (x,), backward, "global_avg_pool")


# ------------------------------------------------------------ broadcasting

def scale_channels(x, r):
    """Multiply each channel of ``x`` by the matching gain in ``r``."""
    _need_4d(x, "scale_channels")
    b, c = x.shape[:2]
    if r.shape != (b, c, 1, 1):
        raise ShapeError(f"scale_channels: gains {r.shape} do not match {(b, c, 1, 1)}")
    xd, rd = x.data, r.data

    def backward(g):
        return g * rd, (g * xd).sum(axis=(2, 3), keepdims=True)

    return make(xd * rd, (x, r), backward, "scale_channels")


def scale_spatial(x, w):
    """Multiply every channel of ``x`` by a per-site weight map ``w``."""
    _need_4d(x, "scale_spatial")
    b, _, h, wd = x.shape
    if w.shape != (b, 1, h, wd):
        raise ShapeError(f"scale_spatial: weights {w.shape} do not match {(b, 1, h, wd)}")
    xd, md = x.data, w.data

    def backward(g):
        return g * md, (g * xd).sum(axis=1, keepdims=True)

    return make(xd * md, (x, w), backward, "scale_spatial")


# ---------------------------------------------------------------- resampling

def upsample_nearest(x, factor):
    _need_4d(x, "upsample_nearest")
    f = int(factor)
    if f < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if f == 1:
        return x
    b, c, h, w = x.shape
    out = np.repeat(np.repeat(x.data, f, axis=2), f, axis=3)

    def backward(g):
        return (g.reshape(b, c, h, f, w, f).sum(axis=(3, 5)),)

    return make(out, (x,), backward, "upsample_nearest")


def maxpool2(x):
    _need_4d(x, "maxpool2")
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2: spatial size {(h, w)} must be even")
    blocks = x.data.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(b, c, h // 2, w // 2, 4)
    idx = blocks.argmax(axis=-1)  # first maximum wins ties
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        gb = np.zeros((b, c, h // 2, w // 2, 4))
        np.put_along_axis(gb, idx[..., None], g[..., None], axis=-1)
        gb = gb.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return (gb.reshape(b, c, h, w),)

    return make(out, (x,), backward, "maxpool2")


def concat_channels(xs):
    xs = list(xs)
    for t in xs:
        _need_4d(t, "concat_channels")
    ref = xs[0].shape
    for t in xs[1:]:
        if t.shape[0] != ref[0] or t.shape[2:] != ref[2:]:
            raise ShapeError(f"concat_channels: {t.shape} incompatible with {ref}")
    bounds = np.cumsum([0] + [t.shape[1] for t in xs])

    def backward(g):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(xs)))

    return make(np.concatenate([t.data for t in xs], axis=1), xs, backward, "concat_channels")


def _stack(xs, op):
    ref = xs[0].shape
    for t in xs[1:]:
        if t.shape != ref:
            raise ShapeError(f"{op}: shapes {ref} and {t.shape} differ")

    def backward(g):
        return tuple(g[i] for i in range(len(xs)))

    return make(np.stack([t.data for t in xs]), xs, backward, "stack")


def _select(x, i):
    shape = x.shape

    def backward(g):
        out = np.zeros(shape)
        out[i] = g
        return (out,)

    return make(x.data[i], (x,), backward, "select")


def softmax_over(xs):
    """Softmax across ``k`` same-shaped tensors, independently at every element."""
    xs = list(xs)
    if not xs:
        raise ValueError("softmax_over needs at least one tensor")
    stacked = _stack(xs, "softmax_over")
    v = stacked.data
    e = np.exp(v - v.max(axis=0, keepdims=True))
    s = e / e.sum(axis=0, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=0, keepdims=True)),)

    probs = make(s, (stacked,), backward, "softmax_over")
    return [_select(probs, i) for i in range(len(xs))]


# ------------------------------------------------------------- convolution

def conv_output_size(n, k, stride=1, dilation=1, padding=0):
    return (n + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def _windows(xp, kh, kw, ho, wo, stride, dilation):
    s0, s1, s2, s3 = xp.strides
    b, c = xp.shape[:2]
    return as_strided(
        xp,
        shape=(b, c, kh, kw, ho, wo),
        strides=(s0, s1, s2 * dilation, s3 * dilation, s2 * stride, s3 * stride),
        writeable=False,
    )


def conv2d(x, w, b=None, stride=1, dilation=1, padding=0):
    """2-D cross-correlation with stride, dilation and zero padding."""
    _need_4d(x, "conv2d")
    if w.ndim != 4:
        raise ShapeError(f"conv2d: weight must be (out, in, kh, kw), got {w.shape}")
    n, c, h, wd = x.shape
    o, ci, kh, kw = w.shape
    if c != ci:
        raise ShapeError(f"conv2d: input has {c} channels, weight expects {ci}")
    if b is not None and b.shape != (o,):
        raise ShapeError(f"conv2d: bias {b.shape} does not match {o} output channels")
    ext_h, ext_w = dilation * (kh - 1) + 1, dilation * (kw - 1) + 1
    hp, wp = h + 2 * padding, wd + 2 * padding
    if ext_h > hp or ext_w > wp:
        raise ShapeError(
            f"conv2d: kernel extent {(ext_h, ext_w)} exceeds padded input {(hp, wp)}"
        )
    ho = (hp - ext_h) // stride + 1
    wo = (wp - ext_w) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = _windows(np.ascontiguousarray(xp), kh, kw, ho, wo, stride, dilation)
    wdat = w.data
    out = np.tensordot(wdat, cols, axes=([1, 2, 3], [1, 2, 3])).transpose(1, 0, 2, 3)
    if b is not None:
        out = out + b.data[None, :, None, None]
    out = np.ascontiguousarray(out)

    def backward(g):
        gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 4, 5])) if w.requires_grad else None
        gb = g.sum(axis=(0, 2, 3)) if b is not None and b.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = np.tensordot(wdat, g, axes=([0], [1]))  # (C, kh, kw, B, Ho, Wo)
            gxp = np.zeros((n, c, hp, wp))
            for i in range(kh):
                for j in range(kw):
                    r0, c0 = i * dilation, j * dilation
                    gxp[:, :, r0 : r0 + stride * (ho - 1) + 1 : stride,
                        c0 : c0 + stride * (wo - 1) + 1 : stride] += gcols[:, i, j].transpose(1, 0, 2, 3)
            gx = gxp[:, :, padding : padding + h, padding : padding + wd]
        return (gx, gw) if b is None else (gx, gw, gb)

    parents = (x, w) if b is None else (x, w, b)
    return make(out, parents, backward, "conv2d")
