"""Differentiable layer primitives.

Convolution and pooling dispatch to the kernel backend; everything else is
plain numpy. Backward closures produce exact gradients (the gradcheck
suite holds them to 1e-4 relative, 1e-8 for the linear ops).
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from .tensor import Tensor, make_result

CHANNEL_NORM_EPS = 1e-5


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ValueError(f"add: shape mismatch {a.data.shape} vs {b.data.shape}")

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g)
        if b.requires_grad:
            b.accumulate_grad(g)

    return make_result(a.data + b.data, (a, b), backward)


def mul_scalar(a: Tensor, s: float) -> Tensor:
    a = _as_tensor(a)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g * s)

    return make_result(a.data * s, (a,), backward)


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out = np.maximum(x.data, 0.0)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * (x.data > 0.0))

    return make_result(out, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ez = np.exp(d[~pos])
    out[~pos] = ez / (1.0 + ez)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g * out * (1.0 - out))

    return make_result(out, (x,), backward)


def conv1d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation along the last axis plus a per-output-channel bias.

    x: [batch, ch_in, len], w: [ch_out, ch_in, k], b: [ch_out].
    """
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise ValueError("conv1d expects x [b, ci, l] and w [co, ci, k]")
    if x.data.shape[1] != w.data.shape[1]:
        raise ValueError(
            f"conv1d: input has {x.data.shape[1]} channels, kernel wants {w.data.shape[1]}"
        )
    k = w.data.shape[2]
    l_in = x.data.shape[2]
    if l_in + 2 * padding < k:
        raise ValueError(f"conv1d: kernel {k} longer than padded input {l_in + 2 * padding}")
    if b.data.shape != (w.data.shape[0],):
        raise ValueError("conv1d: bias shape must be [ch_out]")
    xd = np.ascontiguousarray(x.data)
    wd = np.ascontiguousarray(w.data)
    out = kernels.conv1d_forward(xd, wd, stride, padding)
    out = out + b.data[None, :, None]

    def backward(g):
        g = np.ascontiguousarray(g)
        if x.requires_grad:
            x.accumulate_grad(kernels.conv1d_backward_input(g, wd, stride, padding, l_in))
        if w.requires_grad:
            w.accumulate_grad(kernels.conv1d_backward_weights(xd, g, stride, padding, k))
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=(0, 2)))

    return make_result(out, (x, w, b), backward)


def maxpool1d(x: Tensor, k: int, stride: int | None = None) -> Tensor:
    x = _as_tensor(x)
    stride = k if stride is None else stride
    l_in = x.data.shape[2]
    if k > l_in:
        raise ValueError(f"maxpool1d: window {k} exceeds length {l_in}")
    xd = np.ascontiguousarray(x.data)
    out, argmax = kernels.maxpool1d_forward(xd, k, stride)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(kernels.maxpool1d_backward(np.ascontiguousarray(g), argmax, l_in))

    return make_result(out, (x,), backward)


def avgpool1d(x: Tensor, k: int, stride: int | None = None) -> Tensor:
    x = _as_tensor(x)
    stride = k if stride is None else stride
    l_in = x.data.shape[2]
    if k > l_in:
        raise ValueError(f"avgpool1d: window {k} exceeds length {l_in}")
    out = kernels.avgpool1d_forward(np.ascontiguousarray(x.data), k, stride)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(kernels.avgpool1d_backward(np.ascontiguousarray(g), k, stride, l_in))

    return make_result(out, (x,), backward)


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    x = _as_tensor(x)
    if factor < 1:
        raise ValueError("upsample factor must be >= 1")
    out = np.repeat(x.data, factor, axis=-1)

    def backward(g):
        if x.requires_grad:
            b, c, l = x.data.shape
            x.accumulate_grad(g.reshape(b, c, l, factor).sum(axis=3))

    return make_result(out, (x,), backward)


def channel_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = CHANNEL_NORM_EPS) -> Tensor:
    """Standardize each channel over the length axis, then learned affine.

    Statistics are per (batch, channel), so inference does not depend on
    batch composition.
    """
    x, gamma, beta = _as_tensor(x), _as_tensor(gamma), _as_tensor(beta)
    d = x.data
    if d.ndim != 3:
        raise ValueError("channel_norm expects [batch, ch, len]")
    mu = d.mean(axis=2, keepdims=True)
    var = ((d - mu) ** 2).mean(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (d - mu) * inv
    out = gamma.data[None, :, None] * xhat + beta.data[None, :, None]

    def backward(g):
        if beta.requires_grad:
            beta.accumulate_grad(g.sum(axis=(0, 2)))
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xhat).sum(axis=(0, 2)))
        if x.requires_grad:
            gx_hat = g * gamma.data[None, :, None]
            m1 = gx_hat.mean(axis=2, keepdims=True)
            m2 = (gx_hat * xhat).mean(axis=2, keepdims=True)
            x.accumulate_grad(inv * (gx_hat - m1 - xhat * m2))

    return make_result(out, (x, gamma, beta), backward)


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x [batch, f] @ w [f, o] + b [o]."""
    x, w, b = _as_tensor(x), _as_tensor(w), _as_tensor(b)
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ValueError(
            f"dense: incompatible shapes {x.data.shape} @ {w.data.shape}"
        )
    out = x.data @ w.data + b.data[None, :]

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g @ w.data.T)
        if w.requires_grad:
            w.accumulate_grad(x.data.T @ g)
        if b.requires_grad:
            b.accumulate_grad(g.sum(axis=0))

    return make_result(out, (x, w, b), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """[batch, ch, len] -> [batch, ch] mean over length."""
    x = _as_tensor(x)
    l = x.data.shape[2]
    out = x.data.mean(axis=2)

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(np.repeat(g[:, :, None], l, axis=2) / l)

    return make_result(out, (x,), backward)


def mean_channels(xs: list[Tensor]) -> Tensor:
    """Element-wise mean of same-shape tensors (encoder feature merging)."""
    if not xs:
        raise ValueError("mean_channels needs at least one tensor")
    xs = [_as_tensor(x) for x in xs]
    shape = xs[0].data.shape
    for x in xs[1:]:
        if x.data.shape != shape:
            raise ValueError("mean_channels: shape mismatch across encoders")
    n = len(xs)
    out = xs[0].data.copy()
    for x in xs[1:]:
        out += x.data
    out /= n

    def backward(g):
        share = g / n
        for x in xs:
            if x.requires_grad:
                x.accumulate_grad(share)

    return make_result(out, tuple(xs), backward)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate along the channel axis (decoder skip connections)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape[0] != b.data.shape[0] or a.data.shape[2] != b.data.shape[2]:
        raise ValueError("concat_channels: batch/length mismatch")
    ca = a.data.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(g[:, :ca, :])
        if b.requires_grad:
            b.accumulate_grad(g[:, ca:, :])

    return make_result(out, (a, b), backward)


def squeeze_channel(x: Tensor) -> Tensor:
    """[batch, 1, len] -> [batch, len]."""
    x = _as_tensor(x)
    if x.data.shape[1] != 1:
        raise ValueError("squeeze_channel expects a single channel")
    b, _, l = x.data.shape
    out = x.data[:, 0, :]

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g.reshape(b, 1, l))

    return make_result(out, (x,), backward)


def flatten_vector(x: Tensor) -> Tensor:
    """[batch, 1] -> [batch]."""
    x = _as_tensor(x)
    if x.data.ndim != 2 or x.data.shape[1] != 1:
        raise ValueError("flatten_vector expects [batch, 1]")
    out = x.data[:, 0]

    def backward(g):
        if x.requires_grad:
            x.accumulate_grad(g[:, None])

    return make_result(out, (x,), backward)
