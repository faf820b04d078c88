"""Convolution-family ops on NCHW tensors: padding, conv, transposed conv,
instance norm and the box filter used for windowed statistics."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autograd import Tensor, as_tensor, make_result


def _pad_matrix(n: int, pad: int, mode: str, dtype) -> np.ndarray:
    """(n + 2*pad, n) selection matrix realising a 1-d pad."""
    if mode == "reflect" and pad >= n:
        raise ValueError(f"reflect padding {pad} needs an extent > {pad}, got {n}")
    m = np.zeros((n + 2 * pad, n), dtype=dtype)
    for i in range(n + 2 * pad):
        j = i - pad
        if mode == "reflect":
            if j < 0:
                j = -j
            elif j >= n:
                j = 2 * (n - 1) - j
        elif not 0 <= j < n:
            continue
        m[i, j] = 1
    return m


def pad2d(x: Tensor, pad: int, mode: str = "zero") -> Tensor:
    """Pad the last two axes by ``pad`` on every side (``zero`` or ``reflect``)."""
    if mode not in ("zero", "reflect"):
        raise ValueError(f"unknown padding mode {mode!r}")
    if pad == 0:
        return x
    h, w = x.shape[-2:]
    if mode == "zero":
        widths = [(0, 0)] * (x.ndim - 2) + [(pad, pad), (pad, pad)]

        def backward(g):
            return (g[..., pad:pad + h, pad:pad + w],)

        return make_result(np.pad(x.data, widths), (x,), backward, "pad_zero")

    ph = _pad_matrix(h, pad, mode, x.dtype)
    pw = _pad_matrix(w, pad, mode, x.dtype)
    out = ph @ x.data @ pw.T

    def backward(g):
        return (ph.T @ g @ pw,)

    return make_result(out, (x,), backward, "pad_reflect")


def pad_reflect(x: Tensor, pad: int) -> Tensor:
    return pad2d(x, pad, "reflect")


def conv_output_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def conv_transpose_output_size(n: int, k: int, stride: int, pad: int, output_padding: int = 0) -> int:
    return (n - 1) * stride - 2 * pad + k + output_padding


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding_mode: str = "zero", pad: int = 0) -> Tensor:
    """Cross-correlation of an NCHW input with an (O, I, K, K) kernel."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[1] or weight.shape[2] != weight.shape[3]:
        raise ValueError(f"conv2d shape mismatch: input {x.shape} vs weight {weight.shape}")
    k = weight.shape[2]
    hp, wp = x.shape[2] + 2 * pad, x.shape[3] + 2 * pad
    if k > hp or k > wp:
        raise ValueError(f"conv2d kernel {weight.shape} does not fit padded input {x.shape} (pad {pad})")
    xp = pad2d(x, pad, padding_mode)
    out = _conv2d_valid(xp, weight, stride)
    if bias is not None:
        out = out + bias.reshape((1, -1, 1, 1))
    return out


def _conv2d_valid(x: Tensor, weight: Tensor, stride: int) -> Tensor:
    n, c, h, w = x.shape
    o, _, k, _ = weight.shape
    ho = (h - k) // stride + 1
    wo = (w - k) // stride + 1
    win = sliding_window_view(x.data, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    # (N, Ho, Wo, C, K, K) -> rows of im2col
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * k * k)
    wmat = weight.data.reshape(o, c * k * k)
    out = (cols @ wmat.T).reshape(n, ho, wo, o).transpose(0, 3, 1, 2)

    def backward(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        gw = (gmat.T @ cols).reshape(weight.shape) if weight.requires_grad else None
        gx = None
        if x.requires_grad:
            gcols = (gmat @ wmat).reshape(n, ho, wo, c, k, k)
            gx = np.zeros(x.shape, dtype=g.dtype)
            for i in range(k):
                for j in range(k):
                    gx[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return gx, gw

    return make_result(np.ascontiguousarray(out), (x, weight), backward, "conv2d")


def conv_transpose2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
                     pad: int = 0, output_padding: int = 0) -> Tensor:
    """Fractionally strided convolution; ``weight`` is (C_in, C_out, K, K).

    Output extent is ``(H - 1) * stride - 2 * pad + K + output_padding``.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4 or x.shape[1] != weight.shape[0] or weight.shape[2] != weight.shape[3]:
        raise ValueError(f"conv_transpose2d shape mismatch: input {x.shape} vs weight {weight.shape}")
    if output_padding >= max(stride, 1) and output_padding > 0:
        raise ValueError(f"output_padding {output_padding} must be smaller than stride {stride}")
    n, c, h, w = x.shape
    _, o, k, _ = weight.shape
    ho = conv_transpose_output_size(h, k, stride, pad, output_padding)
    wo = conv_transpose_output_size(w, k, stride, pad, output_padding)
    if ho < 1 or wo < 1:
        raise ValueError(f"conv_transpose2d produces empty output for input {x.shape}, weight {weight.shape}")
    full_h = (h - 1) * stride + k + output_padding
    full_w = (w - 1) * stride + k + output_padding

    xmat = x.data.transpose(0, 2, 3, 1).reshape(n * h * w, c)
    wmat = weight.data.reshape(c, o * k * k)
    cols = (xmat @ wmat).reshape(n, h, w, o, k, k)
    canvas = np.zeros((n, o, full_h, full_w), dtype=cols.dtype)
    for i in range(k):
        for j in range(k):
            canvas[:, :, i:i + stride * h:stride, j:j + stride * w:stride] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    out = canvas[:, :, pad:pad + ho, pad:pad + wo]

    def backward(g):
        gcanvas = np.zeros((n, o, full_h, full_w), dtype=g.dtype)
        gcanvas[:, :, pad:pad + ho, pad:pad + wo] = g
        gcols = np.empty((n, h, w, o, k, k), dtype=g.dtype)
        for i in range(k):
            for j in range(k):
                gcols[:, :, :, :, i, j] = gcanvas[:, :, i:i + stride * h:stride, j:j + stride * w:stride].transpose(0, 2, 3, 1)
        gmat = gcols.reshape(n * h * w, o * k * k)
        gx = (gmat @ wmat.T).reshape(n, h, w, c).transpose(0, 3, 1, 2) if x.requires_grad else None
        gw = (xmat.T @ gmat).reshape(weight.shape) if weight.requires_grad else None
        return gx, gw

    result = make_result(np.ascontiguousarray(out), (x, weight), backward, "conv_transpose2d")
    if bias is not None:
        result = result + bias.reshape((1, -1, 1, 1))
    return result


def instance_norm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None, eps: float = 1e-5) -> Tensor:
    """Per-sample, per-channel standardisation followed by a channel affine."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ValueError(f"instance_norm expects NCHW input, got {x.shape}")
    c = x.shape[1]
    for name, p in (("gamma", gamma), ("beta", beta)):
        if p is not None and p.size != c:
            raise ValueError(f"instance_norm {name} shape {p.shape} does not match channels of {x.shape}")
    mu = x.data.mean(axis=(2, 3), keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=(2, 3), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std

    def backward(g):
        gx = g - g.mean(axis=(2, 3), keepdims=True) - xhat * (g * xhat).mean(axis=(2, 3), keepdims=True)
        return (gx * inv_std,)

    out = make_result(xhat.astype(x.dtype, copy=False), (x,), backward, "instance_norm")
    if gamma is not None:
        out = out * gamma.reshape((1, c, 1, 1))
    if beta is not None:
        out = out + beta.reshape((1, c, 1, 1))
    return out


def box_filter(x: Tensor, size: int) -> Tensor:
    """Mean over every ``size`` x ``size`` window of the last two axes (valid, stride 1)."""
    h, w = x.shape[-2:]
    if size > h or size > w:
        raise ValueError(f"window {size} larger than input {x.shape}")
    scale = 1.0 / (size * size)
    out = sliding_window_view(x.data, (size, size), axis=(-2, -1)).sum(axis=(-2, -1)) * scale

    def backward(g):
        gp = np.pad(g, [(0, 0)] * (g.ndim - 2) + [(size - 1, size - 1)] * 2)
        gx = sliding_window_view(gp, (size, size), axis=(-2, -1)).sum(axis=(-2, -1)) * scale
        return (gx,)

    return make_result(np.ascontiguousarray(out, dtype=x.dtype), (x,), backward, "box_filter")
