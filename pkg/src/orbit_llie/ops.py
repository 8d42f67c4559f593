"""Convolution, transposed convolution, pooling and affine layers.

Convolutions gather patches into a channel-major matrix (one strided copy per
kernel tap) and do a single matrix product; the scatter back to input layout
also loops over kernel taps only, so reductions happen in a fixed order and
results are bit-reproducible.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from .errors import ContractError, DimensionError
from .tensor import Tensor, make_result


def _pad_cnhw(x: np.ndarray, p: int) -> np.ndarray:
    """(N, C, H, W) -> zero-padded channel-major copy (C, N, H + 2p, W + 2p)."""
    n, c, h, w = x.shape
    out = np.zeros((c, n, h + 2 * p, w + 2 * p))
    out[:, :, p : p + h, p : p + w] = x.transpose(1, 0, 2, 3)
    return out


def _gather(xc: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Patch matrix of a (C, N, Hp, Wp) buffer, rows ordered (C, kh, kw), columns (N, ho, wo)."""
    c, n = xc.shape[:2]
    cols = np.empty((c, kh, kw, n, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xc[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride]
    return cols.reshape(c * kh * kw, n * ho * wo)


def _scatter(taps: np.ndarray, out_hw: tuple, stride: int) -> np.ndarray:
    """Scatter-add (C, kh, kw, N, ho, wo) patches into a (C, N, H, W) buffer."""
    c, kh, kw, n, ho, wo = taps.shape
    out = np.zeros((c, n) + tuple(out_hw))
    for i in range(kh):
        for j in range(kw):
            out[:, :, i : i + stride * (ho - 1) + 1 : stride, j : j + stride * (wo - 1) + 1 : stride] += taps[:, i, j]
    return out


def _to_nchw(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a.transpose(1, 0, 2, 3))


def conv2d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation with zero padding.

    Parameters
    ----------
    x : Tensor
        Input of shape ``(N, C, H, W)``.
    kernel : Tensor
        Filters of shape ``(F, C, kh, kw)``.
    bias : Tensor, optional
        Shape ``(F,)``.
    stride, padding : int

    Returns
    -------
    Tensor
        Shape ``(N, F, H', W')`` with ``H' = (H + 2 padding - kh) // stride + 1``.
    """
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and kernel, got {x.shape}, {kernel.shape}")
    if stride < 1 or padding < 0:
        raise ContractError(f"invalid stride={stride} / padding={padding}")
    n, c, h, w = x.shape
    f, kc, kh, kw = kernel.shape
    if kc != c:
        raise DimensionError(f"conv2d: input has {c} channels, kernel expects {kc}")
    hp, wp = h + 2 * padding, w + 2 * padding
    if kh > hp or kw > wp:
        raise DimensionError(f"conv2d: kernel {kh}x{kw} larger than padded input {hp}x{wp}")
    if bias is not None and bias.shape != (f,):
        raise DimensionError(f"conv2d: bias {bias.shape} != ({f},)")
    ho, wo = (hp - kh) // stride + 1, (wp - kw) // stride + 1

    cols = _gather(_pad_cnhw(x.data, padding), kh, kw, stride, ho, wo)
    kmat = kernel.data.reshape(f, -1)
    out = kmat @ cols
    if bias is not None:
        out += bias.data[:, None]
    out = _to_nchw(out.reshape(f, n, ho, wo))

    def grad_fn(g):
        gmat = g.transpose(1, 0, 2, 3).reshape(f, -1)
        dk = (gmat @ cols.T).reshape(kernel.shape) if kernel.requires_grad else None
        dx = None
        if x.requires_grad:
            taps = (kmat.T @ gmat).reshape(c, kh, kw, n, ho, wo)
            full = _scatter(taps, (hp, wp), stride)
            dx = _to_nchw(full[:, :, padding : padding + h, padding : padding + w])
        if bias is None:
            return dx, dk
        return dx, dk, g.sum(axis=(0, 2, 3))

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return make_result(out, parents, grad_fn)


def transposed_conv2d(
    x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0
) -> Tensor:
    """Transposed convolution (the input-gradient of :func:`conv2d`).

    ``kernel`` has shape ``(C_in, C_out, kh, kw)``; output spatial size is
    ``(H - 1) * stride - 2 * padding + kh``.
    """
    if x.ndim != 4 or kernel.ndim != 4:
        raise DimensionError(f"transposed_conv2d expects 4-D operands, got {x.shape}, {kernel.shape}")
    if stride < 1 or padding < 0:
        raise ContractError(f"invalid stride={stride} / padding={padding}")
    n, ci, h, w = x.shape
    kci, co, kh, kw = kernel.shape
    if kci != ci:
        raise DimensionError(f"transposed_conv2d: input has {ci} channels, kernel expects {kci}")
    hf, wf = (h - 1) * stride + kh, (w - 1) * stride + kw
    ho, wo = hf - 2 * padding, wf - 2 * padding
    if ho < 1 or wo < 1:
        raise DimensionError(f"transposed_conv2d: padding {padding} leaves empty output")
    if bias is not None and bias.shape != (co,):
        raise DimensionError(f"transposed_conv2d: bias {bias.shape} != ({co},)")

    xmat = x.data.transpose(1, 0, 2, 3).reshape(ci, -1)
    kmat = kernel.data.reshape(ci, -1)
    taps = (kmat.T @ xmat).reshape(co, kh, kw, n, h, w)
    full = _scatter(taps, (hf, wf), stride)
    out = full[:, :, padding : padding + ho, padding : padding + wo]
    if bias is not None:
        out = out + bias.data[:, None, None, None]
    out = _to_nchw(out)

    def grad_fn(g):
        gc = np.zeros((co, n, hf, wf))
        gc[:, :, padding : padding + ho, padding : padding + wo] = g.transpose(1, 0, 2, 3)
        gcols = _gather(gc, kh, kw, stride, h, w)
        dx = _to_nchw((kmat @ gcols).reshape(ci, n, h, w)) if x.requires_grad else None
        dk = (xmat @ gcols.T).reshape(kernel.shape) if kernel.requires_grad else None
        if bias is None:
            return dx, dk
        return dx, dk, g.sum(axis=(0, 2, 3))

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return make_result(out, parents, grad_fn)


def pool2d(x: Tensor, window: int, mode: str = "max") -> Tensor:
    """Non-overlapping ``window x window`` pooling; ``mode`` is 'max' or 'mean'.

    Max-pool gradients go to the first maximum in row-major window order.
    """
    if x.ndim != 4:
        raise DimensionError(f"pool2d expects (N,C,H,W), got {x.shape}")
    if window < 1:
        raise ContractError(f"window must be >= 1, got {window}")
    n, c, h, w = x.shape
    if h % window or w % window:
        raise DimensionError(f"pool2d: {h}x{w} not divisible by window {window}")
    ho, wo = h // window, w // window
    blocks = x.data.reshape(n, c, ho, window, wo, window)

    if mode == "mean":
        inv = 1.0 / (window * window)
        out = blocks.mean(axis=(3, 5))

        def grad_fn(g):
            gg = np.broadcast_to((g * inv)[:, :, :, None, :, None], blocks.shape)
            return (gg.reshape(x.shape).copy(),)

        return make_result(out, (x,), grad_fn)

    if mode != "max":
        raise ContractError(f"unknown pooling mode {mode!r}")
    flat = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, window * window)
    arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]

    def grad_fn(g):
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, arg[..., None], g[..., None], axis=-1)
        gx = gflat.reshape(n, c, ho, wo, window, window).transpose(0, 1, 2, 4, 3, 5)
        return (gx.reshape(x.shape),)

    return make_result(out, (x,), grad_fn)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """Row-wise affine map ``x @ weight + bias`` with ``weight`` of shape (D, E)."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise DimensionError(f"linear: cannot map {x.shape} with weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise DimensionError(f"linear: bias {bias.shape} != ({weight.shape[1]},)")
    xd, wd = x.data, weight.data
    out = xd @ wd
    if bias is not None:
        out = out + bias.data

    def grad_fn(g):
        dx = g @ wd.T if x.requires_grad else None
        dw = xd.T @ g if weight.requires_grad else None
        if bias is None:
            return dx, dw
        return dx, dw, g.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return make_result(out, parents, grad_fn)
