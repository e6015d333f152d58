"""Differentiable layers: convolution, fully connected, batch normalisation.

Convolutions run channels-last internally (``conv2d_nhwc``); ``conv2d`` is
the channels-first entry point and transposes around it.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .tensor import ShapeError, Tensor, _make


_ONES: dict = {}


def colsum(a: np.ndarray) -> np.ndarray:
    """Column sums of a 2-d array through BLAS (much faster than ``sum(axis=0)``)."""
    key = (a.shape[0], a.dtype)
    ones = _ONES.get(key)
    if ones is None:
        ones = _ONES[key] = np.ones(a.shape[0], dtype=a.dtype)
    return ones @ a


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if not pad:
        return x
    n, h, w, c = x.shape
    xp = np.zeros((n, h + 2 * pad, w + 2 * pad, c), dtype=x.dtype)
    xp[:, pad:pad + h, pad:pad + w, :] = x
    return xp


def _im2col(x: np.ndarray, kh: int, kw: int, pad: int) -> tuple[np.ndarray, tuple[int, int]]:
    # [N,H,W,C] -> [N*Ho*Wo, kh*kw*C] via a strided window view and one copy
    xp = np.ascontiguousarray(_pad(x, pad))
    n, hp, wp, c = xp.shape
    ho, wo = hp - kh + 1, wp - kw + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"kernel {kh}x{kw} larger than padded input {(hp, wp)}")
    s0, s1, s2, s3 = xp.strides
    view = as_strided(xp, (n, ho, wo, kh, kw, c), (s0, s1, s2, s1, s2, s3), writeable=False)
    return view.reshape(-1, kh * kw * c), (ho, wo)


def conv2d_nhwc(x: Tensor, kernel: Tensor, padding: int | None = None) -> Tensor:
    """Stride-1 cross-correlation on [N,H,W,C] input with an [F,C,kh,kw] kernel."""
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input and kernel, got {x.shape} and {kernel.shape}")
    f, c, kh, kw = kernel.shape
    if x.shape[3] != c:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape[3]}, kernel {c}")
    if padding is None:
        if kh != kw or kh % 2 == 0:
            raise ShapeError("same-padding needs an odd square kernel")
        padding = kh // 2
    if padding > min(kh, kw) - 1:
        raise ShapeError("padding larger than kernel-1 is not supported")
    xd, wd = x.data, kernel.data
    cols, (ho, wo) = _im2col(xd, kh, kw, padding)
    wm = wd.transpose(2, 3, 1, 0).reshape(kh * kw * c, f)
    out = (cols @ wm).reshape(xd.shape[0], ho, wo, f)

    def back(g):
        gx = gw = None
        if x.requires_grad:
            # full correlation with the flipped kernel, channels swapped
            gcols, _ = _im2col(g, kh, kw, kh - 1 - padding)
            wflip = wd[:, :, ::-1, ::-1].transpose(2, 3, 0, 1).reshape(kh * kw * f, c)
            gx = (gcols @ wflip).reshape(xd.shape)
        if kernel.requires_grad:
            gw = (cols.T @ g.reshape(-1, f)).reshape(kh, kw, c, f).transpose(3, 2, 0, 1)
        return gx, gw

    return _make(out, (x, kernel), back)


def to_nhwc(x: Tensor) -> Tensor:
    return _make(np.ascontiguousarray(x.data.transpose(0, 2, 3, 1)), (x,),
                 lambda g: (np.ascontiguousarray(g.transpose(0, 3, 1, 2)),))


def to_nchw(x: Tensor) -> Tensor:
    return _make(np.ascontiguousarray(x.data.transpose(0, 3, 1, 2)), (x,),
                 lambda g: (np.ascontiguousarray(g.transpose(0, 2, 3, 1)),))


def conv2d(x: Tensor, kernel: Tensor, padding: int | None = None) -> Tensor:
    """Stride-1 cross-correlation, [N,C,H,W] x [F,C,kh,kw] -> [N,F,H',W'].

    ``padding=None`` zero-pads so the spatial size is preserved.
    """
    if x.data.ndim != 4:
        raise ShapeError(f"conv2d expects 4-d input, got {x.shape}")
    if kernel.data.ndim == 4 and x.shape[1] != kernel.shape[1]:
        raise ShapeError(f"conv2d channel mismatch: input {x.shape[1]}, kernel {kernel.shape[1]}")
    return to_nchw(conv2d_nhwc(to_nhwc(x), kernel, padding))


def matmul(x: Tensor, w: Tensor) -> Tensor:
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"matmul shapes incompatible: {x.shape} @ {w.shape}")
    xd, wd = x.data, w.data
    return _make(xd @ wd, (x, w), lambda g: (g @ wd.T, xd.T @ g))


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` with ``b`` broadcast over the batch."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense shapes incompatible: {x.shape} @ {w.shape}")
    if b is None:
        return matmul(x, w)
    if b.shape != (w.shape[1],):
        raise ShapeError(f"dense bias shape {b.shape} does not match {w.shape[1]} outputs")
    xd, wd = x.data, w.data
    return _make(xd @ wd + b.data, (x, w, b),
                 lambda g: (g @ wd.T, xd.T @ g, colsum(g)))


def flatten(x: Tensor) -> Tensor:
    n = x.shape[0]
    old = x.shape
    return _make(x.data.reshape(n, -1), (x,), lambda g: (g.reshape(old),))


class BatchNormState:
    """Running statistics of one batch-norm site (shared by shared cores)."""

    def __init__(self, channels: int, dtype=np.float32, momentum: float = 0.9):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)
        self.momentum = momentum


def batchnorm(x: Tensor, gain: Tensor, bias: Tensor, mode: str = "train",
              state: BatchNormState | None = None, eps: float = 1e-5,
              channels_last: bool = False) -> Tensor:
    """Per-channel normalisation over every axis except the channel axis.

    The channel axis is 1 (``[N,C]`` or ``[N,C,H,W]``) unless ``channels_last``.
    """
    xd = x.data
    if xd.ndim not in (2, 4):
        raise ShapeError(f"batchnorm expects a 2-d or 4-d input, got {x.shape}")
    shape = xd.shape
    if xd.ndim == 2 or channels_last:
        c = shape[-1]
        flat = xd.reshape(-1, c)
        to_flat = lambda a: a.reshape(-1, c)
        from_flat = lambda a: a.reshape(shape)
    else:
        c = shape[1]
        flat = xd.transpose(0, 2, 3, 1).reshape(-1, c)
        to_flat = lambda a: a.transpose(0, 2, 3, 1).reshape(-1, c)
        from_flat = lambda a: np.ascontiguousarray(
            a.reshape(shape[0], shape[2], shape[3], c).transpose(0, 3, 1, 2))
    if gain.shape != (c,) or bias.shape != (c,):
        raise ShapeError(f"batchnorm parameters must have shape ({c},)")
    gd = gain.data

    if mode == "train":
        if shape[0] < 2:
            raise ValueError("batchnorm in train mode needs at least 2 samples")
        m = flat.shape[0]
        mean = colsum(flat) / m
        centred = flat - mean
        var = colsum(centred * centred) / m
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = centred * inv_std
        if state is not None:
            mom = state.momentum
            state.mean[...] = mom * state.mean + (1 - mom) * mean
            state.var[...] = mom * state.var + (1 - mom) * var * (m / (m - 1))

        def back(g):
            gf = to_flat(g)
            gbias = colsum(gf)
            ggain = colsum(gf * xhat)
            # d/dx of gain * xhat with batch statistics
            gx = (gd * inv_std / m) * (m * gf - gbias - xhat * ggain)
            return from_flat(gx), ggain, gbias
    elif mode == "eval":
        if state is None:
            raise ValueError("eval-mode batchnorm needs running statistics")
        inv_std = (1.0 / np.sqrt(state.var + eps)).astype(xd.dtype)
        xhat = (flat - state.mean) * inv_std

        def back(g):
            gf = to_flat(g)
            return from_flat(gf * (gd * inv_std)), colsum(gf * xhat), colsum(gf)
    else:
        raise ValueError(f"unknown batchnorm mode {mode!r}")

    out = xhat * gd + bias.data
    return _make(from_flat(out.astype(xd.dtype, copy=False)), (x, gain, bias), back)
