"""Pure-numpy convolution and pooling kernels.

Fallback path for SELFTARGET_BACKEND=numpy; same signatures and semantics as
the numba module. Layout is [batch, channels, height, width] everywhere,
weights are [out_channels, in_channels, k, k]. Shape validation happens in
ops.py; these kernels assume well-formed inputs.

Edge semantics shared with the numba path: max pooling treats padded cells as
-inf and routes gradient to the first (row-major) argmax on ties; average
pooling divides by the number of real (unpadded) cells in each window.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "numpy"


def _pad2d(x, pad, value=0.0):
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)),
                  constant_values=value)


def _windows(xp, k, stride):
    # [B, C, ho, wo, k, k]; the strided slice lands on exactly the
    # floor((Hp - k) / stride) + 1 valid positions.
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv2d_forward(x, w, b, pad, stride):
    win = _windows(_pad2d(x, pad), w.shape[2], stride)
    # contract (Cin, ki, kj), result [B, ho, wo, Cout]
    y = np.tensordot(win, w, axes=((1, 4, 5), (1, 2, 3)))
    y = np.ascontiguousarray(np.moveaxis(y, 3, 1))
    y += b[None, :, None, None]
    return y


def conv2d_backward(x, w, dy, pad, stride):
    B, Cin, H, W = x.shape
    k = w.shape[2]
    ho, wo = dy.shape[2], dy.shape[3]
    xp = _pad2d(x, pad)
    win = _windows(xp, k, stride)

    db = dy.sum(axis=(0, 2, 3))
    dw = np.tensordot(dy, win, axes=((0, 2, 3), (0, 2, 3)))

    # scatter w^T dy back onto the padded input, one kernel offset at a time;
    # within one (ki, kj) the strided destinations never overlap
    cols = np.tensordot(dy, w, axes=((1,), (0,)))       # [B, ho, wo, Cin, k, k]
    cols = np.moveaxis(cols, 3, 1)                      # [B, Cin, ho, wo, k, k]
    dxp = np.zeros_like(xp)
    for ki in range(k):
        for kj in range(k):
            dxp[:, :, ki:ki + ho * stride:stride,
                kj:kj + wo * stride:stride] += cols[:, :, :, :, ki, kj]
    dx = dxp[:, :, pad:pad + H, pad:pad + W] if pad else dxp
    return np.ascontiguousarray(dx), dw, db


def maxpool2d_forward(x, size, pad, stride):
    B, C, H, W = x.shape
    xp = _pad2d(x, pad, value=-np.inf)
    win = _windows(xp, size, stride)
    ho, wo = win.shape[2], win.shape[3]
    flat = win.reshape(B, C, ho, wo, size * size)
    kidx = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, kidx[..., None], axis=-1)[..., 0]
    ki, kj = kidx // size, kidx % size
    hh = np.arange(ho)[None, None, :, None] * stride + ki - pad
    ww = np.arange(wo)[None, None, None, :] * stride + kj - pad
    idx = hh * W + ww
    dead = ~np.isfinite(y)          # window entirely in padding
    if dead.any():
        y = np.where(dead, x.dtype.type(0), y)
        idx = np.where(dead, -1, idx)
    return np.ascontiguousarray(y.astype(x.dtype, copy=False)), idx.astype(np.int64)


def maxpool2d_backward(x, idx, dy, size, pad, stride):
    B, C, H, W = x.shape
    dxf = np.zeros((B, C, H * W), dtype=x.dtype)
    bb = np.broadcast_to(np.arange(B)[:, None, None, None], idx.shape)
    cc = np.broadcast_to(np.arange(C)[None, :, None, None], idx.shape)
    valid = idx >= 0
    np.add.at(dxf, (bb[valid], cc[valid], idx[valid]), dy[valid])
    return dxf.reshape(B, C, H, W)


def _pool_counts(H, W, size, pad, stride, dtype):
    ones = np.ones((1, 1, H, W), dtype=dtype)
    op = _pad2d(ones, pad)
    return _windows(op, size, stride).sum(axis=(-2, -1))   # [1, 1, ho, wo]


def avgpool2d_forward(x, size, pad, stride):
    B, C, H, W = x.shape
    xp = _pad2d(x, pad)
    sums = _windows(xp, size, stride).sum(axis=(-2, -1))
    counts = _pool_counts(H, W, size, pad, stride, x.dtype)
    y = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return np.ascontiguousarray(y)


def avgpool2d_backward(x, dy, size, pad, stride):
    B, C, H, W = x.shape
    ho, wo = dy.shape[2], dy.shape[3]
    counts = _pool_counts(H, W, size, pad, stride, x.dtype)
    dyc = np.divide(dy, counts, out=np.zeros_like(dy), where=counts > 0)
    dxp = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=x.dtype)
    for ki in range(size):
        for kj in range(size):
            dxp[:, :, ki:ki + ho * stride:stride,
                kj:kj + wo * stride:stride] += dyc
    dx = dxp[:, :, pad:pad + H, pad:pad + W] if pad else dxp
    return np.ascontiguousarray(dx)
