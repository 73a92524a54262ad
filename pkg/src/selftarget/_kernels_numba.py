"""Compiled convolution and pooling kernels.

Same signatures and edge semantics as _kernels_numpy (which holds the
reference docs). Plain njit loops, single-threaded: results must be
reproducible run to run, and the training loop owns the only core anyway.
"""

import numpy as np
from numba import njit

BACKEND = "numba"


@njit(cache=True)
def _im2col(x, k, pad, stride, ho, wo):
    """Patch matrix [B*ho*wo, Cin*k*k]; out-of-image positions read as 0."""
    B, Cin, H, W = x.shape
    cols = np.zeros((B * ho * wo, Cin * k * k), dtype=x.dtype)
    for n in range(B):
        for oh in range(ho):
            h0 = oh * stride - pad
            for ow in range(wo):
                w0 = ow * stride - pad
                row = (n * ho + oh) * wo + ow
                for ci in range(Cin):
                    base = ci * k * k
                    for ki in range(k):
                        h = h0 + ki
                        if h < 0 or h >= H:
                            continue
                        for kj in range(k):
                            ww = w0 + kj
                            if 0 <= ww < W:
                                cols[row, base + ki * k + kj] = x[n, ci, h, ww]
    return cols


@njit(cache=True)
def _col2im(cols, B, Cin, H, W, k, pad, stride, ho, wo):
    """Transpose of _im2col: scatter-add patch rows back into image cells."""
    x = np.zeros((B, Cin, H, W), dtype=cols.dtype)
    for n in range(B):
        for oh in range(ho):
            h0 = oh * stride - pad
            for ow in range(wo):
                w0 = ow * stride - pad
                row = (n * ho + oh) * wo + ow
                for ci in range(Cin):
                    base = ci * k * k
                    for ki in range(k):
                        h = h0 + ki
                        if h < 0 or h >= H:
                            continue
                        for kj in range(k):
                            ww = w0 + kj
                            if 0 <= ww < W:
                                x[n, ci, h, ww] += cols[row, base + ki * k + kj]
    return x


@njit(cache=True)
def _conv2d_forward(x, w, b, pad, stride):
    B, Cin, H, W = x.shape
    Cout, _, k, _ = w.shape
    ho = (H + 2 * pad - k) // stride + 1
    wo = (W + 2 * pad - k) // stride + 1
    cols = _im2col(x, k, pad, stride, ho, wo)
    wmat = np.ascontiguousarray(w.reshape(Cout, Cin * k * k).T)
    out = np.dot(cols, wmat)                      # [B*ho*wo, Cout]
    y = np.empty((B, Cout, ho, wo), dtype=x.dtype)
    for n in range(B):
        for oh in range(ho):
            for ow in range(wo):
                row = (n * ho + oh) * wo + ow
                for co in range(Cout):
                    y[n, co, oh, ow] = out[row, co] + b[co]
    return y


@njit(cache=True)
def _conv2d_backward(x, w, dy, pad, stride):
    B, Cin, H, W = x.shape
    Cout, _, k, _ = w.shape
    ho, wo = dy.shape[2], dy.shape[3]
    gmat = np.empty((B * ho * wo, Cout), dtype=dy.dtype)
    db = np.zeros(Cout, dtype=dy.dtype)
    for n in range(B):
        for oh in range(ho):
            for ow in range(wo):
                row = (n * ho + oh) * wo + ow
                for co in range(Cout):
                    g = dy[n, co, oh, ow]
                    gmat[row, co] = g
                    db[co] += g
    cols = _im2col(x, k, pad, stride, ho, wo)
    dwmat = np.dot(gmat.T.copy(), cols)           # [Cout, Cin*k*k]
    wmat = np.ascontiguousarray(w.reshape(Cout, Cin * k * k))
    dcols = np.dot(gmat, wmat)                    # [B*ho*wo, Cin*k*k]
    dx = _col2im(dcols, B, Cin, H, W, k, pad, stride, ho, wo)
    return dx, dwmat.reshape(w.shape).copy(), db


@njit(cache=True)
def _maxpool2d_forward(x, size, pad, stride):
    B, C, H, W = x.shape
    ho = (H + 2 * pad - size) // stride + 1
    wo = (W + 2 * pad - size) // stride + 1
    y = np.zeros((B, C, ho, wo), dtype=x.dtype)
    idx = np.empty((B, C, ho, wo), dtype=np.int64)
    for n in range(B):
        for c in range(C):
            for oh in range(ho):
                h0 = oh * stride - pad
                for ow in range(wo):
                    w0 = ow * stride - pad
                    best = -np.inf
                    besti = -1
                    for ki in range(size):
                        h = h0 + ki
                        if h < 0 or h >= H:
                            continue
                        for kj in range(size):
                            ww = w0 + kj
                            if ww < 0 or ww >= W:
                                continue
                            v = x[n, c, h, ww]
                            if v > best:        # strict: first max wins ties
                                best = v
                                besti = h * W + ww
                    idx[n, c, oh, ow] = besti
                    if besti >= 0:
                        y[n, c, oh, ow] = best
    return y, idx


@njit(cache=True)
def _maxpool2d_backward(x, idx, dy, size, pad, stride):
    B, C, H, W = x.shape
    ho, wo = idx.shape[2], idx.shape[3]
    dx = np.zeros((B, C, H * W), dtype=x.dtype)
    for n in range(B):
        for c in range(C):
            for oh in range(ho):
                for ow in range(wo):
                    i = idx[n, c, oh, ow]
                    if i >= 0:
                        dx[n, c, i] += dy[n, c, oh, ow]
    return dx.reshape(B, C, H, W)


@njit(cache=True)
def _avgpool2d_forward(x, size, pad, stride):
    B, C, H, W = x.shape
    ho = (H + 2 * pad - size) // stride + 1
    wo = (W + 2 * pad - size) // stride + 1
    y = np.zeros((B, C, ho, wo), dtype=x.dtype)
    for n in range(B):
        for c in range(C):
            for oh in range(ho):
                h0 = oh * stride - pad
                for ow in range(wo):
                    w0 = ow * stride - pad
                    acc = 0.0
                    cnt = 0
                    for ki in range(size):
                        h = h0 + ki
                        if h < 0 or h >= H:
                            continue
                        for kj in range(size):
                            ww = w0 + kj
                            if ww < 0 or ww >= W:
                                continue
                            acc += x[n, c, h, ww]
                            cnt += 1
                    if cnt > 0:
                        y[n, c, oh, ow] = acc / cnt
    return y


@njit(cache=True)
def _avgpool2d_backward(x, dy, size, pad, stride):
    B, C, H, W = x.shape
    ho, wo = dy.shape[2], dy.shape[3]
    dx = np.zeros_like(x)
    for n in range(B):
        for c in range(C):
            for oh in range(ho):
                h0 = oh * stride - pad
                for ow in range(wo):
                    w0 = ow * stride - pad
                    cnt = 0
                    for ki in range(size):
                        h = h0 + ki
                        if 0 <= h < H:
                            for kj in range(size):
                                ww = w0 + kj
                                if 0 <= ww < W:
                                    cnt += 1
                    if cnt == 0:
                        continue
                    g = dy[n, c, oh, ow] / cnt
                    for ki in range(size):
                        h = h0 + ki
                        if h < 0 or h >= H:
                            continue
                        for kj in range(size):
                            ww = w0 + kj
                            if ww < 0 or ww >= W:
                                continue
                            dx[n, c, h, ww] += g
    return dx


def conv2d_forward(x, w, b, pad, stride):
    return _conv2d_forward(x, w, b, pad, stride)


def conv2d_backward(x, w, dy, pad, stride):
    return _conv2d_backward(x, w, dy, pad, stride)


def maxpool2d_forward(x, size, pad, stride):
    return _maxpool2d_forward(x, size, pad, stride)


def maxpool2d_backward(x, idx, dy, size, pad, stride):
    return _maxpool2d_backward(x, idx, dy, size, pad, stride)


def avgpool2d_forward(x, size, pad, stride):
    return _avgpool2d_forward(x, size, pad, stride)


def avgpool2d_backward(x, dy, size, pad, stride):
    return _avgpool2d_backward(x, dy, size, pad, stride)
