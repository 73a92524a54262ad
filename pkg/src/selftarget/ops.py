"""Elementwise activations and the shape-checked kernel entry points."""

import numpy as np

from .backend import kernels


class ShapeError(ValueError):
    pass


def relu(x):
    return np.maximum(x, 0)


def relu_grad(x):
    return (x > 0).astype(x.dtype)


def hardsigmoid(x):
    return np.clip(x, 0, 1)


def hardsigmoid_grad(x):
    # zero at the clip boundaries, not just outside them
    return ((x > 0) & (x < 1)).astype(x.dtype)


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_grad(x):
    s = sigmoid(x)
    return s * (1 - s)


def identity(x):
    return x


def identity_grad(x):
    return np.ones_like(x)


ACTIVATIONS = {
    "relu": (relu, relu_grad),
    "hardsigmoid": (hardsigmoid, hardsigmoid_grad),
    "sigmoid": (sigmoid, sigmoid_grad),
    "none": (identity, identity_grad),
}


def activate(x, kind):
    try:
        return ACTIVATIONS[kind][0](x)
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None


def activate_grad(x, kind):
    try:
        return ACTIVATIONS[kind][1](x)
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}") from None


def out_size(n, k, pad, stride):
    """Output length of a k-window sliding over n cells with pad and stride."""
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if pad < 0:
        raise ShapeError(f"padding must be >= 0, got {pad}")
    span = n + 2 * pad - k
    if span < 0:
        raise ShapeError(
            f"window {k} larger than padded input {n + 2 * pad}")
    return span // stride + 1


def matmul(x, w):
    """x @ w with a shape error that names both operands."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(
            f"cannot multiply activations of shape {x.shape} by weights of "
            f"shape {w.shape}")
    return x @ w


def _check_input(x):
    """Accept [B, C, H, W], or one [C, H, W] image promoted to a batch of 1."""
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise ShapeError(f"expected [batch, C, H, W] input, got shape {x.shape}")
    return x, False


def conv2d(x, w, b, pad, stride):
    x, single = _check_input(x)
    if w.ndim != 4 or w.shape[2] != w.shape[3]:
        raise ShapeError(f"conv weights must be [Cout, Cin, k, k], got {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"input channels {x.shape[1]} do not match weight channels {w.shape[1]}")
    out_size(x.shape[2], w.shape[2], pad, stride)
    out_size(x.shape[3], w.shape[3], pad, stride)
    y = kernels().conv2d_forward(x, w, b, pad, stride)
    return y[0] if single else y


def conv2d_grad(x, w, dy, pad, stride):
    return kernels().conv2d_backward(x, w, dy, pad, stride)


def pool2d(x, size, pad, stride, mode):
    x, single = _check_input(x)
    if pad >= size:
        raise ShapeError(f"pool padding {pad} must be smaller than window {size}")
    out_size(x.shape[2], size, pad, stride)
    out_size(x.shape[3], size, pad, stride)
    if mode == "max":
        y, idx = kernels().maxpool2d_forward(x, size, pad, stride)
    elif mode == "avg":
        y, idx = kernels().avgpool2d_forward(x, size, pad, stride), None
    else:
        raise ValueError(f"unknown pool mode {mode!r}")
    if single:
        return y[0], (idx[0] if idx is not None else None)
    return y, idx


def pool2d_grad(x, idx, dy, size, pad, stride, mode):
    if mode == "max":
        return kernels().maxpool2d_backward(x, idx, dy, size, pad, stride)
    if mode == "avg":
        return kernels().avgpool2d_backward(x, dy, size, pad, stride)
    raise ValueError(f"unknown pool mode {mode!r}")
