"""Reverse-mode gradients through a forward cache.

Two entry points into the chain: grad_output for losses differentiating the
network output (after the last activation and dropout), and grad_logits for
losses defined on the last pre-activation directly (softmax cross-entropy).
In the logits case the final activation and its dropout sit outside the loss
path and contribute nothing.
"""

from dataclasses import dataclass

import numpy as np

from . import ops


@dataclass
class Gradients:
    weights: list      # aligned with net.specs; None for layers without params
    biases: list
    x: np.ndarray      # gradient wrt the network input


def backprop(net, cache, grad_output=None, grad_logits=None):
    if (grad_output is None) == (grad_logits is None):
        raise ValueError("pass exactly one of grad_output, grad_logits")
    last = len(net.specs) - 1
    if grad_logits is not None and net.specs[last].kind != "dense":
        raise ValueError("logit gradients need a dense final layer")

    dws = [None] * len(net.specs)
    dbs = [None] * len(net.specs)
    g = grad_output    # dL/d(current layer output after dropout)

    for i in range(last, -1, -1):
        spec = net.specs[i]
        inp = cache.inputs[i]
        if spec.kind in ("dense", "conv"):
            if grad_logits is not None and i == last:
                dz = grad_logits
            else:
                if cache.masks[i] is not None:
                    g = g * cache.masks[i]
                dz = g * ops.activate_grad(cache.pre[i], spec.activation)
            if spec.kind == "dense":
                dw = inp.T @ dz
                db = dz.sum(axis=0)
                g = dz @ net.weights[i].T
            else:
                g, dw, db = ops.conv2d_grad(inp, net.weights[i], dz,
                                            spec.padding, spec.stride)
            if net.masks[i] is not None:
                dw *= net.masks[i]
            dws[i] = dw
            dbs[i] = db
        else:
            if cache.masks[i] is not None:
                g = g * cache.masks[i]
            if spec.kind == "pool":
                g = ops.pool2d_grad(inp, cache.pool_idx[i], g, spec.kernel,
                                    spec.padding, spec.stride, spec.pool)
            else:
                g = g.reshape(inp.shape)
    if cache.input_mask is not None:
        g = g * cache.input_mask
    return Gradients(dws, dbs, g)
