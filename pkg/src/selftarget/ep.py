"""Equilibrium propagation for dense stacks with symmetric weights.

States live in [0, 1] (hard-sigmoid dynamics). The free phase relaxes to a
fixed point of

    s_l <- hardsigmoid( rho(s_{l-1}) W_l + rho(s_{l+1}) W_{l+1}^T + b_l )

with rho = hardsigmoid, the input clamped as layer 0, all states starting at
zero, and every layer updated synchronously from the previous sweep. The top
layer receives bottom-up drive only. The nudged phase adds beta * (target -
s_top) to the top layer's pre-activation, warm-started from the free fixed
point.

The weight update contrasts pre/post activity products between the two
phases. Scaling: the nudge corresponds to the cost 0.5 * ||target - s||^2,
while the mean-squared-error convention used by the backprop path is
||.||^2-based, so the single-sided estimate carries a factor 2/beta (and the
symmetric variant 1/beta) to make both trainers' gradients agree as beta -> 0.

Relaxations stop early when a sweep changes nothing: with clipped dynamics
the iteration hits its fixed point exactly in finite time, so this is an
exact shortcut, not an approximation.
"""

from dataclasses import dataclass

import numpy as np

from .ops import hardsigmoid


@dataclass
class EpState:
    layers: list            # s_1 .. s_L, each [batch, units]
    last_delta: float       # max |change| in the final sweep
    sweeps: int             # sweeps actually run


def _ep_weights(net):
    ws, bs = [], []
    for i in net.param_layers():
        ws.append(net.weights[i])
        bs.append(net.biases[i])
    return ws, bs


def check_ep_network(net):
    """EP needs an all-dense stack with hard-sigmoid activations."""
    for spec in net.specs:
        if spec.kind != "dense":
            raise ValueError(
                f"equilibrium propagation supports dense layers only, got {spec.kind!r}")
        if spec.activation != "hardsigmoid":
            raise ValueError(
                "equilibrium propagation requires hardsigmoid activations, "
                f"got {spec.activation!r}")


def _relax(ws, bs, x, steps, beta=0.0, target=None, init=None, out_mask=None):
    L = len(ws)
    B = x.shape[0]
    if init is None:
        states = [np.zeros((B, w.shape[1]), dtype=x.dtype) for w in ws]
    else:
        states = [s.copy() for s in init]
    rx = hardsigmoid(x)
    delta = np.inf
    sweeps = 0
    for _ in range(steps):
        prev = states
        below = [rx] + [hardsigmoid(s) for s in prev[:-1]]
        states = []
        for l in range(L):
            pre = below[l] @ ws[l] + bs[l]
            if l + 1 < L:
                pre = pre + hardsigmoid(prev[l + 1]) @ ws[l + 1].T
            else:
                if beta != 0.0:
                    pre = pre + x.dtype.type(beta) * (target - prev[l])
            s = hardsigmoid(pre)
            if out_mask is not None and l == L - 1:
                s = s * out_mask
            states.append(s)
        sweeps += 1
        delta = max(float(np.abs(s_new - s_old).max()) if s_new.size else 0.0
                    for s_new, s_old in zip(states, prev))
        if delta == 0.0:
            break
    return EpState(states, delta, sweeps)


def relax_free(net, x, steps, out_mask=None):
    """Relax to the free fixed point from zero states."""
    ws, bs = _ep_weights(net)
    return _relax(ws, bs, x, steps, out_mask=out_mask)


def relax_nudged(net, x, target, beta, steps, init, out_mask=None):
    """Relax with the top layer nudged toward target, warm-started from init."""
    if beta == 0.0:
        raise ValueError("nudged relaxation needs beta != 0")
    ws, bs = _ep_weights(net)
    return _relax(ws, bs, x, steps, beta=beta, target=target,
                  init=init.layers, out_mask=out_mask)


def _phase_activities(x, state):
    return [hardsigmoid(x)] + [hardsigmoid(s) for s in state.layers]


def ep_update(net, x, pos, neg_or_free, beta, symmetric=False):
    """Contrast-of-correlations gradient estimate, in dL/dparam orientation.

    pos is the +beta phase; the second state is the free phase (single-sided)
    or the -beta phase (symmetric). Pruned positions stay zero.
    """
    B = x.shape[0]
    scale = (1.0 / beta if symmetric else 2.0 / beta) / B
    ap = _phase_activities(x, pos)
    an = _phase_activities(x, neg_or_free)
    dws = [None] * len(net.specs)
    dbs = [None] * len(net.specs)
    for k, i in enumerate(net.param_layers()):
        dw = (an[k].T @ an[k + 1] - ap[k].T @ ap[k + 1]) * scale
        db = (an[k + 1].sum(axis=0) - ap[k + 1].sum(axis=0)) * scale
        if net.masks[i] is not None:
            dw *= net.masks[i]
        dws[i] = dw.astype(net.dtype, copy=False)
        dbs[i] = db.astype(net.dtype, copy=False)
    return dws, dbs
