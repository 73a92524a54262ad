"""Optimizers and learning-rate schedules.

step() takes gradients in dL/dparam orientation and descends. Learning rates
arrive per call as one value per parameterized layer, so schedules and
per-layer base rates stay the caller's business.
"""

import numpy as np


class Sgd:
    def step(self, params, grads, lrs, masks=None):
        for i, ((w, b), (dw, db), lr) in enumerate(zip(params, grads, lrs)):
            w -= np.asarray(lr, dtype=w.dtype) * dw
            if masks is not None and masks[i] is not None:
                w *= masks[i]     # pruned weights stay exactly zero
            if b is not None and db is not None:
                b -= np.asarray(lr, dtype=b.dtype) * db

    def state(self):
        return {}


class Adam:
    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params, grads, lrs, masks=None):
        flat = []
        for (w, b), (dw, db) in zip(params, grads):
            flat.append((w, dw))
            if b is not None and db is not None:
                flat.append((b, db))
        if self.m is None:
            self.m = [np.zeros_like(p) for p, _ in flat]
            self.v = [np.zeros_like(p) for p, _ in flat]
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        j = 0
        for i, ((w, b), (dw, db), lr) in enumerate(zip(params, grads, lrs)):
            for p, g in ((w, dw), (b, db)):
                if p is None or g is None:
                    continue
                m, v = self.m[j], self.v[j]
                m *= b1
                m += (1 - b1) * g
                v *= b2
                v += (1 - b2) * np.square(g)
                p -= np.asarray(lr / c1, dtype=p.dtype) * m / (
                    np.sqrt(v / c2) + p.dtype.type(self.eps))
                j += 1
            if masks is not None and masks[i] is not None:
                w *= masks[i]     # pruned weights stay exactly zero

    def state(self):
        return {"t": self.t}


def make_optimizer(kind):
    if kind == "sgd":
        return Sgd()
    if kind == "adam":
        return Adam()
    raise ValueError(f"unknown optimizer {kind!r}")


def lr_ratio(kind, epoch, total, *, decay=0.9, start=1.0, end=1.0):
    """Schedule multiplier for the given epoch; base rates are scaled by it.

    constant: 1 everywhere. exponential: decay**epoch. linear: start at
    epoch 0 to end at the last epoch, endpoints inclusive.
    """
    if kind == "constant":
        return 1.0
    if kind == "exponential":
        return float(decay) ** epoch
    if kind == "linear":
        if total <= 1:
            return float(start)
        frac = epoch / (total - 1)
        return float(start) + (float(end) - float(start)) * frac
    raise ValueError(f"unknown schedule {kind!r}")
