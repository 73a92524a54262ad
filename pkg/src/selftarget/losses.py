"""Training losses. Each returns (scalar loss, gradient wrt its input).

Gradients carry the 1/batch factor, so optimizer steps are batch-size
agnostic. mse_loss differentiates the post-activation outputs; softmax
cross-entropy differentiates the pre-activation logits directly.
"""

import numpy as np


def mse_loss(y, target):
    """Squared error summed over units, averaged over the batch."""
    diff = y - target
    loss = float(np.einsum("bi,bi->", diff, diff, dtype=np.float64) / y.shape[0])
    grad = (2.0 / y.shape[0]) * diff
    return loss, grad.astype(y.dtype, copy=False)


def softmax_cross_entropy(logits, target):
    """Cross-entropy between softmax(logits) and a target distribution.

    Targets may be one-hot rows or any nonnegative rows (smoothed targets);
    the gradient is returned with respect to the logits.
    """
    z = logits.astype(np.float64, copy=False)
    zmax = z.max(axis=1, keepdims=True)
    ez = np.exp(z - zmax)
    logsumexp = np.log(ez.sum(axis=1, keepdims=True)) + zmax
    logp = z - logsumexp
    t = target.astype(np.float64, copy=False)
    loss = float(-(t * logp).sum() / z.shape[0])
    p = ez / ez.sum(axis=1, keepdims=True)
    grad = (p * t.sum(axis=1, keepdims=True) - t) / z.shape[0]
    return loss, grad.astype(logits.dtype, copy=False)
