"""Self-defined targets: k-winner selection, smoothing, homeostasis."""

from dataclasses import dataclass, field

import numpy as np


def kwta(values, k):
    """Binary matrix marking the k largest entries per row, ties to the lowest index.

    Stable argsort on the negated values puts equal entries in ascending
    index order, so the first k slots are exactly the winners under the
    lowest-index tie rule.
    """
    if values.ndim != 2:
        raise ValueError(f"expected [batch, units] values, got shape {values.shape}")
    n = values.shape[1]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    order = np.argsort(-values, axis=1, kind="stable")
    out = np.zeros(values.shape, dtype=values.dtype)
    np.put_along_axis(out, order[:, :k], 1, axis=1)
    return out


def kwta_target(y, thresholds, k):
    """Decide the binary target from outputs offset by the homeostatic thresholds."""
    d = kwta(y - thresholds[None, :], k)
    return d.astype(y.dtype, copy=False)


def one_hot(labels, n_classes, dtype=np.float32):
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(
            f"labels outside [0, {n_classes}): {labels.min()}..{labels.max()}")
    out = np.zeros((labels.shape[0], n_classes), dtype=dtype)
    out[np.arange(labels.shape[0]), labels] = 1
    return out


def smooth_target(d, alpha, k):
    """Blend the binary target toward the uniform k/n level.

    Preserves each row sum (still k) and the winner set ordering.
    """
    if not 0 <= alpha < 1:
        raise ValueError(f"smoothing must be in [0, 1), got {alpha}")
    if alpha == 0:
        return d
    n = d.shape[1]
    return d * d.dtype.type(1 - alpha) + d.dtype.type(alpha * k / n)


@dataclass
class Homeostasis:
    """Per-unit thresholds pushed so every unit wins at the uniform rate k/n.

    batch mode averages the binary targets over the batch (cumulative moving
    average across a batch); sequential mode keeps an exponential moving
    average across single-sample updates.
    """

    n: int
    k: int
    gamma: float
    mode: str = "batch"          # batch | sequential
    eta: float = 1e-3
    thresholds: np.ndarray = field(init=False)
    avg: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.mode not in ("batch", "sequential"):
            raise ValueError(f"homeostasis mode must be batch or sequential, got {self.mode!r}")
        self.thresholds = np.zeros(self.n, dtype=np.float64)
        self.avg = np.zeros(self.n, dtype=np.float64)

    @property
    def target_rate(self):
        return self.k / self.n

    def reset(self):
        self.thresholds[:] = 0
        self.avg[:] = 0

    def update(self, d):
        """Move thresholds after a weight update, from the binary targets d."""
        if d.shape[1] != self.n:
            raise ValueError(f"expected {self.n} units, got {d.shape[1]}")
        if self.mode == "batch":
            act = d.mean(axis=0, dtype=np.float64)
        else:
            if d.shape[0] != 1:
                raise ValueError("sequential homeostasis expects single-sample batches")
            act = self.eta * d[0].astype(np.float64) + (1 - self.eta) * self.avg
        self.avg = act
        self.thresholds += self.gamma * (act - self.target_rate)


def win_frequencies(win_counts, n_samples):
    """Per-unit fraction of samples a unit was selected in."""
    return win_counts / max(n_samples, 1)


def win_freq_cv(freqs):
    """Coefficient of variation of the win frequencies (population std / mean)."""
    m = freqs.mean()
    if m == 0:
        return float("inf")
    return float(freqs.std() / m)
