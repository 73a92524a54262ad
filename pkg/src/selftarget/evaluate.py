"""Evaluation protocols and inspection exports.

Direct association labels each output unit with the class whose examples
drive it hardest, then classifies by the class-averaged response. The linear
readout trains a softmax layer on frozen eval-mode outputs.
"""

import numpy as np

from . import ep as ep_mod
from .backprop import backprop
from .losses import softmax_cross_entropy
from .network import forward, glorot_uniform, outputs as net_outputs
from .optim import Adam, lr_ratio
from .rng import RngStream, READOUT
from .target import one_hot

# Readout base learning rates by labeled fraction of the training set,
# interpolated on log10(fraction) and clamped at the ends.
READOUT_LR_ANCHORS = {
    "bp": ([0.01, 0.05, 0.5, 1.0], [0.05, 0.065, 0.09, 0.1]),
    "ep": ([0.01, 0.05, 0.5, 1.0], [0.0085, 0.008, 0.005, 0.0022]),
}


def make_embed(net, trainer="bp", ep_steps=40, batch=1024):
    """Eval-mode embedding function: batched inputs to output activities.

    For energy-trained nets the embedding is the relaxed free fixed point of
    the top layer; otherwise a plain eval-mode forward pass.
    """
    if trainer == "ep":
        def embed(x):
            if len(x) == 0:
                return np.zeros((0, net.output_size), dtype=net.dtype)
            outs = []
            for i in range(0, len(x), batch):
                st = ep_mod.relax_free(net, x[i:i + batch], ep_steps)
                outs.append(st.layers[-1])
            return np.concatenate(outs, axis=0)
        return embed
    return lambda x: net_outputs(net, x, batch)


class NeuronClassMap:
    """Per-unit class assignment plus the class-mean responses behind it."""

    def __init__(self, class_of, mean_response):
        self.class_of = class_of            # [n_units] int
        self.mean_response = mean_response  # [n_classes, n_units]


def direct_associate(outputs, labels, n_classes):
    """Assign each output unit to the class with the highest mean response.

    Every class must appear in labels: an absent class has no mean response
    to rank, so the assignment would be undefined.
    """
    counts = np.bincount(labels, minlength=n_classes).astype(np.float64)
    missing = np.nonzero(counts == 0)[0]
    if missing.size:
        raise ValueError(
            f"direct association needs labeled examples of every class; "
            f"missing: {', '.join(str(c) for c in missing)}")
    sums = np.zeros((n_classes, outputs.shape[1]), dtype=np.float64)
    np.add.at(sums, labels, outputs.astype(np.float64, copy=False))
    means = sums / counts[:, None]
    return NeuronClassMap(means.argmax(axis=0), means)


def predict_by_association(outputs, class_of, n_classes):
    """Class whose assigned units respond most, averaged per class.

    Classes that own no units score -inf so they are never predicted.
    """
    scores = np.full((outputs.shape[0], n_classes), -np.inf, dtype=np.float64)
    for c in range(n_classes):
        units = np.nonzero(class_of == c)[0]
        if units.size:
            scores[:, c] = outputs[:, units].mean(axis=1, dtype=np.float64)
    return scores.argmax(axis=1)


def accuracy(pred, labels):
    return float(np.mean(np.asarray(pred) == np.asarray(labels)))


def readout_lr(trainer, label_fraction):
    fracs, lrs = READOUT_LR_ANCHORS[trainer]
    x = np.log10(np.clip(label_fraction, fracs[0], fracs[-1]))
    return float(np.interp(x, np.log10(fracs), lrs))


def train_readout(train_out, train_labels, n_classes, epochs, base_lr,
                  schedule="exponential", seed=0, batch_size=256,
                  sched_decay=0.9, sched_start=1.0, sched_end=0.5):
    """Softmax readout on frozen outputs; returns (w, b)."""
    n, width = train_out.shape
    rng = RngStream(seed, READOUT)
    w = glorot_uniform(rng, (width, n_classes), width, n_classes, np.float32)
    b = np.zeros(n_classes, dtype=np.float32)
    targets = one_hot(train_labels, n_classes)
    opt = Adam()
    for epoch in range(epochs):
        lr = base_lr * lr_ratio(schedule, epoch, epochs, decay=sched_decay,
                                start=sched_start, end=sched_end)
        order = RngStream(seed, READOUT, draws=1 + epoch).permutation(n)
        for i in range(0, n, batch_size):
            idx = order[i:i + batch_size]
            xb, tb = train_out[idx], targets[idx]
            logits = xb @ w + b
            _, dz = softmax_cross_entropy(logits, tb)
            opt.step([(w, b)], [(xb.T @ dz, dz.sum(axis=0))], [lr])
    return w, b


def predict_readout(outputs, w, b):
    return (outputs @ w + b).argmax(axis=1)


def max_activation_image(net, neuron, steps=200, step_size=0.1):
    """Input in [0, 1] that drives one output unit's pre-activation up,
    by gradient ascent from mid-gray."""
    if not 0 <= neuron < net.output_size:
        raise ValueError(
            f"neuron {neuron} out of range for {net.output_size} output units")
    x = np.full((1,) + tuple(net.input_shape), 0.5, dtype=net.dtype)
    seed = np.zeros((1, net.output_size), dtype=net.dtype)
    seed[0, neuron] = 1.0
    for _ in range(steps):
        cache = forward(net, x, train=False)
        grads = backprop(net, cache, grad_logits=seed)
        x = np.clip(x + net.dtype.type(step_size) * grads.x, 0.0, 1.0)
    return x[0]


def export_outputs_csv(path, outputs, labels):
    """Rows of output activities plus the integer label, 9 significant digits."""
    n_units = outputs.shape[1]
    header = ",".join(f"y{i}" for i in range(n_units)) + ",label"
    with open(path, "w", newline="\n") as f:
        f.write(header + "\n")
        for row, lab in zip(outputs, labels):
            f.write(",".join(f"{v:.9g}" for v in row) + f",{int(lab)}\n")


def write_pgm(path, img):
    """8-bit binary PGM from a float image in [0, 1] or a uint8 image."""
    if img.dtype != np.uint8:
        img = np.rint(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def _normalize_tile(t):
    t = t.astype(np.float64)
    lo, hi = t.min(), t.max()
    if hi > lo:
        return (t - lo) / (hi - lo)
    return np.zeros_like(t)


def first_layer_tiles(net):
    """One 2-D tile per unit/channel of the first parameterized layer."""
    idx = net.param_layers()[0]
    w = net.weights[idx]
    if net.specs[idx].kind == "conv":
        return [_normalize_tile(w[oc, 0]) for oc in range(w.shape[0])]
    side = int(round(np.sqrt(w.shape[0])))
    if len(net.input_shape) == 3 and net.input_shape[0] == 1:
        shape = net.input_shape[1:]
    elif side * side == w.shape[0]:
        shape = (side, side)
    else:
        shape = (1, w.shape[0])
    return [_normalize_tile(w[:, u].reshape(shape)) for u in range(w.shape[1])]


def weight_grid(net, max_tiles=400, gap=1):
    """Square grid image of first-layer weight tiles, min-max scaled per tile."""
    tiles = first_layer_tiles(net)[:max_tiles]
    th, tw = tiles[0].shape
    cols = int(np.ceil(np.sqrt(len(tiles))))
    rows = int(np.ceil(len(tiles) / cols))
    grid = np.zeros((rows * (th + gap) - gap, cols * (tw + gap) - gap))
    for i, tile in enumerate(tiles):
        r, c = divmod(i, cols)
        grid[r * (th + gap):r * (th + gap) + th,
             c * (tw + gap):c * (tw + gap) + tw] = tile
    return grid
