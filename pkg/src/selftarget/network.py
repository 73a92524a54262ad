"""Network container: layer specs, initialization, forward pass, checkpoints."""

import json
import zlib
from dataclasses import dataclass, field, asdict

import numpy as np

from . import ops
from .ops import ShapeError
from .rng import RngStream, WEIGHTS, PRUNE

CHECKPOINT_MAGIC = b"STCK"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    """One layer. kind selects which fields matter:

    dense: units, activation, dropout
    conv:  units (out channels), kernel, padding, stride, activation, dropout
    pool:  pool (max|avg), kernel, padding, stride, dropout
    flatten: dropout only
    dropout is the drop probability applied to this layer's output.
    """

    kind: str
    units: int = 0
    kernel: int = 0
    padding: int = 0
    stride: int = 1
    pool: str = "max"
    activation: str = "none"
    dropout: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dense", "conv", "pool", "flatten"):
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if not 0 <= self.dropout < 1:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.kind in ("dense", "conv") and self.units < 1:
            raise ValueError(f"{self.kind} layer needs units >= 1")
        if self.kind in ("conv", "pool") and self.kernel < 1:
            raise ValueError(f"{self.kind} layer needs kernel >= 1")
        if self.pool not in ("max", "avg"):
            raise ValueError(f"pool must be max or avg, got {self.pool!r}")
        if self.activation not in ops.ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def shape_after(spec, shape):
    """Output shape of one layer given its input shape (no batch dim)."""
    if spec.kind == "dense":
        if len(shape) != 1:
            raise ShapeError(
                f"dense layer needs a flat input, got shape {shape} (add a flatten layer)")
        return (spec.units,)
    if spec.kind == "flatten":
        return (int(np.prod(shape)),)
    if len(shape) != 3:
        raise ShapeError(f"{spec.kind} layer needs a [C, H, W] input, got {shape}")
    c, h, w = shape
    ho = ops.out_size(h, spec.kernel, spec.padding, spec.stride)
    wo = ops.out_size(w, spec.kernel, spec.padding, spec.stride)
    cout = spec.units if spec.kind == "conv" else c
    return (cout, ho, wo)


def layer_shapes(input_shape, specs):
    """Shapes flowing through the stack: [input, after layer 0, ...]."""
    shapes = [tuple(int(s) for s in input_shape)]
    for spec in specs:
        shapes.append(shape_after(spec, shapes[-1]))
    return shapes


@dataclass
class Network:
    input_shape: tuple
    specs: list
    weights: list            # per layer: ndarray or None
    biases: list
    masks: list              # per layer: ndarray (1 keep / 0 pruned) or None
    input_dropout: float = 0.0
    dtype: np.dtype = np.float32

    @property
    def output_size(self):
        return layer_shapes(self.input_shape, self.specs)[-1][0]

    def param_layers(self):
        """Indices of layers that carry weights, in network order."""
        return [i for i, s in enumerate(self.specs) if s.kind in ("dense", "conv")]


def glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return rng.uniform(shape, low=-bound, high=bound, dtype=dtype)


def prune_mask(rng, shape, fraction, dtype):
    """Binary keep-mask with exactly round(fraction * size) zeros."""
    size = int(np.prod(shape))
    n_zero = int(round(fraction * size))
    mask = np.ones(size, dtype=dtype)
    if n_zero:
        mask[rng.permutation(size)[:n_zero]] = 0
    return mask.reshape(shape)


def init_network(input_shape, specs, seed, input_dropout=0.0,
                 prune_fraction=0.0, dtype=np.float32):
    """Glorot-uniform weights, zero biases, optional random permanent pruning."""
    if not 0 <= input_dropout < 1:
        raise ValueError(f"input dropout must be in [0, 1), got {input_dropout}")
    if not 0 <= prune_fraction < 1:
        raise ValueError(f"prune fraction must be in [0, 1), got {prune_fraction}")
    if not specs:
        raise ValueError("a network needs at least one layer")
    dtype = np.dtype(dtype)
    shapes = layer_shapes(input_shape, specs)   # validates composition
    wrng = RngStream(seed, WEIGHTS)
    prng = RngStream(seed, PRUNE)
    weights, biases, masks = [], [], []
    for i, spec in enumerate(specs):
        if spec.kind == "dense":
            fan_in, fan_out = shapes[i][0], spec.units
            w = glorot_uniform(wrng, (fan_in, spec.units), fan_in, fan_out, dtype)
            b = np.zeros(spec.units, dtype=dtype)
        elif spec.kind == "conv":
            cin = shapes[i][0]
            fan_in = cin * spec.kernel * spec.kernel
            fan_out = spec.units * spec.kernel * spec.kernel
            w = glorot_uniform(wrng, (spec.units, cin, spec.kernel, spec.kernel),
                               fan_in, fan_out, dtype)
            b = np.zeros(spec.units, dtype=dtype)
        else:
            weights.append(None)
            biases.append(None)
            masks.append(None)
            continue
        if prune_fraction > 0:
            m = prune_mask(prng, w.shape, prune_fraction, dtype)
            w = w * m
        else:
            m = None
        weights.append(w)
        biases.append(b)
        masks.append(m)
    return Network(tuple(input_shape), list(specs), weights, biases, masks,
                   input_dropout=input_dropout, dtype=dtype)


@dataclass
class ForwardCache:
    """Everything the backward pass needs, per layer."""
    x: np.ndarray                 # network input after input dropout
    input_mask: np.ndarray        # input dropout keep-mask (scaled) or None
    inputs: list = field(default_factory=list)       # input seen by each layer
    pre: list = field(default_factory=list)          # pre-activations (dense/conv)
    masks: list = field(default_factory=list)        # per-layer dropout masks (scaled)
    pool_idx: list = field(default_factory=list)     # argmax indices for max pools
    output: np.ndarray = None


def _dropout_mask(rng, shape, p, dtype):
    keep = rng.uniform(shape, dtype=np.float32) >= p
    return keep.astype(dtype) / dtype.type(1 - p)


def forward(net, x, train=False, rng=None):
    """Run the stack. train=True samples dropout (requires rng); eval is exact."""
    if train and rng is None:
        raise ValueError("training forward needs an rng for dropout")
    dtype = np.dtype(net.dtype)
    x = np.ascontiguousarray(x, dtype=dtype)
    cache = ForwardCache(x=x, input_mask=None)
    if train and net.input_dropout > 0:
        cache.input_mask = _dropout_mask(rng, x.shape, net.input_dropout, dtype)
        x = x * cache.input_mask
        cache.x = x
    cur = x
    for i, spec in enumerate(net.specs):
        cache.inputs.append(cur)
        z = None
        idx = None
        if spec.kind == "dense":
            z = ops.matmul(cur, net.weights[i]) + net.biases[i]
            cur = ops.activate(z, spec.activation)
        elif spec.kind == "conv":
            z = ops.conv2d(cur, net.weights[i], net.biases[i],
                           spec.padding, spec.stride)
            cur = ops.activate(z, spec.activation)
        elif spec.kind == "pool":
            cur, idx = ops.pool2d(cur, spec.kernel, spec.padding,
                                  spec.stride, spec.pool)
        elif spec.kind == "flatten":
            cur = cur.reshape(cur.shape[0], -1)
        mask = None
        if train and spec.dropout > 0:
            mask = _dropout_mask(rng, cur.shape, spec.dropout, dtype)
            cur = cur * mask
        cache.pre.append(z)
        cache.masks.append(mask)
        cache.pool_idx.append(idx)
    cache.output = cur
    return cache


def outputs(net, x, batch=1024):
    """Eval-mode outputs, computed in batches."""
    chunks = [forward(net, x[i:i + batch]).output for i in range(0, len(x), batch)]
    if not chunks:
        return np.empty((0, net.output_size), dtype=net.dtype)
    return np.concatenate(chunks, axis=0)


# ---------------------------------------------------------------------------
# Checkpoints. Layout (little-endian, documented in docs/formats.md):
#   "STCK" | u16 version | u32 header_len | header JSON (utf-8) |
#   raw array bytes in header order | u32 CRC32
# CRC covers every byte after the 6-byte magic+version prefix.
# ---------------------------------------------------------------------------

def save_checkpoint(path, net, rng_states=None, meta=None, extra_arrays=None):
    arrays = []
    blobs = []

    def put(name, arr):
        arr = np.ascontiguousarray(arr)
        arrays.append([name, str(arr.dtype), list(arr.shape)])
        blobs.append(arr.tobytes())

    for i in net.param_layers():
        put(f"w{i}", net.weights[i])
        put(f"b{i}", net.biases[i])
        if net.masks[i] is not None:
            put(f"mask{i}", net.masks[i])
    for name, arr in (extra_arrays or {}).items():
        put(name, arr)

    header = {
        "input_shape": list(net.input_shape),
        "input_dropout": net.input_dropout,
        "dtype": str(np.dtype(net.dtype)),
        "specs": [asdict(s) for s in net.specs],
        "rng": rng_states or {},
        "meta": meta or {},
        "arrays": arrays,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    body = len(hbytes).to_bytes(4, "little") + hbytes + b"".join(blobs)
    crc = zlib.crc32(body) & 0xFFFFFFFF
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(CHECKPOINT_VERSION.to_bytes(2, "little"))
        f.write(body)
        f.write(crc.to_bytes(4, "little"))


def load_checkpoint(path):
    """Returns (net, rng_states, meta, extra_arrays)."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 14 or raw[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version = int.from_bytes(raw[4:6], "little")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    body, crc_stored = raw[6:-4], int.from_bytes(raw[-4:], "little")
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise CheckpointError(f"{path}: checksum mismatch, file corrupt")
    hlen = int.from_bytes(body[:4], "little")
    header = json.loads(body[4:4 + hlen].decode("utf-8"))
    offset = 4 + hlen
    loaded = {}
    for name, dtype, shape in header["arrays"]:
        n = int(np.prod(shape)) * np.dtype(dtype).itemsize
        if offset + n > len(body):
            raise CheckpointError(f"{path}: truncated array data for {name!r}")
        loaded[name] = np.frombuffer(
            body[offset:offset + n], dtype=dtype).reshape(shape).copy()
        offset += n
    if offset != len(body):
        raise CheckpointError(f"{path}: trailing bytes after array data")

    specs = [LayerSpec(**s) for s in header["specs"]]
    weights, biases, masks = [], [], []
    for i, spec in enumerate(specs):
        if spec.kind in ("dense", "conv"):
            weights.append(loaded.pop(f"w{i}"))
            biases.append(loaded.pop(f"b{i}"))
            masks.append(loaded.pop(f"mask{i}", None))
        else:
            weights.append(None)
            biases.append(None)
            masks.append(None)
    net = Network(tuple(header["input_shape"]), specs, weights, biases, masks,
                  input_dropout=header["input_dropout"],
                  dtype=np.dtype(header["dtype"]))
    return net, header["rng"], header["meta"], loaded
