"""Datasets: IDX files, the WTED container, subsets, batching.

Images are float32 in [0, 1], shaped [N, C, H, W]; labels are int64.
"""

import gzip
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .rng import RngStream, SHUFFLE, SUBSET, MISC

IDX_IMAGES_MAGIC = 2051      # 0x00000803
IDX_LABELS_MAGIC = 2049      # 0x00000801
WTED_MAGIC = b"WTED"
WTED_VERSION = 1


class FormatError(ValueError):
    pass


class BadMagicError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class CountMismatchError(FormatError):
    pass


class ChecksumError(FormatError):
    pass


@dataclass
class LabeledDataset:
    images: np.ndarray       # [N, C, H, W] float32 in [0, 1]
    labels: np.ndarray       # [N] int64
    n_classes: int

    def __len__(self):
        return self.images.shape[0]

    @property
    def sample_shape(self):
        return tuple(self.images.shape[1:])

    def take(self, indices):
        return LabeledDataset(self.images[indices], self.labels[indices],
                              self.n_classes)


def _read_file(path):
    with open(path, "rb") as f:
        head = f.read(2)
        rest = f.read()
    raw = head + rest
    if head == b"\x1f\x8b":
        return gzip.decompress(raw)
    return raw


def _idx_array(raw, path, expect_magic, ndim):
    if len(raw) < 4 * (1 + ndim):
        raise TruncatedFileError(f"{path}: too short for an IDX header")
    magic = struct.unpack(">i", raw[:4])[0]
    if magic != expect_magic:
        raise BadMagicError(
            f"{path}: IDX magic {magic}, expected {expect_magic}")
    dims = struct.unpack(f">{ndim}i", raw[4:4 + 4 * ndim])
    n = int(np.prod(dims))
    body = raw[4 + 4 * ndim:]
    if len(body) < n:
        raise TruncatedFileError(
            f"{path}: {len(body)} data bytes, header promises {n}")
    if len(body) > n:
        raise FormatError(f"{path}: {len(body) - n} trailing bytes")
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(images_path, labels_path):
    """Load an images/labels IDX pair (gzip transparent)."""
    images = _idx_array(_read_file(images_path), images_path,
                        IDX_IMAGES_MAGIC, 3)
    labels = _idx_array(_read_file(labels_path), labels_path,
                        IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatchError(
            f"{images_path} holds {images.shape[0]} images but "
            f"{labels_path} holds {labels.shape[0]} labels")
    x = (images.astype(np.float32) / np.float32(255.0))[:, None, :, :]
    y = labels.astype(np.int64)
    return LabeledDataset(x, y, int(y.max()) + 1 if len(y) else 0)


# ---------------------------------------------------------------------------
# WTED container (little-endian):
#   "WTED" | u16 version | u32 N | u16 C | u16 H | u16 W | u16 n_classes |
#   N*C*H*W u8 pixels | N u8 labels | u32 CRC32
# The CRC covers every byte after the 6-byte magic+version prefix.
# ---------------------------------------------------------------------------

_WTED_HEAD = struct.Struct("<IHHHH")


def save_container(ds, path):
    n, c, h, w = ds.images.shape
    if ds.n_classes > 255 or n >= 2 ** 32 or max(c, h, w) >= 2 ** 16:
        raise ValueError("dataset too large for the container format")
    pixels = np.clip(np.rint(ds.images * 255.0), 0, 255).astype(np.uint8)
    labels = ds.labels.astype(np.uint8)
    body = _WTED_HEAD.pack(n, c, h, w, ds.n_classes)
    body += pixels.tobytes() + labels.tobytes()
    crc = zlib.crc32(body) & 0xFFFFFFFF
    with open(path, "wb") as f:
        f.write(WTED_MAGIC)
        f.write(WTED_VERSION.to_bytes(2, "little"))
        f.write(body)
        f.write(crc.to_bytes(4, "little"))


def load_container(path):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 6 or raw[:4] != WTED_MAGIC:
        raise BadMagicError(f"{path}: not a WTED container")
    version = int.from_bytes(raw[4:6], "little")
    if version != WTED_VERSION:
        raise BadMagicError(f"{path}: unsupported WTED version {version}")
    if len(raw) < 6 + _WTED_HEAD.size + 4:
        raise TruncatedFileError(f"{path}: too short for a WTED header")
    body, crc_stored = raw[6:-4], int.from_bytes(raw[-4:], "little")
    if zlib.crc32(body) & 0xFFFFFFFF != crc_stored:
        raise ChecksumError(f"{path}: checksum mismatch, file corrupt")
    n, c, h, w, n_classes = _WTED_HEAD.unpack(body[:_WTED_HEAD.size])
    need = n * c * h * w + n
    have = len(body) - _WTED_HEAD.size
    if have < need:
        raise TruncatedFileError(f"{path}: {have} payload bytes, need {need}")
    if have > need:
        raise FormatError(f"{path}: {have - need} trailing bytes")
    pix = np.frombuffer(body, dtype=np.uint8, count=n * c * h * w,
                        offset=_WTED_HEAD.size)
    lab = np.frombuffer(body, dtype=np.uint8, count=n,
                        offset=_WTED_HEAD.size + n * c * h * w)
    images = (pix.astype(np.float32) / np.float32(255.0)).reshape(n, c, h, w)
    labels = lab.astype(np.int64)
    if len(labels) and labels.max() >= n_classes:
        raise CountMismatchError(
            f"{path}: label {labels.max()} outside {n_classes} classes")
    return LabeledDataset(images, labels, n_classes)


def balanced_subset(ds, n_labels, seed):
    """Exactly n_labels / n_classes samples per class, chosen deterministically."""
    if ds.n_classes == 0 or n_labels % ds.n_classes != 0:
        raise ValueError(
            f"subset size {n_labels} not divisible by {ds.n_classes} classes")
    per = n_labels // ds.n_classes
    rng = RngStream(seed, SUBSET)
    picks = []
    for c in range(ds.n_classes):
        idx = np.flatnonzero(ds.labels == c)
        if len(idx) < per:
            raise ValueError(
                f"class {c} has {len(idx)} samples, subset needs {per}")
        picks.append(idx[rng.permutation(len(idx))[:per]])
    return ds.take(np.concatenate(picks))


@dataclass
class BatchPlan:
    batch_size: int
    seed: int = 0
    shuffle: bool = True
    drop_last: bool = False


def batches(ds, plan, epoch=0):
    """Yield (images, labels) batches under a seed-deterministic permutation.

    The permutation depends only on (plan.seed, epoch), never on how many
    batches earlier epochs consumed.
    """
    if plan.batch_size < 1:
        raise ValueError(f"batch size must be >= 1, got {plan.batch_size}")
    n = len(ds)
    if plan.shuffle:
        order = RngStream(plan.seed, SHUFFLE, draws=epoch).permutation(n)
    else:
        order = np.arange(n)
    for start in range(0, n, plan.batch_size):
        sel = order[start:start + plan.batch_size]
        if plan.drop_last and len(sel) < plan.batch_size:
            return
        yield ds.images[sel], ds.labels[sel]


def synthetic_dataset(n, shape=(1, 8, 8), n_classes=4, noise=0.15, seed=0,
                      split=0):
    """Class prototypes plus noise; deterministic in seed. For tests and demos.

    The prototypes depend only on seed, so splits of the same seed share the
    class structure; split selects independent noise (0 train, 1 test, ...).
    """
    protos = RngStream(seed, MISC).uniform((n_classes,) + tuple(shape),
                                           dtype=np.float32)
    rng = RngStream(seed, MISC, draws=1 + split)
    labels = (np.arange(n) % n_classes).astype(np.int64)
    images = protos[labels] + np.float32(noise) * rng.normal(
        (n,) + tuple(shape), dtype=np.float32)
    np.clip(images, 0, 1, out=images)
    return LabeledDataset(images, labels, n_classes)
