"""Dataset ingestion (IDX and FRM1/LBL1), frame splicing, shuffling, minibatching."""

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
FRM_MAGIC = b"FRM1"
LBL_MAGIC = b"LBL1"


@dataclass
class Dataset:
    features: np.ndarray  # (n, dim) float32
    labels: np.ndarray    # (n,) integer class indices
    num_classes: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DataError(f"features must be 2-d, got ndim {self.features.ndim}")
        if self.labels.shape != (self.features.shape[0],):
            raise DataError(
                f"label count {self.labels.shape} does not match {self.features.shape[0]} samples"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            bad = self.labels[(self.labels < 0) | (self.labels >= self.num_classes)][0]
            raise DataError(f"label {bad} out of range for {self.num_classes} classes")
        if not np.all(np.isfinite(self.features)):
            raise DataError("non-finite feature values")

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def dim(self):
        return self.features.shape[1]


@dataclass
class Minibatch:
    features: np.ndarray
    labels: np.ndarray


def _read_exact(f, count, what, offset):
    buf = f.read(count)
    if len(buf) != count:
        raise DataError(f"truncated {what} at byte {offset}: wanted {count}, got {len(buf)}")
    return buf


def load_idx(images_path, labels_path):
    """Load the big-endian IDX image/label pair; pixels scaled to [0, 1]."""
    with open(images_path, "rb") as f:
        magic, n, rows, cols = struct.unpack(">iiii", _read_exact(f, 16, "IDX header", 0))
        if magic != IDX_IMAGES_MAGIC:
            raise DataError(f"bad IDX image magic 0x{magic:08x} at byte 0")
        pixels = np.frombuffer(_read_exact(f, n * rows * cols, "IDX pixels", 16), dtype=np.uint8)
    with open(labels_path, "rb") as f:
        magic, n_lab = struct.unpack(">ii", _read_exact(f, 8, "IDX label header", 0))
        if magic != IDX_LABELS_MAGIC:
            raise DataError(f"bad IDX label magic 0x{magic:08x} at byte 0")
        labels = np.frombuffer(_read_exact(f, n_lab, "IDX labels", 8), dtype=np.uint8)
    if n != n_lab:
        raise DataError(f"IDX count mismatch: {n} images vs {n_lab} labels")
    features = (pixels.astype(np.float32) / 255.0).reshape(n, rows * cols)
    num_classes = int(labels.max()) + 1 if n else 1
    return Dataset(features, labels.astype(np.int64), num_classes)


def read_feature_frames(path):
    """Read just the FRM1 feature block (no labels); returns an (n, dim) array."""
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "FRM1 magic", 0)
        if magic != FRM_MAGIC:
            raise DataError(f"bad feature magic {magic!r} at byte 0")
        n, dim = struct.unpack("<II", _read_exact(f, 8, "FRM1 header", 4))
        raw = _read_exact(f, n * dim * 4, "FRM1 payload", 12)
    feats = np.frombuffer(raw, dtype="<f4").reshape(n, dim)
    return feats.astype(np.float32)


def load_frames(features_path, labels_path):
    """Load the FRM1/LBL1 feature and label pair."""
    feats = read_feature_frames(features_path)
    with open(labels_path, "rb") as f:
        magic = _read_exact(f, 4, "LBL1 magic", 0)
        if magic != LBL_MAGIC:
            raise DataError(f"bad label magic {magic!r} at byte 0")
        n_lab, num_classes = struct.unpack("<II", _read_exact(f, 8, "LBL1 header", 4))
        raw = _read_exact(f, n_lab * 4, "LBL1 payload", 12)
    labels = np.frombuffer(raw, dtype="<u4").astype(np.int64)
    if n_lab != feats.shape[0]:
        raise DataError(f"count mismatch: {feats.shape[0]} frames vs {n_lab} labels")
    return Dataset(feats, labels, int(num_classes))


def write_frames(features_path, labels_path, d):
    """Serialize a Dataset to the FRM1/LBL1 pair; inverse of load_frames."""
    with open(features_path, "wb") as f:
        f.write(FRM_MAGIC)
        f.write(struct.pack("<II", d.n, d.dim))
        f.write(d.features.astype("<f4").tobytes())
    with open(labels_path, "wb") as f:
        f.write(LBL_MAGIC)
        f.write(struct.pack("<II", d.n, d.num_classes))
        f.write(d.labels.astype("<u4").tobytes())


def load_dataset(features_path, labels_path):
    """Dispatch on magic bytes: FRM1 pair or big-endian IDX pair."""
    with open(features_path, "rb") as f:
        magic = f.read(4)
    if magic == FRM_MAGIC:
        return load_frames(features_path, labels_path)
    return load_idx(features_path, labels_path)


def read_features(path):
    """Read labelless features: an FRM1 file or an IDX image file."""
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == FRM_MAGIC:
        return read_feature_frames(path)
    with open(path, "rb") as f:
        magic_val, n, rows, cols = struct.unpack(">iiii", _read_exact(f, 16, "IDX header", 0))
        if magic_val != IDX_IMAGES_MAGIC:
            raise DataError(f"bad feature magic 0x{magic_val:08x} at byte 0")
        pixels = np.frombuffer(_read_exact(f, n * rows * cols, "IDX pixels", 16), dtype=np.uint8)
    return (pixels.astype(np.float32) / 255.0).reshape(n, rows * cols)


def splice(d, context):
    """Concatenate a window of `context` frames around each frame (edges replicated)."""
    if context < 1 or context % 2 == 0:
        raise ConfigError(f"splice context must be odd and >= 1, got {context}")
    if context == 1:
        return Dataset(d.features.copy(), d.labels.copy(), d.num_classes)
    c = (context - 1) // 2
    idx = np.clip(np.arange(d.n)[:, None] + np.arange(-c, c + 1)[None, :], 0, max(d.n - 1, 0))
    feats = d.features[idx].reshape(d.n, d.dim * context)
    return Dataset(feats, d.labels.copy(), d.num_classes)


def shuffle_batches(d, batch_size, seed, epoch=0):
    """Yield minibatches under a permutation keyed by (seed, epoch).

    Every sample appears exactly once per epoch; the last batch may be short.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    rng = np.random.default_rng([seed, epoch])
    perm = rng.permutation(d.n)
    for start in range(0, d.n, batch_size):
        take = perm[start:start + batch_size]
        yield Minibatch(d.features[take], d.labels[take])


def holdout_split(d, fraction=0.1):
    """Deterministic split: the last `fraction` of samples by index become holdout."""
    n_hold = int(round(d.n * fraction))
    cut = d.n - n_hold
    train = Dataset(d.features[:cut], d.labels[:cut], d.num_classes)
    hold = Dataset(d.features[cut:], d.labels[cut:], d.num_classes)
    return train, hold
