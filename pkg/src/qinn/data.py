"""Dataset ingestion: IDX and CIFAR binary formats, class subsetting,
synthetic boundary tasks, and a bundled handwritten-digit stand-in.

All image tensors are float64 in [0, 1] with shape (n, c, h, w); labels are
int64 remapped to 0..k-1 in ascending original order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError
from .seeding import rng_for

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    split: str = "train"
    provenance: str = ""

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise DataError(f"images must be (n, c, h, w), got {self.images.shape}")
        if len(self.images) != len(self.labels) or len(self.labels) == 0:
            raise DataError(
                f"{len(self.images)} images vs {len(self.labels)} labels")
        if self.images.min() < 0.0 or self.images.max() > 1.0:
            raise DataError("pixel values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1


# ---------------------------------------------------------------------------
# IDX (big-endian header, ubyte payload)
# ---------------------------------------------------------------------------

def _read_idx_images(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic, n, h, w = struct.unpack(">IIII", raw[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(f"{path}: bad image magic 0x{magic:08x}")
    pixels = np.frombuffer(raw, dtype=np.uint8, offset=16)
    if pixels.size != n * h * w:
        raise FormatError(f"{path}: payload holds {pixels.size} bytes, "
                          f"header promises {n * h * w}")
    return pixels.reshape(n, 1, h, w).astype(np.float64) / 255.0


def _read_idx_labels(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    magic, n = struct.unpack(">II", raw[:8])
    if magic != IDX_LABELS_MAGIC:
        raise FormatError(f"{path}: bad label magic 0x{magic:08x}")
    labels = np.frombuffer(raw, dtype=np.uint8, offset=8)
    if labels.size != n:
        raise FormatError(f"{path}: {labels.size} labels, header promises {n}")
    return labels.astype(np.int64)


def load_idx(images_path, labels_path, split: str = "train") -> Dataset:
    """Parse an IDX image/label file pair into a [0,1]-scaled dataset."""
    images = _read_idx_images(images_path)
    labels = _read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise DataError(f"image count {len(images)} != label count {len(labels)}")
    return Dataset(images, labels, split=split,
                   provenance=f"idx:{Path(images_path).name}")


def save_idx(dataset: Dataset, images_path, labels_path) -> None:
    """Quantize pixels back to bytes and emit the IDX pair."""
    n, c, h, w = dataset.images.shape
    if c != 1:
        raise DataError("IDX stores single-channel images")
    pixels = np.round(dataset.images * 255.0).astype(np.uint8)
    with open(images_path, "wb") as fh:
        fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, n, h, w))
        fh.write(pixels.tobytes())
    with open(labels_path, "wb") as fh:
        fh.write(struct.pack(">II", IDX_LABELS_MAGIC, n))
        fh.write(dataset.labels.astype(np.uint8).tobytes())


# ---------------------------------------------------------------------------
# CIFAR binary batches (label byte + 3 x 32 x 32 pixel bytes per record)
# ---------------------------------------------------------------------------

def load_cifar_binary(path, split: str = "train") -> Dataset:
    raw = np.frombuffer(Path(path).read_bytes(), dtype=np.uint8)
    record = 1 + 3 * 32 * 32
    if raw.size == 0 or raw.size % record:
        raise FormatError(f"{path}: size {raw.size} is not a multiple of "
                          f"{record}-byte records")
    rows = raw.reshape(-1, record)
    labels = rows[:, 0].astype(np.int64)
    images = rows[:, 1:].reshape(-1, 3, 32, 32).astype(np.float64) / 255.0
    return Dataset(images, labels, split=split,
                   provenance=f"cifar:{Path(path).name}")


# ---------------------------------------------------------------------------
# class subsetting
# ---------------------------------------------------------------------------

def select_classes(dataset: Dataset, classes, train_n: int, test_n: int,
                   seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint stratified train/test subsets over the chosen classes.

    Labels are remapped to 0..k-1 in ascending original order; counts are
    split evenly per class.
    """
    classes = sorted(int(c) for c in classes)
    if len(set(classes)) != len(classes):
        raise DataError(f"duplicate classes in {classes}")
    k = len(classes)
    if train_n % k or test_n % k:
        raise DataError(f"counts {train_n}/{test_n} not divisible by {k} classes")
    per_train, per_test = train_n // k, test_n // k
    rng = rng_for(seed, "select-classes")
    tr_idx, te_idx = [], []
    for cls in classes:
        pool = np.flatnonzero(dataset.labels == cls)
        if pool.size < per_train + per_test:
            raise DataError(
                f"class {cls} has {pool.size} samples, need "
                f"{per_train + per_test}")
        picks = rng.permutation(pool)[:per_train + per_test]
        tr_idx.append(picks[:per_train])
        te_idx.append(picks[per_train:])
    tr = np.concatenate(tr_idx)
    te = np.concatenate(te_idx)
    remap = {cls: i for i, cls in enumerate(classes)}
    relabel = np.vectorize(remap.get)

    def subset(idx, split):
        return Dataset(dataset.images[idx], relabel(dataset.labels[idx]),
                       split=split, provenance=dataset.provenance)

    return subset(tr, "train"), subset(te, "test")


def stratified_subset(dataset: Dataset, classes, n: int, seed: int,
                      split: str = "train") -> Dataset:
    """A single stratified remapped subset (n/k samples per class)."""
    classes = sorted(int(c) for c in classes)
    k = len(classes)
    if n % k:
        raise DataError(f"count {n} not divisible by {k} classes")
    rng = rng_for(seed, "stratified", split)
    picks, new_labels = [], []
    for new_label, cls in enumerate(classes):
        pool = np.flatnonzero(dataset.labels == cls)
        if pool.size < n // k:
            raise DataError(f"class {cls} has {pool.size} samples, need {n // k}")
        picks.append(rng.permutation(pool)[:n // k])
        new_labels.append(np.full(n // k, new_label, dtype=np.int64))
    idx = np.concatenate(picks)
    return Dataset(dataset.images[idx], np.concatenate(new_labels),
                   split=split, provenance=dataset.provenance)


# ---------------------------------------------------------------------------
# boundary classification tasks
# ---------------------------------------------------------------------------

def linear_boundary(x: np.ndarray) -> np.ndarray:
    return x / 2.0


def cubic_boundary(x: np.ndarray) -> np.ndarray:
    return x * (x - 0.5) * (x + 0.5) / 2.0

BOUNDARIES = {"linear": linear_boundary, "cubic": cubic_boundary}


@dataclass
class BoundaryDataset:
    points: np.ndarray            # (n, 2) in [-1, 1]^2
    labels: np.ndarray            # 1 above (or on) the boundary, else 0
    kind: str = "linear"

    def __len__(self) -> int:
        return len(self.labels)


def boundary_dataset(kind: str, n: int, seed: int) -> BoundaryDataset:
    if kind not in BOUNDARIES:
        raise DataError(f"unknown boundary {kind!r}; pick from {sorted(BOUNDARIES)}")
    if n < 2:
        raise DataError(f"need at least 2 points, got {n}")
    rng = rng_for(seed, "boundary", kind)
    points = rng.uniform(-1.0, 1.0, size=(n, 2))
    labels = (points[:, 1] >= BOUNDARIES[kind](points[:, 0])).astype(np.int64)
    return BoundaryDataset(points, labels, kind=kind)


# ---------------------------------------------------------------------------
# native dataset serialization (bit-exact round trip)
# ---------------------------------------------------------------------------

def save_dataset(dataset: Dataset, path) -> None:
    np.savez(path, images=dataset.images, labels=dataset.labels,
             split=dataset.split, provenance=dataset.provenance)


def load_dataset(path) -> Dataset:
    doc = np.load(path, allow_pickle=False)
    return Dataset(doc["images"], doc["labels"], split=str(doc["split"]),
                   provenance=str(doc["provenance"]))


# ---------------------------------------------------------------------------
# handwritten-digit stand-in (desk scale)
# ---------------------------------------------------------------------------

def _affine_upsample(img: np.ndarray, rng: np.random.Generator,
                     out: int = 28) -> np.ndarray:
    """Bilinear resample of a small glyph under a random rotation/scale/shift."""
    src = img.shape[0]
    angle = rng.uniform(-0.22, 0.22)
    zoom = rng.uniform(0.78, 1.05) * (src / out)
    ca, sa = np.cos(angle), np.sin(angle)
    center = (out - 1) / 2.0
    half = (src - 1) / 2.0
    cx = half + rng.uniform(-0.5, 0.5)
    cy = half + rng.uniform(-0.5, 0.5)
    ys, xs = np.mgrid[0:out, 0:out].astype(np.float64)
    u, v = (xs - center) * zoom, (ys - center) * zoom
    sx = ca * u - sa * v + cx
    sy = sa * u + ca * v + cy
    x0, y0 = np.floor(sx).astype(int), np.floor(sy).astype(int)
    fx, fy = sx - x0, sy - y0

    def sample(yy, xx):
        valid = (yy >= 0) & (yy < src) & (xx >= 0) & (xx < src)
        out_ = np.zeros_like(fx)
        out_[valid] = img[yy[valid], xx[valid]]
        return out_

    val = (sample(y0, x0) * (1 - fx) * (1 - fy)
           + sample(y0, x0 + 1) * fx * (1 - fy)
           + sample(y0 + 1, x0) * (1 - fx) * fy
           + sample(y0 + 1, x0 + 1) * fx * fy)
    val += rng.normal(0.0, 0.02, val.shape)
    return np.clip(val, 0.0, 1.0)


def handwritten_digits(train_n: int, test_n: int, classes=(0, 1, 2, 3, 4),
                       seed: int = 0, side: int = 28) -> tuple[Dataset, Dataset]:
    """Desk-scale 28x28 digit images built from the bundled scikit-learn
    handwritten-digit corpus by seeded affine upsampling.

    Train and test draw from disjoint source images, so augmentation cannot
    leak across the split. Serves as the stand-in when no IDX corpus is
    configured.
    """
    from sklearn.datasets import load_digits

    corpus = load_digits()
    base_images = corpus.images / 16.0
    base_labels = corpus.target
    classes = sorted(int(c) for c in classes)
    k = len(classes)
    if train_n % k or test_n % k:
        raise DataError(f"counts {train_n}/{test_n} not divisible by {k} classes")
    rng = rng_for(seed, "digit-standin")
    xtr, ytr, xte, yte = [], [], [], []
    for new_label, cls in enumerate(classes):
        sources = np.flatnonzero(base_labels == cls)
        sources = sources[rng.permutation(sources.size)]
        n_test_src = max(1, sources.size // 5)
        splits = ((train_n // k, sources[n_test_src:], xtr, ytr),
                  (test_n // k, sources[:n_test_src], xte, yte))
        for count, pool, xs, ys in splits:
            picks = rng.choice(pool, size=count, replace=True)
            for p in picks:
                xs.append(_affine_upsample(base_images[p], rng, out=side))
                ys.append(new_label)
    train = Dataset(np.array(xtr)[:, None, :, :], np.array(ytr),
                    split="train", provenance="digits-standin")
    test = Dataset(np.array(xte)[:, None, :, :], np.array(yte),
                   split="test", provenance="digits-standin")
    return train, test
