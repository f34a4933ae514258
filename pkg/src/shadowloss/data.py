"""Dataset loading (IDX, CSV, synthetic blobs), splitting and batch sampling."""
from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    ConsistencyError,
    DataIOError,
    FormatError,
    StratificationError,
)
from .numerics import RandomSource

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_index: dict[int, np.ndarray] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if X.ndim != 2:
            raise FormatError(f"features must be 2-D, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise ConsistencyError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if not np.all(np.isfinite(X)):
            raise FormatError("features contain non-finite values")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_index", {int(c): np.flatnonzero(y == c) for c in np.unique(y)})

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def classes(self) -> list[int]:
        return sorted(self.class_index)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.labels[rows])


@dataclass(frozen=True)
class BlobSpec:
    classes: int = 3
    dim: int = 16
    samples_per_class: int = 150
    center_scale: float = 1.0
    stddev: float = 1.0
    seed: int = 0
    class_counts: tuple[int, ...] | None = None  # per-class override for imbalance

    def __post_init__(self):
        if self.classes < 2:
            raise ConfigurationError("blobs need at least 2 classes")
        if not self.stddev > 0:
            raise ConfigurationError("blob stddev must be > 0")
        if self.class_counts is not None and len(self.class_counts) != self.classes:
            raise ConfigurationError("class_counts must list one count per class")


@dataclass(frozen=True)
class BatchPlan:
    classes_per_batch: int
    samples_per_class: int
    max_rows: int | None = None  # truncate each batch to this many rows

    @property
    def rows(self) -> int:
        full = self.classes_per_batch * self.samples_per_class
        return full if self.max_rows is None else min(full, self.max_rows)


def default_plan(n_classes: int, batch_size: int = 32) -> BatchPlan:
    """8 classes x 4 samples when possible, else every class with ceil(batch/classes) each."""
    if n_classes >= 8:
        return BatchPlan(8, max(2, batch_size // 8))
    per = max(2, math.ceil(batch_size / n_classes))
    return BatchPlan(n_classes, per, max_rows=batch_size)


# -- IDX --------------------------------------------------------------------

def _read_idx(path: Path, magic: int, ndim: int) -> np.ndarray:
    try:
        raw = gzip.decompress(path.read_bytes()) if path.suffix == ".gz" else path.read_bytes()
    except FileNotFoundError:
        raise DataIOError(f"file not found: {path}") from None
    except (OSError, EOFError) as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from None
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataIOError(f"truncated IDX header in {path}")
    found, *dims = struct.unpack(f">{1 + ndim}I", raw[:header])
    if found != magic:
        raise FormatError(f"bad magic 0x{found:08x} in {path}, expected 0x{magic:08x}")
    expected = math.prod(dims)
    if len(raw) - header < expected:
        raise DataIOError(f"truncated IDX payload in {path}: {len(raw) - header} of {expected} bytes")
    return np.frombuffer(raw, dtype=np.uint8, count=expected, offset=header).reshape(dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Read an IDX image/label pair (optionally ``.gz``); pixels are flattened row-major and scaled by 1/255."""
    images = _read_idx(Path(images_path), IDX_IMAGE_MAGIC, 3)
    labels = _read_idx(Path(labels_path), IDX_LABEL_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(f"{images.shape[0]} images in {images_path} but {labels.shape[0]} labels in {labels_path}")
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.int64))


def write_idx(dataset: Dataset, images_path, labels_path, rows: int, cols: int) -> None:
    """Quantize features (assumed in [0, 1]) to bytes and write an IDX pair."""
    n = len(dataset)
    if dataset.features.shape[1] != rows * cols:
        raise ConfigurationError(f"{dataset.features.shape[1]} features cannot be shaped {rows}x{cols}")
    pixels = np.clip(np.rint(dataset.features * 255.0), 0, 255).astype(np.uint8)
    if dataset.labels.min(initial=0) < 0 or dataset.labels.max(initial=0) > 255:
        raise ConfigurationError("IDX labels must fit in one byte")
    Path(images_path).write_bytes(struct.pack(">4I", IDX_IMAGE_MAGIC, n, rows, cols) + pixels.tobytes())
    Path(labels_path).write_bytes(struct.pack(">2I", IDX_LABEL_MAGIC, n) + dataset.labels.astype(np.uint8).tobytes())


# -- CSV --------------------------------------------------------------------

def load_csv(path, label_column: str = "label") -> Dataset:
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise DataIOError(f"file not found: {path}") from None
    if not rows or not rows[0]:
        raise FormatError(f"{path} is empty")
    header, body = rows[0], [r for r in rows[1:] if r]
    if label_column not in header:
        raise ConfigurationError(f"label column {label_column!r} not in {path} header {header}")
    if not body:
        raise FormatError(f"{path} has a header but no rows")
    li = header.index(label_column)
    features, labels = [], []
    for lineno, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise FormatError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        try:
            label = float(row[li])
            values = [float(c) for i, c in enumerate(row) if i != li]
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        if label != int(label):
            raise FormatError(f"{path}:{lineno}: label {row[li]!r} is not an integer")
        labels.append(int(label))
        features.append(values)
    return Dataset(np.array(features, dtype=np.float64).reshape(len(body), -1), np.array(labels))


# -- synthetic --------------------------------------------------------------

def make_blobs(spec: BlobSpec) -> Dataset:
    rng = RandomSource(spec.seed)
    centers = rng.uniform(-spec.center_scale, spec.center_scale, size=(spec.classes, spec.dim))
    counts = spec.class_counts or (spec.samples_per_class,) * spec.classes
    feats, labels = [], []
    for c, (center, count) in enumerate(zip(centers, counts)):
        feats.append(center + rng.gaussian(0.0, spec.stddev, size=(count, spec.dim)))
        labels.append(np.full(count, c))
    return Dataset(np.concatenate(feats), np.concatenate(labels))


# -- splitting and sampling -------------------------------------------------

def split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Stratified split: each class contributes round(n_c * test_fraction) test rows."""
    if not 0 < test_fraction < 1:
        raise ConfigurationError(f"test_fraction must be in (0, 1), got {test_fraction}")
    rng = RandomSource(seed)
    train_rows, test_rows = [], []
    for c in dataset.classes:
        members = dataset.class_index[c]
        if members.size < 2:
            raise StratificationError(f"class {c} has {members.size} member(s); need at least 2")
        n_test = min(max(int(round(members.size * test_fraction)), 1), members.size - 1)
        shuffled = members[rng.permutation(members.size)]
        test_rows.append(shuffled[:n_test])
        train_rows.append(shuffled[n_test:])
    return (dataset.subset(np.sort(np.concatenate(train_rows))),
            dataset.subset(np.sort(np.concatenate(test_rows))))


def stratified_subset(dataset: Dataset, size: int, seed: int) -> Dataset:
    """Draw ``size`` rows keeping class proportions (largest-remainder rounding)."""
    if size >= len(dataset):
        return dataset
    rng = RandomSource(seed)
    classes = dataset.classes
    counts = np.array([dataset.class_index[c].size for c in classes])
    quota = counts * size / counts.sum()
    take = np.floor(quota).astype(int)
    remainder = size - take.sum()
    order = np.lexsort((np.arange(len(classes)), -(quota - take)))
    take[order[:remainder]] += 1
    rows = []
    for c, k in zip(classes, take):
        members = dataset.class_index[c]
        rows.append(members[rng.permutation(members.size)[:k]])
    return dataset.subset(np.sort(np.concatenate(rows)))


def balanced_batches(dataset: Dataset, plan: BatchPlan, rng: RandomSource) -> list[np.ndarray]:
    """One epoch of class-balanced batches of row indices.

    Rows are drawn without replacement. A batch takes ``samples_per_class``
    rows from each of ``classes_per_batch`` classes chosen among those that
    still have enough unused rows; the epoch ends when fewer than
    ``classes_per_batch`` classes qualify.
    """
    if plan.samples_per_class < 2:
        raise ConfigurationError("samples_per_class must be >= 2 so every anchor has a positive")
    if plan.classes_per_batch < 2:
        raise ConfigurationError("classes_per_batch must be >= 2 so negatives exist")
    eligible = [c for c in dataset.classes if dataset.class_index[c].size >= plan.samples_per_class]
    if len(eligible) < plan.classes_per_batch or plan.classes_per_batch * plan.samples_per_class > len(dataset):
        raise ConfigurationError(
            f"plan {plan.classes_per_batch}x{plan.samples_per_class} is infeasible: "
            f"{len(eligible)} classes have >= {plan.samples_per_class} rows")

    pools = {c: list(dataset.class_index[c][rng.permutation(dataset.class_index[c].size)])
             for c in dataset.classes}
    batches = []
    while True:
        ready = [c for c in dataset.classes if len(pools[c]) >= plan.samples_per_class]
        if len(ready) < plan.classes_per_batch:
            break
        # prefer classes with the most unused rows so large classes are not starved
        sizes = np.array([len(pools[c]) for c in ready])
        jitter = rng.permutation(len(ready))
        order = np.lexsort((jitter, -sizes))
        chosen = sorted(ready[i] for i in order[:plan.classes_per_batch])
        rows = []
        for c in chosen:
            rows.extend(pools[c][:plan.samples_per_class])
            del pools[c][:plan.samples_per_class]
        rows = np.array(rows, dtype=np.int64)
        if plan.max_rows is not None:
            rows = rows[:plan.max_rows]
        batches.append(rows)
    return batches
