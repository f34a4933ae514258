"""Embedding-space evaluation: k-NN accuracy, macro-F1, class geometry, PCA."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, fields
from itertools import combinations

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigurationError, DegenerateProjectionError, DimensionError, EvaluationError
from .mining import EmbeddingBatch


@dataclass(frozen=True)
class MetricsRecord:
    epoch: int
    mean_loss: float
    accuracy: float
    macro_f1: float
    inter_class_distance: float
    intra_class_distance: float
    lr: float

    @property
    def separation_ratio(self) -> float:
        if self.intra_class_distance == 0:
            return float("inf")
        return self.inter_class_distance / self.intra_class_distance


METRIC_FIELDS = [f.name for f in fields(MetricsRecord)]


@dataclass(frozen=True)
class ConfusionTable:
    labels: tuple[int, ...]
    counts: np.ndarray  # true x predicted

    @property
    def classes(self) -> int:
        return len(self.labels)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_table(y_true, y_pred, labels=None) -> ConfusionTable:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if labels is None:
        labels = np.union1d(y_true, y_pred)
    labels = tuple(int(c) for c in labels)
    pos = {c: i for i, c in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        counts[pos[int(t)], pos[int(p)]] += 1
    return ConfusionTable(labels, counts)


def knn_predict(train: EmbeddingBatch, test: EmbeddingBatch, k: int = 1) -> np.ndarray:
    """Majority vote of the k nearest gallery rows (squared Euclidean).

    Neighbours are ordered by (distance, label, gallery index), so equidistant
    rows resolve toward the lower label. Vote ties go to the label with the
    smallest summed distance, then the lowest label.
    """
    if train.size == 0:
        raise EvaluationError("empty gallery")
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    if train.dim != test.dim:
        raise DimensionError(f"gallery dim {train.dim} != query dim {test.dim}")
    k = min(k, train.size)
    preds = np.empty(test.size, dtype=np.int64)
    gallery_idx = np.arange(train.size)
    chunk = max(1, 2_000_000 // max(train.size, 1))
    for start in range(0, test.size, chunk):
        d = cdist(test.embeddings[start:start + chunk], train.embeddings, "sqeuclidean")
        for row, dist in enumerate(d):
            nearest = np.lexsort((gallery_idx, train.labels, dist))[:k]
            if k == 1:
                preds[start + row] = train.labels[nearest[0]]
                continue
            votes: dict[int, list[float]] = {}
            for j in nearest:
                entry = votes.setdefault(int(train.labels[j]), [0, 0.0])
                entry[0] += 1
                entry[1] += dist[j]
            preds[start + row] = min(votes, key=lambda c: (-votes[c][0], votes[c][1], c))
    return preds


def knn_accuracy(train: EmbeddingBatch, test: EmbeddingBatch, k: int = 1) -> tuple[float, ConfusionTable]:
    preds = knn_predict(train, test, k)
    labels = np.union1d(train.labels, test.labels)
    table = confusion_table(test.labels, preds, labels)
    acc = float(np.mean(preds == test.labels)) if test.size else 0.0
    return acc, table


def macro_f1(table: ConfusionTable) -> float:
    """Unweighted mean of per-class F1; a class never present nor predicted scores 0."""
    counts = table.counts.astype(np.float64)
    if counts.size == 0:
        return 0.0
    tp = np.diag(counts)
    denom = counts.sum(axis=0) + counts.sum(axis=1)  # 2TP + FP + FN
    f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(f1.mean())


def class_distance_stats(emb: EmbeddingBatch, pairwise: bool = False) -> tuple[float, float]:
    """Return ``(inter, intra)`` class distances.

    Centroid mode: intra is the per-class mean distance of members to their
    centroid, averaged over classes; inter is the mean distance between
    centroid pairs. ``pairwise=True`` averages all member-pair distances
    instead (within a class for intra, across two classes for inter).
    """
    classes = np.unique(emb.labels)
    if classes.size < 2:
        raise EvaluationError("class distance statistics need at least 2 classes")
    groups = [emb.embeddings[emb.labels == c] for c in classes]
    if pairwise:
        intra = [cdist(g, g).sum() / (len(g) * (len(g) - 1)) if len(g) > 1 else 0.0 for g in groups]
        inter = [cdist(g, h).mean() for g, h in combinations(groups, 2)]
    else:
        centroids = np.array([g.mean(axis=0) for g in groups])
        intra = [np.linalg.norm(g - c, axis=1).mean() for g, c in zip(groups, centroids)]
        inter = [np.linalg.norm(a - b) for a, b in combinations(centroids, 2)]
    return float(np.mean(inter)), float(np.mean(intra))


_THRESHOLD_DIRECTION = {
    "accuracy": 1,
    "macro_f1": 1,
    "inter_class_distance": 1,
    "mean_loss": -1,
    "intra_class_distance": -1,
}


def epochs_to_threshold(history: list[MetricsRecord], metric: str, threshold: float) -> int | None:
    """Epoch of the first record meeting ``threshold`` (>= for scores, <= for loss/intra)."""
    if metric not in _THRESHOLD_DIRECTION:
        raise ConfigurationError(f"unknown metric {metric!r}; choose from {sorted(_THRESHOLD_DIRECTION)}")
    sign = _THRESHOLD_DIRECTION[metric]
    for rec in history:
        value = getattr(rec, metric)
        if (value >= threshold) if sign > 0 else (value <= threshold):
            return rec.epoch
    return None


def pca_project_2d(emb: EmbeddingBatch) -> tuple[np.ndarray, tuple[float, float]]:
    """Project onto the top two principal directions.

    Each direction is signed so its largest-magnitude coordinate is positive.
    Returns the S x 2 projection and the two component variances.
    """
    X = emb.embeddings
    if X.shape[0] < 3 or X.shape[1] < 2:
        raise EvaluationError(f"PCA projection needs >= 3 rows and >= 2 dims, got {X.shape}")
    centered = X - X.mean(axis=0)
    cov = centered.T @ centered / (X.shape[0] - 1)
    if np.trace(cov) <= 0:
        raise DegenerateProjectionError("embeddings have zero variance")
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:2]
    components = evecs[:, order]
    for j in range(2):
        if components[np.argmax(np.abs(components[:, j])), j] < 0:
            components[:, j] *= -1
    variances = np.clip(evals[order], 0.0, None)
    return centered @ components, (float(variances[0]), float(variances[1]))


# -- file outputs -----------------------------------------------------------

def write_metrics_csv(history: list[MetricsRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        for rec in history:
            w.writerow([repr(v) for v in asdict(rec).values()])


def read_metrics_csv(path) -> list[MetricsRecord]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [MetricsRecord(int(r["epoch"]), *(float(r[k]) for k in METRIC_FIELDS[1:])) for r in rows]


def write_metrics_jsonl(history: list[MetricsRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in history:
            row = {k: (v if not isinstance(v, float) or np.isfinite(v) else None) for k, v in asdict(rec).items()}
            fh.write(json.dumps(row) + "\n")


def export_embeddings_csv(emb: EmbeddingBatch, path, columns: list[str] | None = None) -> None:
    """Write ``label, e_1..e_D`` (or custom column names, e.g. ``x, y``)."""
    cols = columns or [f"e_{j + 1}" for j in range(emb.dim)]
    if len(cols) != emb.dim:
        raise DimensionError(f"{len(cols)} column names for {emb.dim} dims")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", *cols])
        for label, row in zip(emb.labels, emb.embeddings):
            w.writerow([int(label), *(repr(float(v)) for v in row)])
