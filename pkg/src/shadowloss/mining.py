"""Online triplet mining over a labeled batch of embeddings."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, NamedTuple

import numpy as np

from .errors import DimensionError, EmptyMiningError
from .losses import MarginConfig
from .numerics import RandomSource, as_matrix


@dataclass(frozen=True)
class EmbeddingBatch:
    embeddings: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        emb = as_matrix(self.embeddings, "embeddings")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if labels.shape[0] != emb.shape[0]:
            raise DimensionError(f"{labels.shape[0]} labels for {emb.shape[0]} embeddings")
        if np.any(labels < 0):
            raise DimensionError("labels must be non-negative class ids")
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]


class TripletIndex(NamedTuple):
    anchor: int
    positive: int
    negative: int


@dataclass
class MiningCounts:
    semi_hard: int = 0
    fallback_hard: int = 0
    skipped_anchors: int = 0


@dataclass
class MiningReport:
    triplets: list[TripletIndex]
    counts: MiningCounts = field(default_factory=MiningCounts)


def pairwise_distances(batch: EmbeddingBatch) -> np.ndarray:
    """Squared Euclidean distance matrix, exactly symmetric with a zero diagonal."""
    E = batch.embeddings if isinstance(batch, EmbeddingBatch) else as_matrix(batch)
    diff = E[:, None, :] - E[None, :, :]
    d = np.einsum("ijk,ijk->ij", diff, diff)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d


def projection_distances(batch: EmbeddingBatch, epsilon: float = 1e-12) -> np.ndarray:
    """``d[i, j] = | |e_i| - (e_i . e_j) / |e_i| |``; rows are anchors, not symmetric."""
    E = batch.embeddings
    r = np.sqrt(np.einsum("ij,ij->i", E, E))
    proj = (E @ E.T) / np.maximum(r, epsilon)[:, None]
    return np.abs(r[:, None] - proj)


def _pick(candidates: np.ndarray, dist_row: np.ndarray) -> int:
    # smallest distance, then lowest index
    order = np.lexsort((candidates, dist_row[candidates]))
    return int(candidates[order[0]])


def mine_semi_hard(
    batch: EmbeddingBatch,
    cfg: MarginConfig = MarginConfig(),
    rng: RandomSource | None = None,
    mode: Literal["semi_hard", "hard"] = "semi_hard",
    metric: Literal["squared_euclidean", "projection"] = "squared_euclidean",
    max_triplets: int | None = None,
) -> MiningReport:
    """Pick one negative for every ordered same-class (anchor, positive) pair.

    In ``semi_hard`` mode the negative comes from the band
    ``d(a,p) < d(a,n) < d(a,p) + alpha``. When the band is empty the
    easiest negative with ``d(a,n) >= d(a,p) + alpha`` is used, otherwise the
    hardest negative overall; both are counted as ``fallback_hard``. In
    ``hard`` mode the closest negative is always chosen.

    Selection is deterministic. ``rng`` is only consumed when ``max_triplets``
    caps the result and pairs have to be subsampled.
    """
    if not isinstance(batch, EmbeddingBatch):
        raise TypeError("mine_semi_hard expects an EmbeddingBatch")
    labels = batch.labels
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    if np.unique(labels).size < 2 or not same.any():
        raise EmptyMiningError("batch has no valid anchor-positive pair with a negative")

    if metric == "squared_euclidean":
        d = pairwise_distances(batch)
    elif metric == "projection":
        d = projection_distances(batch, cfg.epsilon)
    else:
        raise ValueError(f"unknown mining metric {metric!r}")

    report = MiningReport(triplets=[])
    counts = report.counts
    alpha = cfg.alpha
    for a in range(batch.size):
        positives = np.flatnonzero(same[a])
        negatives = np.flatnonzero(labels != labels[a])
        if positives.size == 0 or negatives.size == 0:
            counts.skipped_anchors += 1
            continue
        dn = d[a, negatives]
        for p in positives:
            dap = d[a, p]
            if mode == "hard":
                n = _pick(negatives, d[a])
                counts.fallback_hard += 1
            else:
                band = negatives[(dn > dap) & (dn < dap + alpha)]
                if band.size:
                    n = _pick(band, d[a])
                    counts.semi_hard += 1
                else:
                    easy = negatives[dn >= dap + alpha]
                    n = _pick(easy if easy.size else negatives, d[a])
                    counts.fallback_hard += 1
            report.triplets.append(TripletIndex(a, int(p), n))

    if max_triplets is not None and len(report.triplets) > max_triplets:
        if rng is None:
            raise ValueError("max_triplets subsampling needs a RandomSource")
        keep = np.sort(rng.permutation(len(report.triplets))[:max_triplets])
        report.triplets = [report.triplets[i] for i in keep]
    return report


def enumerate_all_valid(batch: EmbeddingBatch) -> list[TripletIndex]:
    """Every label-valid (anchor, positive, negative), lexicographically ordered."""
    labels = batch.labels
    out = []
    for a in range(batch.size):
        for p in range(batch.size):
            if p == a or labels[p] != labels[a]:
                continue
            for n in range(batch.size):
                if labels[n] != labels[a]:
                    out.append(TripletIndex(a, p, n))
    return out
