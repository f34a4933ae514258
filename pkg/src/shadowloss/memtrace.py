"""Loss-stage memory accounting, counted in retained float64 scalars.

The theoretical budget splits storage into four components: embeddings held
by the loss, the pairwise distance matrix, per-triplet loss values and
parameter gradients. Only the first differs between the two losses: triplet
loss keeps the anchor/positive/negative vectors (3 x S x D values) while
shadow loss keeps one norm and two projections per triplet (3 x S).

The measured counterpart runs :func:`~shadowloss.losses.batch_loss` with a
:class:`RetentionTracker`, which records every array the loss stage holds as
input and reports the peak simultaneously retained.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Literal

import numpy as np

from .errors import ParameterError
from .losses import MarginConfig, batch_loss
from .mining import EmbeddingBatch
from .numerics import RandomSource


@dataclass(frozen=True)
class MemoryBudget:
    embeddings_scalars: int
    distances_scalars: int
    loss_scalars: int
    gradient_scalars: int

    @property
    def total(self) -> int:
        return self.embeddings_scalars + self.distances_scalars + self.loss_scalars + self.gradient_scalars


@dataclass(frozen=True)
class MemoryMeasurement:
    stage: str
    scalars_retained: int


class RetentionTracker:
    def __init__(self):
        self.live: dict[str, int] = {}
        self.peak = 0

    def retain(self, name: str, array) -> None:
        self.live[name] = int(np.asarray(array).size)
        self.peak = max(self.peak, sum(self.live.values()))

    def release(self, name: str) -> None:
        self.live.pop(name, None)

    def release_all(self) -> None:
        self.live.clear()


def theoretical_budget(
    kind: Literal["shadow", "triplet"],
    S: int,
    D: int,
    P: int,
    all_triplets: bool = True,
    mined: int | None = None,
) -> MemoryBudget:
    """Scalar counts per component; ``mined`` is the triplet count when not all are used."""
    if min(S, D, P) < 1:
        raise ParameterError("S, D and P must be >= 1")
    if kind == "triplet":
        emb = 3 * S * D
    elif kind == "shadow":
        emb = 3 * S
    else:
        raise ParameterError(f"unknown loss kind {kind!r}")
    loss = S ** 3 if all_triplets else (S if mined is None else mined)
    return MemoryBudget(emb, S * S, loss, P)


def measure_loss_stage(kind, batch, triplets, cfg: MarginConfig = MarginConfig()) -> MemoryMeasurement:
    """Peak scalars held as loss-stage inputs during one ``batch_loss`` call.

    Gradients are excluded; they cost the same for both kinds.
    """
    if len(triplets) == 0:
        return MemoryMeasurement(f"{kind}_loss_inputs", 0)
    tracker = RetentionTracker()
    batch_loss(batch, triplets, kind, cfg, tracker=tracker)
    return MemoryMeasurement(f"{kind}_loss_inputs", tracker.peak)


def bench_report(S_list, D_list, P: int = 1, seed: int = 0, cfg: MarginConfig = MarginConfig()) -> dict:
    """Theoretical and measured budgets side by side for every (kind, S, D).

    S counts triplets in the loss batch. Each measurement uses S triplets over
    a random 2-class batch: anchor i, positive i + 1, negative S + 1 + i.
    """
    if not S_list or not D_list:
        raise ParameterError("S and D lists must be non-empty")
    rng = RandomSource(seed)
    rows = []
    for S in S_list:
        labels = np.concatenate([np.zeros(S + 1, dtype=np.int64), np.ones(S, dtype=np.int64)])
        triplets = [(i, i + 1, S + 1 + i) for i in range(S)]
        for D in D_list:
            batch = EmbeddingBatch(rng.gaussian(0.0, 1.0, size=(2 * S + 1, D)), labels)
            for kind in ("shadow", "triplet"):
                budget = theoretical_budget(kind, S, D, P, all_triplets=False, mined=S)
                measured = measure_loss_stage(kind, batch, triplets, cfg)
                rows.append({
                    "kind": kind,
                    "S": S,
                    "D": D,
                    "theoretical": asdict(budget),
                    "measured": asdict(measured),
                    "within_budget": measured.scalars_retained <= budget.embeddings_scalars,
                })
    return {"unit": "float64 scalars", "rows": rows}
