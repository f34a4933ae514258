"""Shadow loss and triplet loss for Siamese embedding networks, in numpy."""

__version__ = "0.1.0"

from .losses import (
    LossResult,
    MarginConfig,
    ProjectionPair,
    batch_loss,
    scalar_projection,
    shadow_deltas,
    shadow_loss_single,
    triplet_loss_single,
)
from .mining import EmbeddingBatch, MiningReport, TripletIndex, enumerate_all_valid, mine_semi_hard
from .numerics import RandomSource

__all__ = [
    "EmbeddingBatch",
    "LossResult",
    "MarginConfig",
    "MiningReport",
    "ProjectionPair",
    "RandomSource",
    "TripletIndex",
    "batch_loss",
    "enumerate_all_valid",
    "mine_semi_hard",
    "scalar_projection",
    "shadow_deltas",
    "shadow_loss_single",
    "triplet_loss_single",
]
