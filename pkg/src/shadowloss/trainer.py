"""Training loop and loss-vs-loss comparison runs."""
from __future__ import annotations

import logging
from dataclasses import asdict, replace

import numpy as np

from .config import TrainConfig, sub_seed
from .data import Dataset, balanced_batches
from .embednet import (
    EmbedNetState,
    adam_step,
    backward,
    default_architecture,
    embed,
    forward,
    init_network,
    scheduler_epoch_end,
)
from .errors import ConfigurationError
from .evaluation import MetricsRecord, class_distance_stats, epochs_to_threshold, knn_accuracy, macro_f1
from .losses import batch_loss
from .memtrace import theoretical_budget
from .mining import EmbeddingBatch, mine_semi_hard
from .numerics import RandomSource

logger = logging.getLogger(__name__)


def build_network(cfg: TrainConfig, input_dim: int) -> EmbedNetState:
    specs = default_architecture(input_dim, cfg.hidden_dims, cfg.embedding_dim)
    return init_network(specs, RandomSource(sub_seed(cfg.seed, "init")), cfg.lr, cfg.lr_step, cfg.lr_gamma)


def evaluate_state(
    state: EmbedNetState,
    train: Dataset,
    test: Dataset,
    epoch: int,
    mean_loss: float = float("nan"),
    k: int = 1,
) -> MetricsRecord:
    gallery = EmbeddingBatch(embed(state, train.features), train.labels)
    queries = EmbeddingBatch(embed(state, test.features), test.labels)
    acc, table = knn_accuracy(gallery, queries, k)
    inter, intra = class_distance_stats(queries)
    return MetricsRecord(
        epoch=epoch,
        mean_loss=float(mean_loss),
        accuracy=acc,
        macro_f1=macro_f1(table),
        inter_class_distance=inter,
        intra_class_distance=intra,
        lr=float(state.scheduler.lr),
    )


def train(
    cfg: TrainConfig,
    train_set: Dataset,
    test_set: Dataset,
    kind: str | None = None,
) -> tuple[EmbedNetState, list[MetricsRecord]]:
    """Train from scratch and evaluate on ``test_set`` after every epoch.

    Each record's ``lr`` is the rate used during that epoch.
    """
    kind = kind or cfg.loss
    margin = cfg.margin_config
    state = build_network(cfg, train_set.features.shape[1])
    plan = cfg.batch_plan(len(train_set.classes))
    batch_rng = RandomSource(sub_seed(cfg.seed, "batching"))
    mine_rng = RandomSource(sub_seed(cfg.seed, "mining"))
    history: list[MetricsRecord] = []
    if cfg.epochs == 0:
        return state, history
    if len(train_set) < plan.rows:
        raise ConfigurationError(f"training set of {len(train_set)} rows cannot fill one {plan.rows}-row batch")

    for epoch in range(cfg.epochs):
        lr = state.scheduler.lr
        batch_losses = []
        for rows in balanced_batches(train_set, plan, batch_rng):
            emb, trace = forward(state, train_set.features[rows])
            batch = EmbeddingBatch(emb, train_set.labels[rows])
            mined = mine_semi_hard(batch, margin, mine_rng, mode=cfg.mining, metric=cfg.mining_metric)
            value, grad = batch_loss(batch, mined.triplets, kind, margin)
            adam_step(state, backward(state, trace, grad))
            batch_losses.append(value)
        record = evaluate_state(state, train_set, test_set, epoch, float(np.mean(batch_losses)), cfg.knn_k)
        history.append(replace(record, lr=float(lr)))
        scheduler_epoch_end(state)
        logger.info("%s epoch %d loss=%.5f acc=%.4f f1=%.4f", kind, epoch, record.mean_loss,
                    record.accuracy, record.macro_f1)
    return state, history


def compare(cfg: TrainConfig, train_set: Dataset, test_set: Dataset) -> dict:
    """Train both losses on identical data, seed and plan; summarize the difference."""
    init = build_network(cfg, train_set.features.shape[1])
    init_record = evaluate_state(init, train_set, test_set, epoch=-1, k=cfg.knn_k)
    runs = {}
    for kind in ("shadow", "triplet"):
        state, history = train(cfg, train_set, test_set, kind)
        runs[kind] = (state, history)

    def final(kind, field):
        hist = runs[kind][1]
        return getattr(hist[-1], field) if hist else float("nan")

    def ratio(rec: MetricsRecord | None) -> float:
        return rec.separation_ratio if rec else float("nan")

    S = cfg.batch_plan(len(train_set.classes)).rows
    P = init.parameter_count
    report = {
        "config": {k: v for k, v in asdict(cfg).items()},
        "threshold": cfg.threshold,
        "initial": asdict(init_record) | {"separation_ratio": init_record.separation_ratio},
        "losses": {},
        "deltas": {
            "accuracy": final("shadow", "accuracy") - final("triplet", "accuracy"),
            "macro_f1": final("shadow", "macro_f1") - final("triplet", "macro_f1"),
        },
        "memory": {kind: asdict(theoretical_budget(kind, S, cfg.embedding_dim, P, all_triplets=True))
                   for kind in ("shadow", "triplet")},
    }
    for kind, (_, history) in runs.items():
        last = history[-1] if history else None
        report["losses"][kind] = {
            "history": [asdict(r) for r in history],
            "epochs_to_threshold": epochs_to_threshold(history, "accuracy", cfg.threshold),
            "final_accuracy": last.accuracy if last else None,
            "final_macro_f1": last.macro_f1 if last else None,
            "final_separation_ratio": ratio(last),
        }
    sr = report["losses"]["shadow"]["final_separation_ratio"]
    tr = report["losses"]["triplet"]["final_separation_ratio"]
    report["separation_ratio_shadow_over_triplet"] = sr / tr if tr else float("nan")
    return report
