"""Shadow loss and vanilla triplet loss with analytic gradients.

Shadow loss compares scalar projections onto the anchor instead of
distances between full embedding vectors::

    proj(a, x)  = (a . x) / |a|
    delta(a, x) = | |a| - proj(a, x) |
    loss        = max(delta(a, p) - delta(a, n) + alpha, 0)

Triplet loss uses squared Euclidean distances::

    loss = max(|a - p|^2 - |a - n|^2 + alpha, 0)

At non-differentiable points (hinge exactly at zero, or ``|a| == proj``)
the gradient of the non-smooth factor is taken as zero.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np

from .errors import DimensionError, EmptyBatchError, NumericError, ParameterError
from .numerics import as_matrix, as_vector

LossKind = Literal["shadow", "triplet"]
LOSS_KINDS = ("shadow", "triplet")


@dataclass(frozen=True)
class MarginConfig:
    alpha: float = 1.0
    epsilon: float = 1e-12

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha < 0:
            raise ParameterError(f"alpha must be finite and >= 0, got {self.alpha}")
        if not (self.epsilon > 0):
            raise ParameterError(f"epsilon must be > 0, got {self.epsilon}")


class ProjectionPair(NamedTuple):
    delta_plus: float
    delta_minus: float


@dataclass(frozen=True)
class LossResult:
    value: float
    grad_anchor: np.ndarray
    grad_positive: np.ndarray
    grad_negative: np.ndarray
    active: bool


def _check_triplet(anchor, positive, negative):
    a = as_vector(anchor, "anchor")
    p = as_vector(positive, "positive")
    n = as_vector(negative, "negative")
    if not (a.shape == p.shape == n.shape):
        raise DimensionError(f"dimension mismatch: {a.size}, {p.size}, {n.size}")
    return a, p, n


def scalar_projection(anchor, other, cfg: MarginConfig = MarginConfig()) -> float:
    a = as_vector(anchor, "anchor")
    x = as_vector(other, "other")
    if a.shape != x.shape:
        raise DimensionError(f"dimension mismatch: {a.size} vs {x.size}")
    return float(np.dot(a, x) / max(np.sqrt(np.dot(a, a)), cfg.epsilon))


def shadow_deltas(anchor, positive, negative, cfg: MarginConfig = MarginConfig()) -> ProjectionPair:
    a, p, n = _check_triplet(anchor, positive, negative)
    r, proj_p, proj_n = shadow_projections(a[None], p[None], n[None], cfg.epsilon)
    return ProjectionPair(float(abs(r[0] - proj_p[0])), float(abs(r[0] - proj_n[0])))


# -- vectorized kernels over T triplets (rows of A, P, N) -------------------

def shadow_projections(A: np.ndarray, P: np.ndarray, N: np.ndarray, epsilon: float):
    """Per-row anchor norm and the two scalar projections (3 scalars per triplet)."""
    r = np.sqrt(np.einsum("ij,ij->i", A, A))
    denom = np.maximum(r, epsilon)
    proj_p = np.einsum("ij,ij->i", A, P) / denom
    proj_n = np.einsum("ij,ij->i", A, N) / denom
    return r, proj_p, proj_n


def shadow_hinge(r, proj_p, proj_n, alpha: float):
    """Pre-hinge expression and loss values from the projection scalars alone."""
    # (d+ + alpha) - d- is <= 0 exactly when d+ + alpha <= d- in floating point
    pre = (np.abs(r - proj_p) + alpha) - np.abs(r - proj_n)
    return pre, np.maximum(pre, 0.0)


def shadow_gradients(A, P, N, r, proj_p, proj_n, pre, epsilon: float):
    denom = np.maximum(r, epsilon)
    sign_p = np.sign(r - proj_p)
    sign_n = np.sign(r - proj_n)
    live = (pre > 0).astype(np.float64)

    safe_r = np.where(r > 0, r, 1.0)
    dr_da = np.where((r > 0)[:, None], A / safe_r[:, None], 0.0)
    floored = (r < epsilon)[:, None]
    # d proj(a, x) / d a: x/|a| - (a.x) a / |a|^3, or x/eps below the floor
    r3 = (safe_r ** 3)[:, None]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):  # discarded where floored
        dpp_da = np.where(floored, P / epsilon, P / safe_r[:, None] - (proj_p * r)[:, None] * A / r3)
        dpn_da = np.where(floored, N / epsilon, N / safe_r[:, None] - (proj_n * r)[:, None] * A / r3)
    u = A / denom[:, None]

    ga = sign_p[:, None] * (dr_da - dpp_da) - sign_n[:, None] * (dr_da - dpn_da)
    gp = -sign_p[:, None] * u
    gn = sign_n[:, None] * u
    m = live[:, None]
    return ga * m, gp * m, gn * m


def triplet_hinge(A, P, N, alpha: float):
    dp = np.einsum("ij,ij->i", A - P, A - P)
    dn = np.einsum("ij,ij->i", A - N, A - N)
    pre = dp - dn + alpha
    return pre, np.maximum(pre, 0.0)


def triplet_gradients(A, P, N, pre):
    m = (pre > 0).astype(np.float64)[:, None]
    return 2.0 * (N - P) * m, -2.0 * (A - P) * m, 2.0 * (A - N) * m


def _single(kind: LossKind, anchor, positive, negative, cfg: MarginConfig) -> LossResult:
    a, p, n = _check_triplet(anchor, positive, negative)
    A, P, N = a[None, :], p[None, :], n[None, :]
    if kind == "shadow":
        r, pp, pn = shadow_projections(A, P, N, cfg.epsilon)
        pre, val = shadow_hinge(r, pp, pn, cfg.alpha)
        ga, gp, gn = shadow_gradients(A, P, N, r, pp, pn, pre, cfg.epsilon)
    else:
        pre, val = triplet_hinge(A, P, N, cfg.alpha)
        ga, gp, gn = triplet_gradients(A, P, N, pre)
    if not np.isfinite(pre[0]):
        raise NumericError("loss evaluated to a non-finite value")
    return LossResult(float(val[0]), ga[0], gp[0], gn[0], bool(pre[0] >= 0))


def shadow_loss_single(anchor, positive, negative, cfg: MarginConfig = MarginConfig()) -> LossResult:
    return _single("shadow", anchor, positive, negative, cfg)


def triplet_loss_single(anchor, positive, negative, cfg: MarginConfig = MarginConfig()) -> LossResult:
    return _single("triplet", anchor, positive, negative, cfg)


def triplet_array(triplets) -> np.ndarray:
    idx = np.asarray(triplets, dtype=np.int64)
    if idx.size == 0:
        return idx.reshape(0, 3)
    if idx.ndim != 2 or idx.shape[1] != 3:
        raise DimensionError(f"triplets must be (anchor, positive, negative) rows, got shape {idx.shape}")
    return idx


def batch_loss(
    batch,
    triplets,
    kind: LossKind = "shadow",
    cfg: MarginConfig = MarginConfig(),
    reduction: Literal["mean", "sum"] = "mean",
    tracker=None,
) -> tuple[float, np.ndarray]:
    """Reduce per-triplet losses over a batch and return the row gradients.

    ``batch`` is an :class:`~shadowloss.mining.EmbeddingBatch` (labels are then
    checked against the triplet constraints) or a bare S x D matrix. The
    returned gradient has one row per embedding; a row collects contributions
    from every triplet it appears in, whatever the role.

    ``tracker`` (see :mod:`shadowloss.memtrace`) is told which arrays the loss
    stage holds as its inputs.
    """
    if kind not in LOSS_KINDS:
        raise ParameterError(f"unknown loss kind {kind!r}")
    if reduction not in ("mean", "sum"):
        raise ParameterError(f"unknown reduction {reduction!r}")
    E = as_matrix(getattr(batch, "embeddings", batch), "embeddings")
    idx = triplet_array(triplets)
    if len(idx) == 0:
        raise EmptyBatchError("batch_loss needs at least one triplet")
    S = E.shape[0]
    if idx.min() < 0 or idx.max() >= S:
        raise DimensionError(f"triplet index out of range for {S} embeddings")
    labels = getattr(batch, "labels", None)
    if labels is not None:
        labels = np.asarray(labels)
        a_l, p_l, n_l = labels[idx[:, 0]], labels[idx[:, 1]], labels[idx[:, 2]]
        if np.any(idx[:, 0] == idx[:, 1]) or np.any(a_l != p_l) or np.any(a_l == n_l):
            raise ParameterError("triplet violates anchor/positive/negative label constraints")

    a_i, p_i, n_i = idx[:, 0], idx[:, 1], idx[:, 2]
    if kind == "shadow":
        r, proj_p, proj_n = shadow_projections(E[a_i], E[p_i], E[n_i], cfg.epsilon)
        if tracker is not None:
            tracker.retain("anchor_norm", r)
            tracker.retain("proj_positive", proj_p)
            tracker.retain("proj_negative", proj_n)
        pre, values = shadow_hinge(r, proj_p, proj_n, cfg.alpha)
        if tracker is not None:
            tracker.release_all()
        ga, gp, gn = shadow_gradients(E[a_i], E[p_i], E[n_i], r, proj_p, proj_n, pre, cfg.epsilon)
    else:
        A, P, N = E[a_i], E[p_i], E[n_i]
        if tracker is not None:
            tracker.retain("anchor", A)
            tracker.retain("positive", P)
            tracker.retain("negative", N)
        pre, values = triplet_hinge(A, P, N, cfg.alpha)
        if tracker is not None:
            tracker.release_all()
        ga, gp, gn = triplet_gradients(A, P, N, pre)

    if not np.all(np.isfinite(values)):
        raise NumericError("loss evaluated to a non-finite value")
    grad = np.zeros_like(E)
    np.add.at(grad, a_i, ga)
    np.add.at(grad, p_i, gp)
    np.add.at(grad, n_i, gn)
    total = float(np.sum(values))
    if reduction == "mean":
        return total / len(idx), grad / len(idx)
    return total, grad
