"""Analytic-vs-finite-difference gradient checks for the losses and the network."""
from __future__ import annotations

import numpy as np

from .embednet import backward, default_architecture, forward, init_network
from .losses import (
    MarginConfig,
    batch_loss,
    shadow_hinge,
    shadow_loss_single,
    shadow_projections,
    triplet_hinge,
    triplet_loss_single,
)
from .mining import EmbeddingBatch, mine_semi_hard
from .numerics import RandomSource

KERNEL_TOLERANCE = 1e-5
NETWORK_TOLERANCE = 1e-4
# central-difference rounding noise is about eps * |loss| / step; components
# below NOISE_MARGIN times that are compared on the noise scale instead
NOISE_MARGIN = 1e5


def central_difference(f, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat, g = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        g[i] = (hi - lo) / (2 * step)
    return grad


def _values(kind: str, X: np.ndarray, D: int, cfg: MarginConfig) -> np.ndarray:
    """Loss values for each row of X = [a | p | n] (forward pass only)."""
    A, P, N = X[:, :D], X[:, D:2 * D], X[:, 2 * D:]
    if kind == "shadow":
        return shadow_hinge(*shadow_projections(A, P, N, cfg.epsilon), cfg.alpha)[1]
    return triplet_hinge(A, P, N, cfg.alpha)[1]


def batched_central_difference(kind: str, x: np.ndarray, D: int, cfg: MarginConfig, step: float) -> np.ndarray:
    eye = np.eye(x.size) * step
    return (_values(kind, x + eye, D, cfg) - _values(kind, x - eye, D, cfg)) / (2 * step)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Largest component error, relative to the larger gradient's max magnitude."""
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def near_kink(kind: str, a, p, n, cfg: MarginConfig, tol: float) -> bool:
    """True when any non-smooth point lies within ``tol`` of the sample."""
    a, p, n = (np.asarray(x, dtype=np.float64) for x in (a, p, n))
    if kind == "shadow":
        r = np.linalg.norm(a)
        if r < max(tol, cfg.epsilon):
            return True
        sp = r - a @ p / r
        sn = r - a @ n / r
        pre = abs(sp) - abs(sn) + cfg.alpha
        return min(abs(sp), abs(sn), abs(pre)) < tol
    pre = (a - p) @ (a - p) - (a - n) @ (a - n) + cfg.alpha
    return abs(pre) < tol


def check_kernels(dims=(2, 8, 64), trials: int = 1000, seed: int = 0, cfg: MarginConfig = MarginConfig(),
                  step: float = 1e-6, kink_tol: float = 1e-4) -> dict:
    """Sample ``trials`` non-kink triplets per (kind, dim) and compare gradients."""
    rng = RandomSource(seed)
    single = {"shadow": shadow_loss_single, "triplet": triplet_loss_single}
    out = {}
    for kind, fn in single.items():
        worst, checked, skipped, active = 0.0, 0, 0, 0
        for D in dims:
            done = 0
            while done < trials:
                a, p, n = (rng.gaussian(0.0, 1.0, size=D) for _ in range(3))
                if near_kink(kind, a, p, n, cfg, kink_tol):
                    skipped += 1
                    continue
                res = fn(a, p, n, cfg)
                analytic = np.concatenate([res.grad_anchor, res.grad_positive, res.grad_negative])
                x = np.concatenate([a, p, n])
                numeric = batched_central_difference(kind, x, D, cfg, step)
                worst = max(worst, relative_error(analytic, numeric))
                active += res.value > 0
                done += 1
            checked += done
        out[kind] = {"max_relative_error": worst, "samples": checked, "active_samples": int(active),
                     "kink_excluded": skipped, "passed": bool(worst < KERNEL_TOLERANCE)}
    return out


def check_network(kind: str, input_dim: int = 16, hidden=(32, 16), embedding_dim: int = 8, rows: int = 24,
                  params: int = 100, seed: int = 0, cfg: MarginConfig = MarginConfig(),
                  step: float = 1e-6) -> dict:
    """End-to-end check of d(mean batch loss)/d(parameter) on a frozen mined batch."""
    rng = RandomSource(seed)
    state = init_network(default_architecture(input_dim, hidden, embedding_dim), rng.derive("init"))
    X = rng.gaussian(0.0, 1.0, size=(rows, input_dim))
    labels = np.arange(rows) % 4
    emb, trace = forward(state, X)
    triplets = mine_semi_hard(EmbeddingBatch(emb, labels), cfg).triplets
    loss, grad_emb = batch_loss(EmbeddingBatch(emb, labels), triplets, kind, cfg)
    grads = backward(state, trace, grad_emb)
    floor = NOISE_MARGIN * np.finfo(np.float64).eps * max(1.0, abs(loss)) / step

    def loss_at() -> float:
        e, _ = forward(state, X)
        return batch_loss(EmbeddingBatch(e, labels), triplets, kind, cfg)[0]

    pick = rng.derive("params")
    sizes = np.array([p.size for p in state.params])
    worst = 0.0
    for _ in range(params):
        which = int(pick.integers(0, len(sizes)))
        idx = int(pick.integers(0, sizes[which]))
        flat = state.params[which].reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + step
        hi = loss_at()
        flat[idx] = orig - step
        lo = loss_at()
        flat[idx] = orig
        numeric = (hi - lo) / (2 * step)
        analytic = grads[which].reshape(-1)[idx]
        worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor))
    return {"max_relative_error": float(worst), "parameters_checked": params, "passed": bool(worst < NETWORK_TOLERANCE)}


def run_gradcheck(dims=(2, 8, 64), trials: int = 1000, seed: int = 0, cfg: MarginConfig = MarginConfig()) -> dict:
    kernels = check_kernels(dims, trials, seed, cfg)
    network = {kind: check_network(kind, seed=seed, cfg=cfg) for kind in ("shadow", "triplet")}
    passed = all(v["passed"] for v in kernels.values()) and all(v["passed"] for v in network.values())
    return {"dims": list(dims), "trials_per_dim": trials, "seed": seed,
            "kernels": kernels, "network": network, "passed": passed}
