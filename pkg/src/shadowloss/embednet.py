"""Fully connected embedding network with manual backprop, Adam and StepLR.

One tower is shared by the anchor, positive and negative roles: a whole batch
goes through :func:`forward` once and the loss gradient for every row, whatever
role it played, flows back into the same parameters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import ConfigurationError, DimensionError, FormatError, StateError
from .numerics import RandomSource, as_matrix

CHECKPOINT_FORMAT = "shadowloss-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: Literal["relu", "identity"] = "relu"


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class StepSchedule:
    base_lr: float = 1e-4
    step_size: int = 20
    gamma: float = 0.1
    current_epoch: int = 0

    @property
    def lr(self) -> float:
        return self.base_lr * self.gamma ** (self.current_epoch // self.step_size)


@dataclass
class EmbedNetState:
    specs: list[LayerSpec]
    params: list[np.ndarray]  # W0, b0, W1, b1, ...
    adam: AdamState
    scheduler: StepSchedule = field(default_factory=StepSchedule)
    version: int = 0

    @property
    def weights(self) -> list[np.ndarray]:
        return self.params[0::2]

    @property
    def biases(self) -> list[np.ndarray]:
        return self.params[1::2]

    @property
    def parameter_count(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "EmbedNetState":
        return EmbedNetState(
            specs=list(self.specs),
            params=[p.copy() for p in self.params],
            adam=AdamState([m.copy() for m in self.adam.m], [v.copy() for v in self.adam.v],
                           self.adam.t, self.adam.beta1, self.adam.beta2, self.adam.eps),
            scheduler=StepSchedule(**vars(self.scheduler)),
            version=self.version,
        )


@dataclass
class ForwardTrace:
    inputs: list[np.ndarray]  # input to each layer
    pre_activations: list[np.ndarray]
    version: int
    owner: int


def default_architecture(input_dim: int, hidden=(128, 64), embedding_dim: int = 32) -> list[LayerSpec]:
    dims = [input_dim, *hidden, embedding_dim]
    specs = [LayerSpec(i, o, "relu") for i, o in zip(dims[:-2], dims[1:-1])]
    specs.append(LayerSpec(dims[-2], dims[-1], "identity"))
    return specs


def init_network(
    specs: list[LayerSpec],
    rng: RandomSource,
    base_lr: float = 1e-4,
    step_size: int = 20,
    gamma: float = 0.1,
) -> EmbedNetState:
    """He-normal weights (std sqrt(2 / fan_in)), zero biases, zero Adam moments."""
    if not specs:
        raise ConfigurationError("network needs at least one layer")
    for prev, nxt in zip(specs, specs[1:]):
        if prev.output_dim != nxt.input_dim:
            raise ConfigurationError(f"layer dims do not chain: {prev.output_dim} -> {nxt.input_dim}")
    for s in specs:
        if s.input_dim < 1 or s.output_dim < 1:
            raise ConfigurationError(f"layer dims must be >= 1: {s}")
        if s.activation not in ("relu", "identity"):
            raise ConfigurationError(f"unknown activation {s.activation!r}")
    if specs[-1].activation != "identity":
        raise ConfigurationError("the final layer must use the identity activation")
    if step_size < 1:
        raise ConfigurationError("step_size must be >= 1")

    params = []
    for s in specs:
        std = math.sqrt(2.0 / s.input_dim)
        params.append(rng.gaussian(0.0, std, size=(s.input_dim, s.output_dim)))
        params.append(np.zeros(s.output_dim))
    adam = AdamState([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])
    return EmbedNetState(list(specs), params, adam, StepSchedule(base_lr, step_size, gamma, 0))


def forward(state: EmbedNetState, inputs) -> tuple[np.ndarray, ForwardTrace]:
    X = as_matrix(inputs, "inputs")
    if X.shape[1] != state.specs[0].input_dim:
        raise DimensionError(f"expected {state.specs[0].input_dim} input columns, got {X.shape[1]}")
    layer_inputs, pres = [], []
    h = X
    for spec, W, b in zip(state.specs, state.weights, state.biases):
        layer_inputs.append(h)
        z = h @ W + b
        pres.append(z)
        h = np.maximum(z, 0.0) if spec.activation == "relu" else z
    return h, ForwardTrace(layer_inputs, pres, state.version, id(state))


def embed(state: EmbedNetState, inputs) -> np.ndarray:
    return forward(state, inputs)[0]


def backward(state: EmbedNetState, trace: ForwardTrace, grad_embeddings) -> list[np.ndarray]:
    """Parameter gradients in the same order as ``state.params``."""
    if trace.owner != id(state) or trace.version != state.version:
        raise StateError("trace does not belong to the current parameters; run forward again")
    if len(trace.inputs) != len(state.specs):
        raise StateError("trace depth does not match the network")
    g = np.asarray(grad_embeddings, dtype=np.float64)
    if g.shape != trace.pre_activations[-1].shape:
        raise DimensionError(f"grad shape {g.shape} != output shape {trace.pre_activations[-1].shape}")
    grads: list[np.ndarray] = [None] * len(state.params)  # type: ignore[list-item]
    for k in range(len(state.specs) - 1, -1, -1):
        if state.specs[k].activation == "relu":
            g = g * (trace.pre_activations[k] > 0)
        grads[2 * k] = trace.inputs[k].T @ g
        grads[2 * k + 1] = g.sum(axis=0)
        if k:
            g = g @ state.weights[k].T
    return grads


def adam_step(state: EmbedNetState, grads: list[np.ndarray]) -> EmbedNetState:
    """Bias-corrected Adam update at the scheduler's current lr (in place)."""
    if len(grads) != len(state.params) or any(g.shape != p.shape for g, p in zip(grads, state.params)):
        raise StateError("gradients do not match the parameter shapes")
    opt = state.adam
    opt.t += 1
    lr = state.scheduler.lr
    c1 = 1.0 - opt.beta1 ** opt.t
    c2 = 1.0 - opt.beta2 ** opt.t
    for p, g, m, v in zip(state.params, grads, opt.m, opt.v):
        m *= opt.beta1
        m += (1.0 - opt.beta1) * g
        v *= opt.beta2
        v += (1.0 - opt.beta2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    state.version += 1
    return state


def scheduler_epoch_end(state: EmbedNetState) -> EmbedNetState:
    state.scheduler.current_epoch += 1
    return state


def save_checkpoint(state: EmbedNetState, path) -> None:
    """Write an ``.npz`` archive. Layout (all float64 unless noted):

    ``format`` (str), ``version`` (int), ``specs`` (int rows: in, out, relu?),
    ``param_{i}``, ``adam_m_{i}``, ``adam_v_{i}`` for each parameter,
    ``adam`` = [t, beta1, beta2, eps], ``scheduler`` = [base_lr, step_size,
    gamma, current_epoch].
    """
    arrays = {
        "format": np.array(CHECKPOINT_FORMAT),
        "version": np.array(CHECKPOINT_VERSION),
        "specs": np.array([[s.input_dim, s.output_dim, s.activation == "relu"] for s in state.specs],
                          dtype=np.int64),
        "adam": np.array([state.adam.t, state.adam.beta1, state.adam.beta2, state.adam.eps]),
        "scheduler": np.array([state.scheduler.base_lr, state.scheduler.step_size,
                               state.scheduler.gamma, state.scheduler.current_epoch]),
    }
    for i, (p, m, v) in enumerate(zip(state.params, state.adam.m, state.adam.v)):
        arrays[f"param_{i}"] = p
        arrays[f"adam_m_{i}"] = m
        arrays[f"adam_v_{i}"] = v
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> EmbedNetState:
    path = Path(path)
    with np.load(path, allow_pickle=False) as z:
        if "format" not in z or str(z["format"]) != CHECKPOINT_FORMAT:
            raise FormatError(f"{path} is not a shadowloss checkpoint")
        if int(z["version"]) != CHECKPOINT_VERSION:
            raise FormatError(f"unsupported checkpoint version {int(z['version'])}")
        specs = [LayerSpec(int(i), int(o), "relu" if r else "identity") for i, o, r in z["specs"]]
        n = 2 * len(specs)
        params = [z[f"param_{i}"].copy() for i in range(n)]
        t, b1, b2, eps = z["adam"]
        adam = AdamState([z[f"adam_m_{i}"].copy() for i in range(n)],
                         [z[f"adam_v_{i}"].copy() for i in range(n)],
                         int(t), float(b1), float(b2), float(eps))
        base_lr, step, gamma, epoch = z["scheduler"]
        sched = StepSchedule(float(base_lr), int(step), float(gamma), int(epoch))
    return EmbedNetState(specs, params, adam, sched)
