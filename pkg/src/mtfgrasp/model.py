"""Learners and the local SGD update every robot runs.

Parameters are flat float64 vectors. Layout is row-major weights then
biases, layer by layer:

* logistic regression: ``W (d, m)``, ``b (m,)``
* one-hidden-layer tanh MLP: ``W1 (d, h)``, ``b1 (h,)``, ``W2 (h, m)``, ``b2 (m,)``
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

import numpy as np

from .rng import SplitMix64, derive_seed

if TYPE_CHECKING:
    from .data import ClientDataset

ModelParams = np.ndarray

INIT_SCALE = 0.1


class LearnerKind(str, Enum):
    LOGISTIC = "logistic"
    MLP = "mlp"


@dataclass(frozen=True)
class LearnerSpec:
    kind: LearnerKind
    input_dim: int
    num_classes: int
    hidden_units: int = 16

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", LearnerKind(self.kind))
        if self.input_dim < 1:
            raise ValueError(f"input_dim must be >= 1, got {self.input_dim}")
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.kind is LearnerKind.MLP and self.hidden_units < 1:
            raise ValueError(f"hidden_units must be >= 1, got {self.hidden_units}")

    def layer_shapes(self) -> list[tuple[tuple[int, int], int]]:
        """(weight shape, bias length) per layer, in flat-layout order."""
        d, m = self.input_dim, self.num_classes
        if self.kind is LearnerKind.LOGISTIC:
            return [((d, m), m)]
        h = self.hidden_units
        return [((d, h), h), ((h, m), m)]

    @property
    def dim(self) -> int:
        return sum(r * c + b for (r, c), b in self.layer_shapes())


@dataclass(frozen=True)
class Hyperparams:
    eta: float = 0.05
    batch_size: int = 16
    e_t: int = 5
    e_r: int = 15
    rounds: int = 10
    lambda_dds: float = 0.5
    lambda_dqs: float = 0.5
    j: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.e_t < 0:
            raise ValueError(f"e_t must be >= 0, got {self.e_t}")
        if self.e_r < 1:
            raise ValueError(f"e_r must be >= 1, got {self.e_r}")
        if self.rounds < 0:
            raise ValueError(f"rounds must be >= 0, got {self.rounds}")
        if self.lambda_dds < 0 or self.lambda_dqs < 0:
            raise ValueError("lambda weights must be nonnegative")
        if not self.lambda_dds + self.lambda_dqs > 0:
            raise ValueError("lambda_dds + lambda_dqs must be > 0")
        if self.j < 1:
            raise ValueError(f"j must be >= 1, got {self.j}")


def _unpack(params: ModelParams, spec: LearnerSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    if params.ndim != 1 or params.shape[0] != spec.dim:
        raise ValueError(f"parameter vector has shape {params.shape}, expected ({spec.dim},)")
    layers = []
    off = 0
    for (r, c), b in spec.layer_shapes():
        W = params[off : off + r * c].reshape(r, c)
        off += r * c
        layers.append((W, params[off : off + b]))
        off += b
    return layers


def init_model(spec: LearnerSpec, seed: int) -> ModelParams:
    """Weights ~ U(-0.1, 0.1) from SplitMix64(seed), biases zero."""
    rng = SplitMix64(seed)
    out = np.zeros(spec.dim)
    off = 0
    for (r, c), b in spec.layer_shapes():
        for k in range(r * c):
            out[off + k] = rng.uniform(-INIT_SCALE, INIT_SCALE)
        off += r * c + b
    return out


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def _check_batch(X: np.ndarray, y: np.ndarray, spec: LearnerSpec) -> None:
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise ValueError(f"features have shape {X.shape}, expected (*, {spec.input_dim})")
    if y.shape != (X.shape[0],):
        raise ValueError("labels and features disagree in length")


def scores(params: ModelParams, spec: LearnerSpec, X: np.ndarray) -> np.ndarray:
    """Class logits, shape (N, m)."""
    layers = _unpack(params, spec)
    if spec.kind is LearnerKind.LOGISTIC:
        W, b = layers[0]
        return X @ W + b
    (W1, b1), (W2, b2) = layers
    return np.tanh(X @ W1 + b1) @ W2 + b2


def loss_and_grad(
    params: ModelParams, spec: LearnerSpec, X: np.ndarray, y: np.ndarray
) -> tuple[float, ModelParams]:
    """Mean cross-entropy over the batch and its exact gradient."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    _check_batch(X, y, spec)
    N = X.shape[0]
    layers = _unpack(params, spec)
    rows = np.arange(N)

    if spec.kind is LearnerKind.LOGISTIC:
        W, b = layers[0]
        logp = _log_softmax(X @ W + b)
        delta = np.exp(logp)
        delta[rows, y] -= 1.0
        delta /= N
        grads = [X.T @ delta, delta.sum(axis=0)]
    else:
        (W1, b1), (W2, b2) = layers
        H = np.tanh(X @ W1 + b1)
        logp = _log_softmax(H @ W2 + b2)
        delta = np.exp(logp)
        delta[rows, y] -= 1.0
        delta /= N
        dH = (delta @ W2.T) * (1.0 - H * H)
        grads = [X.T @ dH, dH.sum(axis=0), H.T @ delta, delta.sum(axis=0)]

    loss = float(-logp[rows, y].mean())
    return loss, np.concatenate([g.ravel() for g in grads])


def num_batches(n_samples: int, batch_size: int) -> int:
    return math.ceil(n_samples / batch_size)


def local_update(
    params: ModelParams,
    spec: LearnerSpec,
    data: ClientDataset,
    epochs: int,
    hp: Hyperparams,
    round_index: int = 0,
    stage: int = 0,
) -> ModelParams:
    """Run ``epochs`` passes of mini-batch SGD over ``data``.

    Each epoch shuffles with SplitMix64 seeded by
    ``derive_seed(hp.seed, robot_id, round_index, stage, epoch)``. ``stage``
    separates the two trainings a top-level robot performs in one round.
    The last batch of an epoch may be short.
    """
    if epochs < 0:
        raise ValueError(f"epochs must be >= 0, got {epochs}")
    if data.total == 0:
        raise ValueError(f"robot {data.robot_id} has no data")
    w = np.array(params, dtype=float, copy=True)
    if epochs == 0:
        return w
    N, B = data.total, hp.batch_size
    for epoch in range(epochs):
        order = SplitMix64(derive_seed(hp.seed, data.robot_id, round_index, stage, epoch)).permutation(N)
        for start in range(0, N, B):
            idx = order[start : start + B]
            _, g = loss_and_grad(w, spec, data.X[idx], data.y[idx])
            w -= hp.eta * g
    if not np.all(np.isfinite(w)):
        raise FloatingPointError(f"non-finite parameters after training robot {data.robot_id}")
    return w


def predict(params: ModelParams, spec: LearnerSpec, X: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(scores(params, spec, np.asarray(X, dtype=float)), axis=1)


def evaluate(params: ModelParams, spec: LearnerSpec, X: np.ndarray, y: np.ndarray) -> float:
    """Fraction of samples whose top-scoring class equals the label."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise ValueError("empty test set")
    return float(np.mean(predict(params, spec, X) == y))
