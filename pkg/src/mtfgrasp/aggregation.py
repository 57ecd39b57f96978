"""Weighted aggregation of flat parameter vectors."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .model import ModelParams


@dataclass
class WeightedModel:
    params: ModelParams
    weight: float
    steps: int = 0

    def __post_init__(self) -> None:
        self.params = np.asarray(self.params, dtype=float)
        if self.weight < 0:
            raise ValueError(f"weight must be >= 0, got {self.weight}")


def _pairwise_sum(terms: list[np.ndarray]) -> np.ndarray:
    while len(terms) > 1:
        nxt = [terms[k] + terms[k + 1] for k in range(0, len(terms) - 1, 2)]
        if len(terms) % 2:
            nxt.append(terms[-1])
        terms = nxt
    return terms[0]


def _check_dims(vectors: Sequence[np.ndarray]) -> None:
    if not vectors:
        raise ValueError("nothing to aggregate")
    dim = vectors[0].shape
    for v in vectors:
        if v.ndim != 1 or v.shape != dim:
            raise ValueError(f"dimension mismatch: {v.shape} vs {dim}")


def weighted_average(vectors: Sequence[np.ndarray], weights: Sequence[float]) -> ModelParams:
    """``sum(w_k / W * v_k)`` with pairwise summation over the models."""
    vectors = [np.asarray(v, dtype=float) for v in vectors]
    _check_dims(vectors)
    if len(weights) != len(vectors):
        raise ValueError("one weight per vector required")
    total = float(sum(weights))
    if not total > 0:
        raise ValueError("total aggregation weight must be > 0")
    return _pairwise_sum([(w / total) * v for v, w in zip(vectors, weights)])


def fedavg(models: Sequence[WeightedModel]) -> ModelParams:
    return weighted_average([m.params for m in models], [m.weight for m in models])


def aggregate_tier(models: Sequence[WeightedModel]) -> ModelParams:
    """Average the members of one low-level set, weighted by their sample counts."""
    return fedavg(models)


def aggregate_server(tier_models: Sequence[tuple[ModelParams, float]]) -> ModelParams:
    """Combine tier models weighted by each tier's total sample count."""
    return weighted_average([p for p, _ in tier_models], [t for _, t in tier_models])


def fednova(global_prev: ModelParams, models: Sequence[WeightedModel]) -> ModelParams:
    """Step-normalised averaging.

    With ``p_r = weight_r / sum(weight)`` and per-step update
    ``d_r = (global_prev - w_r) / steps_r``, returns
    ``global_prev - tau_eff * sum(p_r * d_r)`` where ``tau_eff = sum(p_r * steps_r)``.
    Zero-weight models are ignored.
    """
    global_prev = np.asarray(global_prev, dtype=float)
    _check_dims([global_prev] + [m.params for m in models])
    active = [m for m in models if m.weight > 0]
    if not active:
        raise ValueError("total aggregation weight must be > 0")
    for m in active:
        if m.steps < 1:
            raise ValueError(f"participating model has {m.steps} local steps; need >= 1")
    total = float(sum(m.weight for m in active))
    p = [m.weight / total for m in active]
    tau_eff = float(sum(pr * m.steps for pr, m in zip(p, active)))
    direction = _pairwise_sum([(pr / m.steps) * (global_prev - m.params) for pr, m in zip(p, active)])
    return global_prev - tau_eff * direction
