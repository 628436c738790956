"""Server-side aggregation strategies.

Two rules operate on schema-compatible ParameterSets:

* fedavg_aggregate -- fixed-coefficient convex combination (uniform or
  proportional to client sample counts).
* fedatt_aggregate -- per-layer softmax over client-to-global L2 distances
  sets the combination weights, applied as one gradient step of size epsilon
  on the weighted squared-distance objective:

      w_{t+1} = w_t - epsilon * sum_k alpha_k (w_t - w^k_{t+1})

Softmax runs over raw (positive) distances with max-subtraction, so
more-distant clients receive strictly larger attention.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .params import ParameterSet, SchemaError, assert_schema_compatible


class Strategy(str, Enum):
    FEDAVG = "fedavg"
    FEDATT = "fedatt"


class FedAvgCoefficients(str, Enum):
    UNIFORM = "uniform"
    DATA_PROPORTIONAL = "data_proportional"


@dataclass(frozen=True)
class AggregationConfig:
    strategy: Strategy = Strategy.FEDATT
    epsilon: float = 1.0
    fedavg_coefficients: FedAvgCoefficients = FedAvgCoefficients.UNIFORM

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class AttentionWeights:
    """Per-layer softmax weights, one vector entry per client."""

    per_layer: dict[str, np.ndarray]

    def __post_init__(self):
        for name, vec in self.per_layer.items():
            vec = np.asarray(vec, dtype=np.float64)
            if not np.all((vec > 0) & (vec <= 1)):
                raise ValueError(f"layer {name!r}: weights outside (0, 1]")
            if abs(vec.sum() - 1.0) > 1e-9:
                raise ValueError(f"layer {name!r}: weights sum to {vec.sum()}")


def _softmax(scores: np.ndarray) -> np.ndarray:
    e = np.exp(scores - scores.max())
    return e / e.sum()


def attention_weights(global_params: ParameterSet,
                      clients: Sequence[ParameterSet]) -> AttentionWeights:
    """Per-layer softmax over each client's L2 distance to the global layer."""
    if not clients:
        raise ValueError("attention_weights requires at least one client")
    assert_schema_compatible([global_params, *clients])
    per_layer = {}
    for i, g_layer in enumerate(global_params.layers):
        dists = np.array(
            [np.linalg.norm(g_layer.values - c.layers[i].values) for c in clients]
        )
        per_layer[g_layer.name] = _softmax(dists)
    return AttentionWeights(per_layer=per_layer)


def fedatt_aggregate(global_params: ParameterSet,
                     clients: Sequence[ParameterSet],
                     config: AggregationConfig) -> tuple[ParameterSet, AttentionWeights]:
    """One attention-weighted gradient step of the global parameters toward the clients."""
    if config.strategy is not Strategy.FEDATT:
        raise ValueError(f"fedatt_aggregate called with strategy {config.strategy}")
    weights = attention_weights(global_params, clients)
    from .params import LayerParams  # local import keeps module load order simple

    out = []
    for i, g_layer in enumerate(global_params.layers):
        alpha = weights.per_layer[g_layer.name]
        grad = np.zeros_like(g_layer.values)
        for a_k, client in zip(alpha, clients):
            grad += a_k * (g_layer.values - client.layers[i].values)
        out.append(LayerParams(name=g_layer.name, shape=g_layer.shape,
                               values=g_layer.values - config.epsilon * grad))
    return ParameterSet(layers=tuple(out)), weights


def fedavg_aggregate(clients: Sequence[ParameterSet],
                     sample_counts: Sequence[int],
                     config: AggregationConfig) -> ParameterSet:
    """Fixed-coefficient convex combination of the client parameters."""
    if not clients:
        raise ValueError("fedavg_aggregate requires at least one client")
    if len(sample_counts) != len(clients):
        raise ValueError(
            f"{len(sample_counts)} sample counts for {len(clients)} clients"
        )
    assert_schema_compatible(clients)
    if config.fedavg_coefficients is FedAvgCoefficients.UNIFORM:
        coeffs = [1.0 / len(clients)] * len(clients)
    else:
        total = float(sum(sample_counts))
        if total <= 0:
            raise ValueError("total sample count is zero")
        coeffs = [n / total for n in sample_counts]
    from .params import linear_combine

    return linear_combine(clients, coeffs)


def aggregation_loss(global_params: ParameterSet,
                     clients: Sequence[ParameterSet],
                     weights: AttentionWeights) -> float:
    """sum_k 1/2 * alpha_k * ||w_t - w^k||^2, accumulated over layers. Logging only."""
    assert_schema_compatible([global_params, *clients])
    total = 0.0
    for i, g_layer in enumerate(global_params.layers):
        alpha = weights.per_layer[g_layer.name]
        for a_k, client in zip(alpha, clients):
            diff = g_layer.values - client.layers[i].values
            total += 0.5 * a_k * float(diff @ diff)
    return total
