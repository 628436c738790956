"""Layer-wise parameter containers and the vector algebra shared by all aggregation rules.

A ParameterSet is an ordered list of named, shaped, flat float64 vectors.
Two sets are "schema-compatible" iff layer order, names, and shapes match
exactly. All operations here are pure and fail fast on NaN/Inf.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class SchemaError(ValueError):
    """Raised when parameter sets disagree on layer names, shapes, or order."""


@dataclass(frozen=True)
class LayerParams:
    name: str
    shape: tuple[int, ...]
    values: np.ndarray  # flat float64, length == prod(shape)

    def __post_init__(self):
        if not self.name:
            raise ValueError("layer name must be non-empty")
        shape = tuple(int(d) for d in self.shape)
        if not shape or any(d <= 0 for d in shape):
            raise ValueError(f"layer {self.name!r}: shape must be positive, got {shape}")
        values = np.ascontiguousarray(self.values, dtype=np.float64).ravel()
        if values.size != math.prod(shape):
            raise ValueError(
                f"layer {self.name!r}: {values.size} values for shape {shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError(f"layer {self.name!r}: non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "values", values)

    def reshaped(self) -> np.ndarray:
        return self.values.reshape(self.shape)


@dataclass(frozen=True)
class ParameterSet:
    layers: tuple[LayerParams, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        names = [lp.name for lp in layers]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate layer names: {names}")
        object.__setattr__(self, "layers", layers)

    @property
    def schema(self) -> tuple[tuple[str, tuple[int, ...]], ...]:
        return tuple((lp.name, lp.shape) for lp in self.layers)

    def layer(self, name: str) -> LayerParams:
        for lp in self.layers:
            if lp.name == name:
                return lp
        raise KeyError(name)

    def num_values(self) -> int:
        return sum(lp.values.size for lp in self.layers)

    def to_json(self) -> str:
        doc = {
            "order": [lp.name for lp in self.layers],
            "layers": {
                lp.name: {"shape": list(lp.shape), "values": lp.values.tolist()}
                for lp in self.layers
            },
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "ParameterSet":
        doc = json.loads(text)
        layers = []
        for name in doc["order"]:
            entry = doc["layers"][name]
            layers.append(
                LayerParams(name=name, shape=tuple(entry["shape"]),
                            values=np.asarray(entry["values"], dtype=np.float64))
            )
        return cls(layers=tuple(layers))


def layer_l2_distance(a: LayerParams, b: LayerParams) -> float:
    """Euclidean distance between two same-shaped layers."""
    if a.shape != b.shape:
        raise SchemaError(
            f"shape mismatch: {a.name!r} {a.shape} vs {b.name!r} {b.shape}"
        )
    return float(np.linalg.norm(a.values - b.values))


def assert_schema_compatible(sets: Sequence[ParameterSet]) -> None:
    """Succeeds iff all sets share one schema; names the first divergent layer."""
    if len(sets) < 2:
        return
    ref = sets[0]
    for other in sets[1:]:
        if len(other.layers) != len(ref.layers):
            raise SchemaError(
                f"layer count mismatch: {len(ref.layers)} vs {len(other.layers)}"
            )
        for la, lb in zip(ref.layers, other.layers):
            if la.name != lb.name or la.shape != lb.shape:
                raise SchemaError(
                    f"schema mismatch at layer {la.name!r}: "
                    f"({la.name!r}, {la.shape}) vs ({lb.name!r}, {lb.shape})"
                )


def linear_combine(sets: Sequence[ParameterSet], coefficients: Sequence[float]) -> ParameterSet:
    """Element-wise sum_k c_k * sets[k]; preserves the shared schema."""
    if not sets:
        raise ValueError("linear_combine requires at least one set")
    if len(coefficients) != len(sets):
        raise ValueError(
            f"{len(coefficients)} coefficients for {len(sets)} sets"
        )
    assert_schema_compatible(sets)
    coeffs = [float(c) for c in coefficients]
    out = []
    for i, ref_layer in enumerate(sets[0].layers):
        acc = np.zeros_like(ref_layer.values)
        for c, ps in zip(coeffs, sets):
            acc += c * ps.layers[i].values
        out.append(LayerParams(name=ref_layer.name, shape=ref_layer.shape, values=acc))
    return ParameterSet(layers=tuple(out))
