"""Synthetic trace generation, CSV ingestion, drift injection, and windowing.

A TraceSeries holds one fog's timestamped throughput stream. Feature
columns are fixed: sin/cos time-of-day encoding, a per-fog location code,
and the lagged target. The lag column is the only feature derived from the
target, so drift injection recomputes exactly that column.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .models import SupervisedBatch

# feature column layout for synthetic traces
FEATURE_NAMES = ("sin_tod", "cos_tod", "location", "lag_target")
LAG_FEATURE_INDEX = 3

# The normalized previous-value input is deliberately attenuated so that
# tracking a level shift in the target requires a correspondingly large weight
# on this feature. Without attenuation a unit weight suffices and a drifted
# node's locally adapted parameters stay so close to the global model that
# distance-based aggregation weights cannot tell drifted nodes apart.
LAG_ATTENUATION = 0.1


@dataclass(frozen=True)
class TraceSeries:
    fog_id: int
    timestamps: np.ndarray  # strictly increasing ints
    features: np.ndarray    # (T, D)
    target: np.ndarray      # (T,)

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        feats = np.asarray(self.features, dtype=np.float64)
        tgt = np.asarray(self.target, dtype=np.float64)
        if not (len(ts) == len(feats) == len(tgt)):
            raise ValueError("timestamps, features, target must share one length")
        if np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "target", tgt)

    def __len__(self) -> int:
        return len(self.target)

    def slice(self, start: int, stop: int) -> "TraceSeries":
        return TraceSeries(fog_id=self.fog_id,
                           timestamps=self.timestamps[start:stop],
                           features=self.features[start:stop],
                           target=self.target[start:stop])


class DriftKind(str, Enum):
    STEP = "step"
    TEMPORARY = "temporary"


@dataclass(frozen=True)
class DriftSpec:
    kind: DriftKind
    target_fogs: frozenset[int]
    start_round: int
    end_round: Optional[int] = None
    magnitude: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", DriftKind(self.kind))
        object.__setattr__(self, "target_fogs", frozenset(int(f) for f in self.target_fogs))
        if self.kind is DriftKind.TEMPORARY:
            if self.end_round is None or self.start_round >= self.end_round:
                raise ValueError("temporary drift needs start_round < end_round")
        elif self.end_round is not None:
            raise ValueError("step drift takes no end_round")

    def active_in_round(self, rnd: int) -> bool:
        if self.kind is DriftKind.STEP:
            return rnd >= self.start_round
        return self.start_round <= rnd < self.end_round


@dataclass(frozen=True)
class CsvSchema:
    timestamp_column: str
    target_column: str
    feature_columns: tuple[str, ...]
    fog_column: str

    def __post_init__(self):
        names = [self.timestamp_column, self.target_column,
                 self.fog_column, *self.feature_columns]
        if any(not n for n in names) or len(set(names)) != len(names):
            raise ValueError(f"schema columns must be distinct and non-empty: {names}")

    @property
    def all_columns(self) -> tuple[str, ...]:
        return (self.timestamp_column, self.target_column,
                self.fog_column, *self.feature_columns)


def _lagged(target: np.ndarray) -> np.ndarray:
    # first step has no history; repeat the first value
    return np.concatenate([target[:1], target[:-1]])


def generate_trace(fog_id: int, length: int, seed: int, *,
                   base: Optional[float] = None,
                   amplitude: float = 0.3,
                   period: int = 288,
                   ar_coef: float = 0.8,
                   innovation_std: float = 0.05,
                   min_length: int = 2) -> TraceSeries:
    """Deterministic synthetic throughput series for one fog.

    target_t = base + amplitude * sin(2*pi*t/period + phase) + AR(1) noise,
    where base and phase are fixed functions of fog_id. Features: sin/cos
    time-of-day, location code, lagged target.
    """
    if length < min_length:
        raise ValueError(f"length {length} too short (need >= {min_length})")
    if base is None:
        base = 1.0 + 0.3 * fog_id
    phase = 2.0 * np.pi * (fog_id % 8) / 8.0
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(fog_id)]))

    t = np.arange(length)
    noise = np.zeros(length)
    if innovation_std > 0:
        innov = rng.normal(scale=innovation_std, size=length)
        prev = 0.0
        for k in range(length):
            prev = ar_coef * prev + innov[k]
            noise[k] = prev
    target = base + amplitude * np.sin(2.0 * np.pi * t / period + phase) + noise
    angle = 2.0 * np.pi * t / period
    features = np.column_stack([
        np.sin(angle),
        np.cos(angle),
        np.full(length, 0.1 * fog_id),
        _lagged(target),
    ])
    return TraceSeries(fog_id=fog_id, timestamps=t, features=features, target=target)


def apply_drift(series: TraceSeries, spec: DriftSpec,
                round_of_step: Sequence[int] | Callable[[int], int]) -> TraceSeries:
    """Add the drift offset to targets whose round is inside the active range.

    Fogs outside spec.target_fogs pass through unchanged. The lagged-target
    feature column is recomputed from the drifted target.
    """
    if series.fog_id not in spec.target_fogs:
        return series
    if callable(round_of_step):
        rounds = np.array([round_of_step(i) for i in range(len(series))])
    else:
        rounds = np.asarray(round_of_step)
        if len(rounds) != len(series):
            raise ValueError("round_of_step length must match series length")
    if spec.kind is DriftKind.STEP:
        mask = rounds >= spec.start_round
    else:
        mask = (rounds >= spec.start_round) & (rounds < spec.end_round)
    target = series.target.copy()
    target[mask] += spec.magnitude
    features = series.features.copy()
    features[:, LAG_FEATURE_INDEX] = _lagged(target)
    return TraceSeries(fog_id=series.fog_id, timestamps=series.timestamps,
                       features=features, target=target)


def ingest_csv(path: str | Path, schema: CsvSchema) -> tuple[list[TraceSeries], int]:
    """Parse a CSV into one TraceSeries per fog; returns (traces, skipped_rows)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"CSV file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in schema.all_columns:
            if col not in header:
                raise ValueError(f"CSV is missing required column {col!r}")
        rows_by_fog: dict[int, list[tuple]] = {}
        skipped = 0
        for row in reader:
            try:
                fog = int(float(row[schema.fog_column]))
                ts = int(float(row[schema.timestamp_column]))
                tgt = float(row[schema.target_column])
                feats = [float(row[c]) for c in schema.feature_columns]
            except (TypeError, ValueError):
                skipped += 1
                continue
            rows_by_fog.setdefault(fog, []).append((ts, tgt, feats))
    if not rows_by_fog:
        raise ValueError(f"no parseable rows in {path}")
    traces = []
    for fog in sorted(rows_by_fog):
        rows = sorted(rows_by_fog[fog], key=lambda r: r[0])
        traces.append(TraceSeries(
            fog_id=fog,
            timestamps=np.array([r[0] for r in rows]),
            features=np.array([r[2] for r in rows]),
            target=np.array([r[1] for r in rows]),
        ))
    return traces, skipped


def normalize(series: TraceSeries,
              stats_window: tuple[int, int]) -> tuple[TraceSeries, float, float]:
    """Z-score the target and lag feature with stats from the given step range.

    The lag feature is additionally scaled by LAG_ATTENUATION after z-scoring.
    """
    start, stop = stats_window
    window = series.target[start:stop]
    if len(window) == 0:
        raise ValueError("empty stats window")
    mean = float(window.mean())
    std = float(window.std())
    if std < 1e-12:
        raise ValueError(f"zero standard deviation over stats window [{start}, {stop})")
    target = (series.target - mean) / std
    features = series.features.copy()
    features[:, LAG_FEATURE_INDEX] = (
        (features[:, LAG_FEATURE_INDEX] - mean) / std * LAG_ATTENUATION)
    out = TraceSeries(fog_id=series.fog_id, timestamps=series.timestamps,
                      features=features, target=target)
    return out, mean, std


def windowize(series: TraceSeries, window: int, horizon: int = 1) -> SupervisedBatch:
    """Sliding windows of `window` feature steps predicting the target `horizon` ahead."""
    count = len(series) - window - horizon + 1
    if count <= 0:
        raise ValueError(
            f"series of length {len(series)} too short for window {window}, horizon {horizon}"
        )
    inputs = np.stack([series.features[i:i + window] for i in range(count)])
    targets = series.target[window + horizon - 1:window + horizon - 1 + count]
    return SupervisedBatch(inputs=inputs, targets=targets)
