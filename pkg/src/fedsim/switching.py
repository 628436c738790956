"""Query switching for newly deployed stations.

Until a new fog's own model is trained, incoming query windows are
classified to the most similar neighboring fog and answered by that fog's
local model. The classifier is a two-layer fully-connected softmax network
over the flattened raw window (target plus features per step).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import TraceSeries, generate_trace
from .models import (Learner, LearnerKind, LearnerSpec, SupervisedBatch,
                     init_learner, mae)


@dataclass(frozen=True)
class SwitchDataset:
    windows: np.ndarray  # (N, W, D+1) raw windows: target stacked with features
    labels: np.ndarray   # (N,) fog indices in [0, num_classes)

    def __post_init__(self):
        windows = np.asarray(self.windows, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if len(windows) != len(labels):
            raise ValueError("windows and labels must have equal length")
        classes, counts = np.unique(labels, return_counts=True)
        if len(classes) < 2:
            raise ValueError("need at least 2 classes")
        if counts.min() < 10:
            raise ValueError(f"need >= 10 examples per class, got {counts.min()}")
        object.__setattr__(self, "windows", windows)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1

    def as_batch(self) -> SupervisedBatch:
        return SupervisedBatch(inputs=self.windows, targets=self.labels)


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # (N, N), rows = true, columns = predicted

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total


def _raw_windows(trace: TraceSeries, window: int) -> np.ndarray:
    """Flatten-ready (count, W, D+1) windows of target stacked with features."""
    stacked = np.column_stack([trace.target, trace.features])
    count = len(trace) - window + 1
    if count <= 0:
        raise ValueError(f"trace of length {len(trace)} too short for window {window}")
    return np.stack([stacked[i:i + window] for i in range(count)])


def build_switch_dataset(neighbor_traces: Sequence[TraceSeries], window: int,
                         split: float = 0.8) -> tuple[SwitchDataset, SwitchDataset]:
    """Label windows by source fog; chronological train/test split per fog."""
    if len(neighbor_traces) < 2:
        raise ValueError("need at least 2 neighbor traces")
    if not 0 < split < 1:
        raise ValueError("split must be in (0, 1)")
    train_w, train_y, test_w, test_y = [], [], [], []
    for label, trace in enumerate(neighbor_traces):
        windows = _raw_windows(trace, window)
        cut = int(round(split * len(windows)))
        if cut == 0 or cut == len(windows):
            raise ValueError(f"trace {trace.fog_id}: too few windows to split")
        train_w.append(windows[:cut])
        train_y.append(np.full(cut, label))
        test_w.append(windows[cut:])
        test_y.append(np.full(len(windows) - cut, label))
    return (
        SwitchDataset(windows=np.concatenate(train_w), labels=np.concatenate(train_y)),
        SwitchDataset(windows=np.concatenate(test_w), labels=np.concatenate(test_y)),
    )


def train_switch_classifier(train: SwitchDataset, spec: LearnerSpec,
                            epochs: int = 300, rate: float = 0.05) -> Learner:
    if spec.kind is not LearnerKind.MLP_CLASSIFIER:
        raise ValueError(f"switch classifier must be mlp_classifier, got {spec.kind}")
    if spec.output_dim != train.num_classes:
        raise ValueError(
            f"spec.output_dim {spec.output_dim} != {train.num_classes} classes")
    learner = init_learner(spec)
    batch = train.as_batch()
    for _ in range(epochs):
        learner.train_epoch(batch, rate)
    return learner


def classify_query(classifier: Learner, window: np.ndarray) -> int:
    """Predicted fog index for one query window; ties go to the lowest index."""
    window = np.asarray(window, dtype=np.float64)
    spec = classifier.spec
    flat = window.reshape(-1)
    if flat.size != spec.input_window * spec.input_dim:
        raise ValueError(
            f"window has {flat.size} values, expected "
            f"{spec.input_window} x {spec.input_dim}")
    logits = classifier._forward(flat.reshape(1, spec.input_window, spec.input_dim))
    return int(np.argmax(logits[0]))


def evaluate_switch(classifier: Learner,
                    test: SwitchDataset) -> tuple[float, ConfusionMatrix]:
    if len(test) == 0:
        raise ValueError("empty test set")
    logits = classifier.forward(test.as_batch())
    preds = np.argmax(logits, axis=1)
    n = max(test.num_classes, logits.shape[1])
    counts = np.zeros((n, n), dtype=np.int64)
    for true, pred in zip(test.labels, preds):
        counts[true, pred] += 1
    matrix = ConfusionMatrix(counts=counts)
    return matrix.accuracy, matrix


def write_confusion_csv(path: Path, accuracy: float, matrix: ConfusionMatrix) -> None:
    """Rows true,predicted,count for every cell, then a summary accuracy line."""
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true", "predicted", "count"])
        n = matrix.counts.shape[0]
        for true in range(n):
            for pred in range(n):
                writer.writerow([true, pred, int(matrix.counts[true, pred])])
        writer.writerow(["accuracy", "", repr(accuracy)])


def run_new_station(config, out_dir: Optional[Path] = None):
    """New-station scenario: train the switch classifier on the neighbors,
    evaluate it, and route warm-up queries from the new fog to the predicted
    neighbor's local model.
    """
    from .federation import ScenarioResult  # circular-at-import otherwise

    cfg = config
    window = cfg.learner.input_window
    length = cfg.rounds * cfg.steps_per_round
    neighbors = [
        generate_trace(fog, length, cfg.master_seed,
                       amplitude=cfg.trace.amplitude, period=cfg.trace.period,
                       ar_coef=cfg.trace.ar_coef,
                       innovation_std=cfg.trace.innovation_std)
        for fog in range(cfg.num_fogs)
    ]
    train, test = build_switch_dataset(neighbors, window)
    spec = LearnerSpec(kind=LearnerKind.MLP_CLASSIFIER, input_window=window,
                       input_dim=train.windows.shape[2], hidden_sizes=(32,),
                       output_dim=cfg.num_fogs, seed=cfg.master_seed)
    classifier = train_switch_classifier(train, spec)
    accuracy, matrix = evaluate_switch(classifier, test)

    # warm-up routing demo: the new station's stream follows neighbor 0's
    # distribution; each query is answered by the predicted neighbor's model
    new_trace = generate_trace(0, max(10 * window, 200), cfg.master_seed + 1,
                               amplitude=cfg.trace.amplitude,
                               period=cfg.trace.period,
                               ar_coef=cfg.trace.ar_coef,
                               innovation_std=cfg.trace.innovation_std)
    routed = [classify_query(classifier, w) for w in _raw_windows(new_trace, window)]
    route_share = float(np.mean(np.asarray(routed) == 0))

    files = []
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        cpath = out_dir / "confusion.csv"
        write_confusion_csv(cpath, accuracy, matrix)
        files.append(cpath)
    return ScenarioResult(runs={}, files=files,
                          extras={"accuracy": accuracy, "confusion": matrix,
                                  "new_station_route_share": route_share})
