"""Round-based federated simulation: local training, aggregation, broadcast, evaluation.

One round = every fog reveals its next data slice (drift applied per the
scenario schedule), trains a local copy of the global model, the server
aggregates (FedAvg or attention-weighted), broadcasts, and each fog's MAE
is measured on the most recent 20% of its revealed data.

The whole run is a pure function of ScenarioConfig: traces, drift, client
seeds, and training order are all derived from master_seed, and results are
identical for any thread count.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import aggregation as agg
from .aggregation import AggregationConfig, AttentionWeights, Strategy
from .data import (DriftKind, DriftSpec, TraceSeries, apply_drift,
                   generate_trace, windowize)
from .models import (Learner, LearnerKind, LearnerSpec, SupervisedBatch,
                     init_learner, mae)
from .params import ParameterSet


class Scenario(str, Enum):
    BASELINE_K = "baseline_k"
    SINGLE_DRIFT = "single_drift"
    MULTI_DRIFT = "multi_drift"
    TEMPORARY_DRIFT = "temporary_drift"
    TRANSFER_DRIFT = "transfer_drift"
    NEW_STATION = "new_station"


BASELINE_K_SWEEP = (2, 5, 10, 20)

METRICS_HEADER = ("round", "fog_id", "strategy", "mae", "drifted")
ATTENTION_HEADER = ("round", "layer", "fog_id", "alpha")


class SimulationAbort(RuntimeError):
    """Non-finite loss during a run; carries the offending fog and round."""

    def __init__(self, fog_id: int, round_index: int, detail: str):
        super().__init__(f"fog {fog_id}, round {round_index}: {detail}")
        self.fog_id = fog_id
        self.round_index = round_index


@dataclass(frozen=True)
class TraceParams:
    amplitude: float = 0.3
    period: int = 288
    ar_coef: float = 0.8
    innovation_std: float = 0.05


def default_learner_spec() -> LearnerSpec:
    return LearnerSpec(kind=LearnerKind.LSTM_REGRESSOR, input_window=10,
                       input_dim=4, hidden_sizes=(16, 16), output_dim=1, seed=0)


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: Scenario
    num_fogs: int
    rounds: int = 20
    local_epochs: int = 2
    learning_rate: float = 0.05
    aggregation: AggregationConfig = field(default_factory=AggregationConfig)
    learner: LearnerSpec = field(default_factory=default_learner_spec)
    drift_specs: tuple[DriftSpec, ...] = ()
    steps_per_round: int = 200
    master_seed: int = 0
    batch_size: int = 32
    max_train_examples: int = 800
    holdout_fraction: float = 0.2
    grad_clip_norm: Optional[float] = None
    trace: TraceParams = field(default_factory=TraceParams)

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario(self.scenario))
        object.__setattr__(self, "drift_specs", tuple(self.drift_specs))
        if self.num_fogs <= 0:
            raise ValueError("num_fogs must be positive")
        if self.rounds <= 0 or self.local_epochs <= 0:
            raise ValueError("rounds and local_epochs must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.steps_per_round <= self.learner.input_window + 1:
            raise ValueError("steps_per_round too small for the input window")
        if not 0 < self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must be in (0, 1)")
        if self.grad_clip_norm is not None and self.grad_clip_norm <= 0:
            raise ValueError("grad_clip_norm must be positive when set")
        for spec in self.drift_specs:
            bad = [f for f in spec.target_fogs if not 0 <= f < self.num_fogs]
            if bad:
                raise ValueError(f"drift target fogs {bad} outside [0, {self.num_fogs})")
        if self.scenario is Scenario.MULTI_DRIFT and self.num_fogs < 4:
            raise ValueError("multi_drift needs at least 4 fogs")
        if self.scenario is Scenario.TRANSFER_DRIFT and self.num_fogs < 2:
            raise ValueError("transfer_drift needs at least 2 fogs")
        if self.scenario is Scenario.NEW_STATION and self.num_fogs < 2:
            raise ValueError("new_station needs at least 2 neighbor fogs")

    def with_default_drifts(self) -> "ScenarioConfig":
        """Fill in the scenario's canonical drift schedule when none is given."""
        if self.drift_specs or self.scenario in (Scenario.BASELINE_K, Scenario.NEW_STATION):
            return self
        r = self.rounds
        if self.scenario is Scenario.SINGLE_DRIFT:
            specs = (DriftSpec(kind=DriftKind.STEP, target_fogs=frozenset([0]),
                               start_round=0),)
        elif self.scenario is Scenario.MULTI_DRIFT:
            specs = (DriftSpec(kind=DriftKind.STEP, target_fogs=frozenset([0, 1, 2]),
                               start_round=r // 2),)
        elif self.scenario is Scenario.TEMPORARY_DRIFT:
            specs = (DriftSpec(kind=DriftKind.TEMPORARY, target_fogs=frozenset([0]),
                               start_round=round(0.35 * r), end_round=round(0.7 * r)),)
        elif self.scenario is Scenario.TRANSFER_DRIFT:
            specs = (
                DriftSpec(kind=DriftKind.TEMPORARY, target_fogs=frozenset([0]),
                          start_round=0, end_round=r // 2),
                DriftSpec(kind=DriftKind.STEP, target_fogs=frozenset([1]),
                          start_round=r // 2),
            )
        else:
            specs = ()
        return replace(self, drift_specs=specs)

    # -- JSON config round-trip ------------------------------------------

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.value,
            "num_fogs": self.num_fogs,
            "rounds": self.rounds,
            "local_epochs": self.local_epochs,
            "learning_rate": self.learning_rate,
            "aggregation": {
                "strategy": self.aggregation.strategy.value,
                "epsilon": self.aggregation.epsilon,
                "fedavg_coefficients": self.aggregation.fedavg_coefficients.value,
            },
            "learner": {
                "kind": self.learner.kind.value,
                "input_window": self.learner.input_window,
                "input_dim": self.learner.input_dim,
                "hidden_sizes": list(self.learner.hidden_sizes),
                "output_dim": self.learner.output_dim,
                "seed": self.learner.seed,
            },
            "drift_specs": [
                {
                    "kind": s.kind.value,
                    "magnitude": s.magnitude,
                    "target_fogs": sorted(s.target_fogs),
                    "start_round": s.start_round,
                    **({"end_round": s.end_round} if s.end_round is not None else {}),
                }
                for s in self.drift_specs
            ],
            "steps_per_round": self.steps_per_round,
            "master_seed": self.master_seed,
            "batch_size": self.batch_size,
            "max_train_examples": self.max_train_examples,
            "holdout_fraction": self.holdout_fraction,
            "grad_clip_norm": self.grad_clip_norm,
            "trace": {
                "amplitude": self.trace.amplitude,
                "period": self.trace.period,
                "ar_coef": self.trace.ar_coef,
                "innovation_std": self.trace.innovation_std,
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioConfig":
        doc = dict(doc)
        kwargs: dict = {}
        if "aggregation" in doc:
            a = doc.pop("aggregation")
            kwargs["aggregation"] = AggregationConfig(
                strategy=Strategy(a.get("strategy", "fedatt")),
                epsilon=float(a.get("epsilon", 1.0)),
                fedavg_coefficients=agg.FedAvgCoefficients(
                    a.get("fedavg_coefficients", "uniform")),
            )
        if "learner" in doc:
            l = doc.pop("learner")
            kwargs["learner"] = LearnerSpec(
                kind=LearnerKind(l["kind"]),
                input_window=int(l.get("input_window", 10)),
                input_dim=int(l.get("input_dim", 4)),
                hidden_sizes=tuple(l.get("hidden_sizes", ())),
                output_dim=int(l.get("output_dim", 1)),
                seed=int(l.get("seed", 0)),
            )
        if "drift_specs" in doc:
            kwargs["drift_specs"] = tuple(
                DriftSpec(kind=DriftKind(s["kind"]),
                          magnitude=float(s.get("magnitude", 0.5)),
                          target_fogs=frozenset(s["target_fogs"]),
                          start_round=int(s["start_round"]),
                          end_round=(int(s["end_round"]) if "end_round" in s
                                     and s["end_round"] is not None else None))
                for s in doc.pop("drift_specs")
            )
        if "trace" in doc:
            t = doc.pop("trace")
            kwargs["trace"] = TraceParams(
                amplitude=float(t.get("amplitude", 0.3)),
                period=int(t.get("period", 288)),
                ar_coef=float(t.get("ar_coef", 0.8)),
                innovation_std=float(t.get("innovation_std", 0.05)),
            )
        doc.update(kwargs)
        return cls(**doc)


@dataclass(frozen=True)
class RoundMetrics:
    round: int
    per_fog_mae: dict[int, float]
    aggregation_loss: float
    attention: Optional[AttentionWeights]
    drifted_fogs: frozenset[int]


def _derived_seed(master_seed: int, *tags: int) -> int:
    ss = np.random.SeedSequence([int(master_seed), *[int(t) for t in tags]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class FederationEngine:
    """Holds the global model, per-fog learners, and the precomputed data streams."""

    def __init__(self, config: ScenarioConfig):
        config = config.with_default_drifts()
        self.config = config
        total_steps = config.rounds * config.steps_per_round
        round_of_step = np.arange(total_steps) // config.steps_per_round

        self.traces: list[TraceSeries] = []
        for fog in range(config.num_fogs):
            raw = generate_trace(
                fog, total_steps, config.master_seed,
                amplitude=config.trace.amplitude, period=config.trace.period,
                ar_coef=config.trace.ar_coef,
                innovation_std=config.trace.innovation_std,
            )
            # normalization stats come from the undrifted stream, so injected
            # drift stays visible as a distribution shift
            mean = float(raw.target.mean())
            std = float(raw.target.std())
            if std < 1e-12:
                raise ValueError(f"fog {fog}: degenerate (constant) trace")
            drifted = raw
            for spec in config.drift_specs:
                drifted = apply_drift(drifted, spec, round_of_step)
            target = (drifted.target - mean) / std
            features = drifted.features.copy()
            from .data import LAG_FEATURE_INDEX
            features[:, LAG_FEATURE_INDEX] = (features[:, LAG_FEATURE_INDEX] - mean) / std
            self.traces.append(TraceSeries(fog_id=fog, timestamps=drifted.timestamps,
                                           features=features, target=target))

        global_spec = replace(config.learner,
                              seed=_derived_seed(config.master_seed, 0xA11A))
        self.global_learner = init_learner(global_spec)
        self.global_params: ParameterSet = self.global_learner.export_params()
        self.clients: list[Learner] = [
            init_learner(replace(config.learner,
                                 seed=_derived_seed(config.master_seed, fog)))
            for fog in range(config.num_fogs)
        ]
        self.round = 0
        self._holdouts: list[Optional[SupervisedBatch]] = [None] * config.num_fogs

    # -- per-round data plumbing -------------------------------------------

    def _split_fog_data(self, fog: int) -> tuple[SupervisedBatch, SupervisedBatch]:
        cfg = self.config
        revealed = (self.round + 1) * cfg.steps_per_round
        batch = windowize(self.traces[fog].slice(0, revealed), cfg.learner.input_window)
        n = len(batch)
        holdout_n = max(1, int(round(cfg.holdout_fraction * n)))
        train_n = n - holdout_n
        if train_n <= 0:
            raise ValueError(f"fog {fog}: not enough data to split at round {self.round}")
        start = max(0, train_n - cfg.max_train_examples)
        train = SupervisedBatch(inputs=batch.inputs[start:train_n],
                                targets=batch.targets[start:train_n])
        holdout = SupervisedBatch(inputs=batch.inputs[train_n:],
                                  targets=batch.targets[train_n:])
        return train, holdout

    def _train_client(self, fog: int, train: SupervisedBatch) -> tuple[ParameterSet, int]:
        cfg = self.config
        learner = self.clients[fog]
        learner.import_params(self.global_params)
        try:
            for _ in range(cfg.local_epochs):
                learner.train_epoch(train, cfg.learning_rate, cfg.batch_size,
                                    clip_norm=cfg.grad_clip_norm)
        except FloatingPointError as exc:
            raise SimulationAbort(fog, self.round, str(exc)) from exc
        return learner.export_params(), len(train)

    def drifted_fogs_in_round(self, rnd: int) -> frozenset[int]:
        active: set[int] = set()
        for spec in self.config.drift_specs:
            if spec.active_in_round(rnd):
                active |= spec.target_fogs
        return frozenset(active)

    def evaluate_global(self, fog_id: int) -> float:
        """MAE of the current global parameters on the fog's held-out slice."""
        holdout = self._holdouts[fog_id]
        if holdout is None or len(holdout) == 0:
            raise ValueError(f"fog {fog_id} has no held-out data yet")
        learner = self.clients[fog_id]
        learner.import_params(self.global_params)
        preds = learner.forward(holdout)
        return mae(preds, holdout.targets)

    # -- the round loop ------------------------------------------------------

    def run_round(self, threads: int = 1) -> RoundMetrics:
        cfg = self.config
        if self.round >= cfg.rounds:
            raise ValueError(f"all {cfg.rounds} rounds already run")
        splits = [self._split_fog_data(fog) for fog in range(cfg.num_fogs)]
        for fog, (_, holdout) in enumerate(splits):
            self._holdouts[fog] = holdout

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(
                    lambda fog: self._train_client(fog, splits[fog][0]),
                    range(cfg.num_fogs)))
        else:
            results = [self._train_client(fog, splits[fog][0])
                       for fog in range(cfg.num_fogs)]
        client_params = [p for p, _ in results]
        sample_counts = [n for _, n in results]

        if cfg.aggregation.strategy is Strategy.FEDATT:
            new_global, weights = agg.fedatt_aggregate(
                self.global_params, client_params, cfg.aggregation)
            attention = weights
        else:
            new_global = agg.fedavg_aggregate(client_params, sample_counts,
                                              cfg.aggregation)
            uniform = np.full(cfg.num_fogs, 1.0 / cfg.num_fogs)
            weights = AttentionWeights(per_layer={
                lp.name: uniform.copy() for lp in self.global_params.layers})
            attention = None
        loss = agg.aggregation_loss(self.global_params, client_params, weights)
        self.global_params = new_global

        per_fog_mae = {}
        for fog in range(cfg.num_fogs):
            value = self.evaluate_global(fog)
            if not np.isfinite(value):
                raise SimulationAbort(fog, self.round, f"non-finite MAE {value}")
            per_fog_mae[fog] = value

        metrics = RoundMetrics(round=self.round, per_fog_mae=per_fog_mae,
                               aggregation_loss=loss, attention=attention,
                               drifted_fogs=self.drifted_fogs_in_round(self.round))
        self.round += 1
        return metrics


# -- scenario driver -----------------------------------------------------


@dataclass
class ScenarioResult:
    runs: dict[str, list[RoundMetrics]]
    files: list[Path]
    extras: dict = field(default_factory=dict)


def write_metrics_csv(path: Path, metrics: Sequence[RoundMetrics],
                      strategy: Strategy) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for m in metrics:
            for fog in sorted(m.per_fog_mae):
                writer.writerow([m.round, fog, strategy.value,
                                 repr(m.per_fog_mae[fog]),
                                 1 if fog in m.drifted_fogs else 0])


def write_attention_csv(path: Path, metrics: Sequence[RoundMetrics]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ATTENTION_HEADER)
        for m in metrics:
            if m.attention is None:
                continue
            for layer, alphas in m.attention.per_layer.items():
                for fog, alpha in enumerate(alphas):
                    writer.writerow([m.round, layer, fog, repr(float(alpha))])


def _run_single(config: ScenarioConfig, threads: int,
                out_dir: Optional[Path], label: str,
                checkpoint: bool, progress=None) -> tuple[list[RoundMetrics], list[Path]]:
    engine = FederationEngine(config)
    metrics = []
    files: list[Path] = []
    for r in range(config.rounds):
        m = engine.run_round(threads=threads)
        metrics.append(m)
        if progress is not None:
            progress(label, m)
        if checkpoint and out_dir is not None:
            ckpt = out_dir / f"checkpoint_{label}_round{r:03d}.json"
            ckpt.write_text(engine.global_params.to_json())
            files.append(ckpt)
    if out_dir is not None:
        suffix = f"_{label}" if label else ""
        mpath = out_dir / f"metrics{suffix}.csv"
        write_metrics_csv(mpath, metrics, config.aggregation.strategy)
        files.append(mpath)
        if config.aggregation.strategy is Strategy.FEDATT:
            apath = out_dir / f"attention{suffix}.csv"
            write_attention_csv(apath, metrics)
            files.append(apath)
    return metrics, files


def run_scenario(config: ScenarioConfig, out_dir: Optional[str | Path] = None,
                 threads: int = 1, checkpoint: bool = False,
                 progress=None) -> ScenarioResult:
    """Execute a scenario's full drift schedule and write its CSV artifacts."""
    out_path = None
    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)

    if config.scenario is Scenario.NEW_STATION:
        from .switching import run_new_station
        return run_new_station(config, out_path)

    config = config.with_default_drifts()
    runs: dict[str, list[RoundMetrics]] = {}
    files: list[Path] = []
    if config.scenario is Scenario.BASELINE_K:
        for k in BASELINE_K_SWEEP:
            sub = replace(config, num_fogs=k)
            label = f"k{k}"
            metrics, new_files = _run_single(sub, threads, out_path, label,
                                             checkpoint, progress)
            runs[label] = metrics
            files.extend(new_files)
    else:
        metrics, new_files = _run_single(config, threads, out_path, "",
                                         checkpoint, progress)
        runs["main"] = metrics
        files.extend(new_files)
    return ScenarioResult(runs=runs, files=files)
