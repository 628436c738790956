"""Command-line entry point.

Commands: `simulate` (run a scenario from a JSON config), `gradcheck`
(analytic-vs-finite-difference verification for all learner kinds), and
`switch-demo` (3-neighbor query-switching classifier).

Exit codes: 0 success, 1 verification failure, 2 config error, 3 runtime
abort (non-finite loss). Progress goes to stdout, errors to stderr.
"""

from __future__ import annotations

import datetime
import json
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import __version__
from .federation import (Scenario, ScenarioConfig, SimulationAbort,
                         default_learner_spec, run_scenario)
from .models import (LearnerKind, LearnerSpec, SupervisedBatch,
                     gradient_check, init_learner)

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

GRADCHECK_THRESHOLD = 1e-4


def _fail_config(message: str):
    click.echo(f"config error: {message}", err=True)
    sys.exit(EXIT_CONFIG)


def _apply_override(doc: dict, dotted: str, value: str) -> None:
    """Set a dotted.path key in a nested config dict, JSON-parsing the value."""
    parts = dotted.split(".")
    node = doc
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            node[part] = {}
        node = node[part]
    try:
        node[parts[-1]] = json.loads(value)
    except json.JSONDecodeError:
        node[parts[-1]] = value


def _load_config(config_path: str, overrides: tuple[str, ...],
                 seed) -> ScenarioConfig:
    path = Path(config_path)
    if not path.exists():
        _fail_config(f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        _fail_config(f"{path}: invalid JSON ({exc})")
    for item in overrides:
        if "=" not in item:
            _fail_config(f"--set expects dotted.path=value, got {item!r}")
        key, value = item.split("=", 1)
        _apply_override(doc, key, value)
    if seed is not None:
        doc["master_seed"] = int(seed)
    try:
        return ScenarioConfig.from_dict(doc)
    except (KeyError, TypeError, ValueError) as exc:
        _fail_config(str(exc))


def _write_manifest(out_dir: Path, config: ScenarioConfig,
                    started: str, files: list[Path]) -> Path:
    manifest = {
        "version": f"fedsim-{__version__}",
        "started": started,
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config": config.to_dict(),
        "outputs": [str(p) for p in files],
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


@click.group()
def main():
    """Deterministic federated-learning drift simulator."""


@main.command()
@click.option("--config", "config_path", required=True, help="scenario config JSON")
@click.option("--out", "out_dir", required=True, help="output directory")
@click.option("--seed", type=int, default=None, help="override master_seed")
@click.option("--checkpoint", is_flag=True, help="write per-round parameter checkpoints")
@click.option("--threads", type=int, default=1, show_default=True,
              help="client training parallelism (results identical for any N)")
@click.option("--set", "overrides", multiple=True, metavar="DOTTED.PATH=VALUE",
              help="override a config field")
def simulate(config_path, out_dir, seed, checkpoint, threads, overrides):
    """Run one scenario and write metrics/attention CSVs plus a manifest."""
    config = _load_config(config_path, overrides, seed)
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()

    def progress(label, m):
        mean_mae = float(np.mean(list(m.per_fog_mae.values())))
        tag = f"[{label}] " if label else ""
        click.echo(f"{tag}round {m.round:3d}  mean MAE {mean_mae:.4f}  "
                   f"agg loss {m.aggregation_loss:.4f}")

    try:
        result = run_scenario(config, out_dir=out_path, threads=threads,
                              checkpoint=checkpoint, progress=progress)
    except SimulationAbort as exc:
        click.echo(f"runtime abort: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    files = list(result.files)
    if "accuracy" in result.extras:
        click.echo(f"switch accuracy: {result.extras['accuracy']:.4f}")
    files.append(_write_manifest(out_path, config, started, files))
    for f in files:
        click.echo(f"wrote {f}")
    sys.exit(EXIT_OK)


def _gradcheck_cases() -> list[tuple[str, LearnerSpec]]:
    return [
        ("linear_ar", LearnerSpec(kind=LearnerKind.LINEAR_AR, input_window=6,
                                  input_dim=3, seed=7)),
        ("mlp_classifier", LearnerSpec(kind=LearnerKind.MLP_CLASSIFIER,
                                       input_window=6, input_dim=3,
                                       hidden_sizes=(8,), output_dim=3, seed=7)),
        ("lstm_regressor", LearnerSpec(kind=LearnerKind.LSTM_REGRESSOR,
                                       input_window=6, input_dim=3,
                                       hidden_sizes=(5, 5), output_dim=1, seed=7)),
    ]


def run_gradcheck(corrupt: bool = False) -> dict[str, float]:
    """Gradient checks for all learner kinds at fixed seeds.

    `corrupt` deliberately perturbs one analytic gradient (test hook for the
    failure path).
    """
    results = {}
    for name, spec in _gradcheck_cases():
        learner = init_learner(spec)
        rng = np.random.default_rng(spec.seed)
        inputs = rng.normal(size=(4, spec.input_window, spec.input_dim))
        if spec.kind is LearnerKind.MLP_CLASSIFIER:
            targets = rng.integers(0, spec.output_dim, size=4)
        else:
            targets = rng.normal(size=4)
        batch = SupervisedBatch(inputs=inputs, targets=targets)
        if corrupt:
            original = learner._loss_and_grads

            def corrupted(x, y, _orig=original):
                loss, grads = _orig(x, y)
                first = next(iter(grads))
                grads[first] = grads[first] + 1.0
                return loss, grads

            learner._loss_and_grads = corrupted
        results[name] = gradient_check(learner, batch)
    return results


@main.command()
def gradcheck():
    """Compare analytic gradients against central finite differences."""
    results = run_gradcheck()
    ok = True
    for name, err in results.items():
        status = "ok" if err < GRADCHECK_THRESHOLD else "FAIL"
        click.echo(f"{name:16s} max relative error {err:.3e}  [{status}]")
        ok = ok and err < GRADCHECK_THRESHOLD
    sys.exit(EXIT_OK if ok else EXIT_VERIFICATION)


@main.command("switch-demo")
@click.option("--config", "config_path", default=None,
              help="optional scenario config JSON (defaults used otherwise)")
@click.option("--out", "out_dir", required=True, help="output directory")
@click.option("--seed", type=int, default=None, help="override master_seed")
def switch_demo(config_path, out_dir, seed):
    """Train the new-station query classifier on a 3-neighbor synthetic setup."""
    if config_path is not None:
        config = _load_config(config_path, (), seed)
        config = replace(config, scenario=Scenario.NEW_STATION)
    else:
        config = ScenarioConfig(scenario=Scenario.NEW_STATION, num_fogs=3,
                                rounds=2, steps_per_round=200,
                                master_seed=seed if seed is not None else 0)
    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    started = datetime.datetime.now(datetime.timezone.utc).isoformat()
    try:
        result = run_scenario(config, out_dir=out_path)
    except SimulationAbort as exc:
        click.echo(f"runtime abort: {exc}", err=True)
        sys.exit(EXIT_RUNTIME)
    click.echo(f"switch accuracy: {result.extras['accuracy']:.4f}")
    files = list(result.files)
    files.append(_write_manifest(out_path, config, started, files))
    for f in files:
        click.echo(f"wrote {f}")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
