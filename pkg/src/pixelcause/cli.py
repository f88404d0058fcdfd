"""Command-line surface tying the modules into reproducible experiments.

Exit codes: 0 success, 2 config error, 3 verification failure, 4 I/O error.
Failures print a structured JSON error to stderr.  Every run directory gets a
``runlog.json`` marked incomplete until the command finishes.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from .counterexamples import find_coarsening_violation, perturb_solved_entries
from .discrete import sample_world, sample_world_constrained
from .errors import (
    ConfigError,
    PixelCauseError,
    StorageError,
    VerificationError,
)
from .experiment import ExperimentConfig, make_oracle, run_grating_experiment
from .grating import GratingConfig, GratingOracle, generate_observational_dataset
from .macro import residual_confounding_example
from .partitions import causal_partition, is_coarsening, observational_partition
from .pipeline import OptimizerConfig, manipulate
from .sweeps import coarsening_sweep, macro_description_sweep
from . import storage


def _fail(exc: BaseException, code: int):
    click.echo(
        json.dumps({"error": type(exc).__name__, "message": str(exc)}), err=True
    )
    sys.exit(code)


def cli_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail(exc, 2)
        except VerificationError as exc:
            _fail(exc, 3)
        except (StorageError, OSError) as exc:
            _fail(exc, 4)
        except PixelCauseError as exc:
            _fail(exc, 1)

    return wrapper


def _emit(doc: dict, out: str | None):
    text = json.dumps(doc, indent=2)
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text)


@click.group()
def main():
    """Causal feature learning toolkit."""


# --- finite worlds -------------------------------------------------------------


@main.group()
def world():
    """Sample finite worlds and inspect their partitions."""


def _world_report(world_obj, tolerance: float) -> dict:
    obs = observational_partition(world_obj, tolerance)
    caus = causal_partition(world_obj, tolerance)
    return {
        "observational_partition": obs.to_dict(),
        "causal_partition": caus.to_dict(),
        "causal_coarsens_observational": is_coarsening(caus, obs).to_dict(),
    }


@world.command("sample")
@click.option("--k", default=3, show_default=True)
@click.option("--n", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--tol", default=1e-9, show_default=True)
@click.option("--out", default=None, help="Write JSON here instead of stdout.")
@cli_errors
def world_sample(k, n, seed, tol, out):
    w = sample_world(k, n, np.random.default_rng(seed))
    _emit({"world": w.to_dict(), **_world_report(w, tol)}, out)


@world.command("constrained")
@click.option(
    "--spec",
    required=True,
    help='Observational classes as JSON, e.g. [[[0,1],0.3],[[2],0.8]].',
)
@click.option("--k", default=2, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--tol", default=1e-9, show_default=True)
@click.option("--max-rejects", default=10000, show_default=True)
@click.option("--out", default=None)
@cli_errors
def world_constrained(spec, k, seed, tol, max_rejects, out):
    try:
        parsed = [(tuple(members), float(v)) for members, v in json.loads(spec)]
    except (json.JSONDecodeError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad --spec: {exc}")
    w = sample_world_constrained(parsed, k, np.random.default_rng(seed), max_rejects)
    _emit({"world": w.to_dict(), **_world_report(w, tol)}, out)


@world.command("violation")
@click.option(
    "--kind",
    type=click.Choice(["obs-coarsens-causal", "incomparable"]),
    default="obs-coarsens-causal",
    show_default=True,
)
@click.option("--k", default=2, show_default=True)
@click.option("--n", default=3, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--tol", default=1e-9, show_default=True)
@click.option("--out", default=None)
@cli_errors
def world_violation(kind, k, n, seed, tol, out):
    rng = np.random.default_rng(seed)
    cx = find_coarsening_violation(kind, k, n, rng)
    perturbed = perturb_solved_entries(cx, rng)
    doc = {
        **cx.to_dict(),
        **_world_report(cx.world, tol),
        "after_perturbation": _world_report(perturbed, tol)[
            "causal_coarsens_observational"
        ],
    }
    _emit(doc, out)


@main.command("cct-sweep")
@click.option("--trials", default=10000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--tol", default=1e-9, show_default=True)
@click.option("--out", default=None)
@cli_errors
def cct_sweep(trials, seed, tol, out):
    """Constrained-sampling verification campaign: every sampled world's
    causal partition must coarsen its observational partition."""
    report = coarsening_sweep(trials, seed, tol)
    _emit(report.to_dict(), out)
    if not report.clean:
        raise VerificationError(
            f"{report.coarsening_violations} coarsening violations, "
            f"{report.spec_mismatches} spec mismatches in {trials} trials"
        )


@main.command("theorem2-check")
@click.option("--worlds", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default=None)
@cli_errors
def theorem2_check(worlds, seed, out):
    """Exhaustive macro-variable completeness check on sampled worlds."""
    report = macro_description_sweep(worlds, seed)
    _emit(report.to_dict(), out)
    if not report.clean:
        raise VerificationError(
            f"{report.value_check_failures} value failures, "
            f"{report.entropy_check_failures} entropy failures in {worlds} worlds"
        )


@main.command("appendix9")
@click.option("--out", default=None)
@cli_errors
def appendix9(out):
    """Run the fixed confounded example and verify its inequalities."""
    world_obj, report = residual_confounding_example()
    _emit({"world": world_obj.to_dict(), "report": report.to_dict()}, out)
    if not report.holds:
        raise VerificationError("confounded-example inequalities failed")


# --- grating experiments ----------------------------------------------------------


def _load_experiment_config(config_path: str | None, seed: int | None) -> ExperimentConfig:
    if config_path:
        try:
            doc = json.loads(Path(config_path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"bad config JSON: {exc}")
        cfg = ExperimentConfig.from_dict(doc)
    else:
        cfg = ExperimentConfig()
    if seed is not None:
        cfg = cfg.reseeded(seed)
    return cfg


@main.group()
def grating():
    """Synthetic bar-grating experiments."""


@grating.command("gen")
@click.option("--config", "config_path", default=None, help="ExperimentConfig JSON.")
@click.option("--n", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--out", required=True)
@cli_errors
def grating_gen(config_path, n, seed, out):
    cfg = _load_experiment_config(config_path, seed)
    n = n if n is not None else cfg.n_observations
    rng = np.random.default_rng(cfg.grating.seed)
    samples = generate_observational_dataset(cfg.grating, n, rng)
    storage.save_observational_dataset(samples, out, storage.config_hash(cfg.to_dict()))
    click.echo(json.dumps({"written": out, "records": len(samples)}))


@grating.command("train")
@click.option("--config", "config_path", default=None)
@click.option("--seed", default=None, type=int)
@click.option("--out-dir", required=True)
@cli_errors
def grating_train(config_path, seed, out_dir):
    """Coarsen observational data with the synthetic oracle and train the
    causal predictor (no manipulation rounds)."""
    from .grating import observational_class_values
    from .pipeline import causal_predictor_training

    cfg = _load_experiment_config(config_path, seed)
    cfg_hash = storage.config_hash(cfg.to_dict())
    out = Path(out_dir)
    log = storage.RunLog(config_hash=cfg_hash, command="grating train")
    log.write(out)

    rng = np.random.default_rng(cfg.grating.seed)
    samples = generate_observational_dataset(cfg.grating, cfg.n_observations, rng)
    oracle = make_oracle(cfg)
    predictor, dataset = causal_predictor_training(
        [(s.pixels, s.obs_prob) for s in samples],
        observational_class_values(cfg.grating),
        oracle,
        cfg.loop.train,
        reps=cfg.reps,
        hidden_units=cfg.loop.hidden_units,
        tolerance=cfg.tolerance,
    )
    storage.save_checkpoint(predictor, out / "checkpoint.json", cfg.loop.train, cfg_hash)
    storage.save_causal_dataset(dataset, out / "causal_dataset.jsonl", cfg_hash)
    log.artifacts = {
        "checkpoint": str(out / "checkpoint.json"),
        "causal_dataset": str(out / "causal_dataset.jsonl"),
    }
    log.finalize(out, oracle.query_count)
    click.echo(json.dumps({"out_dir": str(out), "oracle_queries": oracle.query_count}))


@grating.command("manipulate")
@click.option("--checkpoint", required=True)
@click.option("--dataset", "dataset_path", required=True)
@click.option("--index", default=0, show_default=True)
@click.option("--target", required=True, type=float)
@click.option("--tradeoff", default=0.1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out-dir", required=True)
@cli_errors
def grating_manipulate(checkpoint, dataset_path, index, target, tradeoff, seed, out_dir):
    """Run a single manipulation and write the before/after pair."""
    model = storage.load_checkpoint(checkpoint)
    dataset = storage.load_causal_dataset(dataset_path)
    if not (0 <= index < len(dataset)):
        raise ConfigError(f"index {index} out of range for {len(dataset)} records")
    optimizer = OptimizerConfig(tradeoff=tradeoff)
    record = manipulate(
        model, dataset[index].pixels, target, optimizer, np.random.default_rng(seed)
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    storage.write_gallery([record], out, round_no=0, limit=1)
    click.echo(
        json.dumps(
            {
                "predicted": record.predicted,
                "distance": record.distance,
                "out_dir": str(out),
            }
        )
    )


@grating.command("run")
@click.option("--config", "config_path", default=None)
@click.option("--seed", default=None, type=int)
@click.option("--out-dir", required=True)
@click.option("--gallery/--no-gallery", default=True, show_default=True)
@cli_errors
def grating_run(config_path, seed, out_dir, gallery):
    """Full pipeline: observational data, coarsened training, manipulation
    rounds against the synthetic oracle; emits metrics.csv and artifacts."""
    cfg = _load_experiment_config(config_path, seed)
    cfg_hash = storage.config_hash(cfg.to_dict())
    out = Path(out_dir)
    log = storage.RunLog(config_hash=cfg_hash, command="grating run")
    log.write(out)

    result = run_grating_experiment(cfg)
    storage.write_metrics_csv(result.loop.metrics, out / "metrics.csv", cfg_hash)
    storage.save_checkpoint(result.predictor, out / "checkpoint.json", cfg.loop.train, cfg_hash)
    storage.save_causal_dataset(result.dataset, out / "causal_dataset.jsonl", cfg_hash)
    (out / "config.json").write_text(
        json.dumps({"config_hash": cfg_hash, **cfg.to_dict()}, indent=2)
    )
    artifacts = {
        "metrics": str(out / "metrics.csv"),
        "checkpoint": str(out / "checkpoint.json"),
        "causal_dataset": str(out / "causal_dataset.jsonl"),
        "config": str(out / "config.json"),
    }
    if gallery:
        paths = storage.write_gallery(
            result.loop.round_records[-1], out / "gallery", len(result.loop.metrics)
        )
        artifacts["gallery"] = str(out / "gallery")
        _ = paths
    log.artifacts = artifacts
    log.rounds = [
        {
            "round": m.round,
            "merr": m.manipulation_error,
            "mdist": m.manipulation_distance,
            "queries": m.oracle_queries,
        }
        for m in result.loop.metrics
    ]
    log.finalize(out, result.loop.metrics[-1].oracle_queries)
    click.echo(json.dumps({"out_dir": str(out), "rounds": log.rounds}))


# --- annotation service ---------------------------------------------------------


@main.command("serve")
@click.option("--port", default=8321, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--state-dir", default=None, help="Durable event-log directory.")
@cli_errors
def serve(port, host, state_dir):
    """Start the annotation service (human oracle mode)."""
    import uvicorn

    from .service import AnnotationStore, create_app

    app = create_app(AnnotationStore(state_dir))
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command("annotate-merge")
@click.option("--url", required=True, help="Annotation service base URL.")
@click.option("--token", default="merge-bot", show_default=True)
@click.option("--experiment", "experiment_id", required=True)
@click.option("--dataset", "dataset_path", default=None, help="Existing causal dataset to extend.")
@click.option("--round", "round_no", default=0, show_default=True)
@click.option("--out", required=True)
@cli_errors
def annotate_merge(url, token, experiment_id, dataset_path, round_no, out):
    """Commit decided labels on the service and fold them into a causal
    dataset file."""
    import httpx

    from .annotation_client import AnnotationServiceClient
    from .pipeline import CausalDataset, CausalRecord

    with httpx.Client(base_url=url, timeout=30.0) as http:
        client = AnnotationServiceClient(http, token)
        delta = client.commit(experiment_id)
    dataset = (
        storage.load_causal_dataset(dataset_path) if dataset_path else CausalDataset()
    )
    for rec in delta["records"]:
        dataset.append(
            CausalRecord(
                pixels=storage.unpack_pixels(rec["pixels"], rec["side"]),
                label=float(rec["label_value"]),
                provenance="oracle-query",
                round=round_no,
            )
        )
    storage.save_causal_dataset(dataset, out)
    click.echo(
        json.dumps(
            {
                "merged": len(delta["records"]),
                "pending": delta["pending"],
                "out": out,
            }
        )
    )


if __name__ == "__main__":
    main()
