import logging
from pathlib import Path

import click
import numpy as np
import pandas as pd

from marlrank.config.config import RunConfig, load_config
from marlrank.core.neural import grad_check
from marlrank.db.checkpoint import load_checkpoint
from marlrank.db.letor import dataset_stats, load_folds, normalize_split
from marlrank.db.reports import metrics_frame, write_metrics, write_summary
from marlrank.db.synthetic import generate_dataset, write_folds
from marlrank.errors import CheckFailure, ConfigError
from marlrank.middleware import LoggingMiddleware
from marlrank.models.models import FoldSplit
from marlrank.models.params import ModelParams
from marlrank.schemas.schemas import LabelRule, NormalizationScheme, ToyMode
from marlrank.service.dep_service import get_trainer_service
from marlrank.service.toy import (
    DERIVED_STEP0_NDCG3,
    compare_with_table,
    render_table,
    run_toy,
    toy_frame,
)
from marlrank.service.trainer import evaluation_rows, reinforce_grad_check

logger = logging.getLogger(__name__)

router = click.Group()

GRADCHECK_THRESHOLD = 1e-4


def config_options(func):
    """Options shared by every command that reads a dataset."""
    options = [
        click.option("--config", "config_file", type=click.Path(dir_okay=False, path_type=Path),
                     help="KEY=value file; flags override it."),
        click.option("--root", "dataset_root", type=click.Path(path_type=Path),
                     help="LETOR root holding Fold1..Fold5 (env MARLRANK_DATASET_ROOT)."),
        click.option("--folds", type=str, help="'all' or a comma list such as 1,3."),
        click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path),
                     help="Output directory."),
        click.option("--normalization", type=click.Choice([s.value for s in NormalizationScheme])),
        click.option("--k", type=int, help="Neighbours per document."),
        click.option("--T-eval", "t_eval", type=int, help="Evaluation horizon."),
        click.option("--seed", type=int),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _resolve(config_file: Path | None, **overrides) -> RunConfig:
    cfg = load_config(config_file, **overrides)
    if cfg.dataset_root is None:
        raise ConfigError("no dataset path: pass --root or set MARLRANK_DATASET_ROOT")
    if not cfg.dataset_root.is_dir():
        raise ConfigError(f"dataset path {cfg.dataset_root} does not exist")
    return cfg


def _splits(cfg: RunConfig) -> list[FoldSplit]:
    splits = load_folds(
        cfg.dataset_root,
        folds=cfg.fold_indices,
        train_name=cfg.train_name,
        vali_name=cfg.vali_name,
        test_name=cfg.test_name,
        clamp_labels=cfg.clamp_labels,
    )
    return [normalize_split(split, cfg.normalization) for split in splits]


@router.command()
@click.option("--steps", type=click.IntRange(min=0), default=3, show_default=True)
@click.option("--mode", type=click.Choice([m.value for m in ToyMode]), default=ToyMode.ROUNDED.value,
              show_default=True, help="rounded carries 2-decimal scores between steps.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False, path_type=Path))
@LoggingMiddleware
def toy(steps: int, mode: str, csv_path: Path | None):
    """Reproduce the six-document averaging example and check it against the reference table."""
    rows = run_toy(steps, mode=ToyMode(mode))
    click.echo(render_table(rows))
    if csv_path is not None:
        toy_frame(rows).to_csv(csv_path, index=False)
    logger.info("step-0 NDCG@3 is %.4f (derived %.4f; the reference 0.3 is not reproducible)",
                rows[0].ndcg3, DERIVED_STEP0_NDCG3)

    mismatches = compare_with_table(rows)
    if mismatches:
        for line in mismatches:
            click.echo(line)
        click.echo("MISMATCH")
        raise CheckFailure(f"{len(mismatches)} cells differ from the reference table")
    click.echo("MATCH")


@router.command()
@click.option("--root", type=click.Path(file_okay=False, path_type=Path), required=True)
@click.option("--queries", type=click.IntRange(min=5), default=50, show_default=True)
@click.option("--docs", type=click.IntRange(min=1), default=20, show_default=True)
@click.option("--features", type=click.IntRange(min=2), default=10, show_default=True)
@click.option("--noise", type=float, default=0.05, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--rule", type=click.Choice([r.value for r in LabelRule]), default=LabelRule.SUM.value,
              show_default=True, help="How the grade is derived from the first two features.")
@LoggingMiddleware
def synth(root: Path, queries: int, docs: int, features: int, noise: float, seed: int, rule: str):
    """Write a synthetic five-fold LETOR layout."""
    dataset = generate_dataset(queries, docs, features, noise, seed, LabelRule(rule))
    write_folds(dataset, root)
    click.echo(pd.DataFrame([dataset_stats(dataset)]).to_string(index=False))


@router.command()
@config_options
@LoggingMiddleware
def prepare(config_file, **overrides):
    """Load, validate and normalize the folds, then print per-partition statistics."""
    cfg = _resolve(config_file, **overrides)
    stats = []
    for split in _splits(cfg):
        for name, ds in (("train", split.train), ("vali", split.validation), ("test", split.test)):
            stats.append({"fold": split.fold_index, "split": name, **dataset_stats(ds)})
    frame = pd.DataFrame(stats)
    cfg.write_echo()
    frame.to_csv(cfg.out_dir / "dataset_stats.csv", index=False)
    click.echo(frame.to_string(index=False))


@router.command()
@config_options
@click.option("--gamma", type=float)
@click.option("--lr", "learning_rate", type=float)
@click.option("--T", "t_train", type=int, help="Training horizon.")
@click.option("--epochs", type=int)
@click.option("--pretrain-epochs", type=int)
@click.option("--patience", type=int)
@click.option("--hidden-units", type=int)
@click.option("--reward-schedule", type=str)
@LoggingMiddleware
def train(config_file, **overrides):
    """Pre-train, then run REINFORCE epochs on every selected fold."""
    cfg = _resolve(config_file, **overrides)
    cfg.write_echo()
    trainer = get_trainer_service(cfg.train_config())
    results = trainer.fit_folds(_splits(cfg), cfg.out_dir)

    rows = [row for result in results for row in result.rows]
    write_metrics(rows, cfg.out_dir / "metrics.csv")
    selected = [
        row for result in results for row in result.rows
        if row.split == "test" and row.epoch == result.best_epoch
    ]
    summary = write_summary(metrics_frame(selected), cfg.out_dir / "summary.csv")
    click.echo(summary.to_string(index=False))


@router.command()
@config_options
@click.option("--checkpoint", type=click.Path(path_type=Path), required=True,
              help="A .npz file, or a train output directory with Fold<K>/best.npz.")
@LoggingMiddleware
def evaluate(config_file, checkpoint: Path, **overrides):
    """Greedy rollouts on the test partitions: per-step trace and final NDCG summary."""
    cfg = _resolve(config_file, **overrides)
    cfg.write_echo()
    if checkpoint.is_file():
        shared = load_checkpoint(checkpoint)

        def params_for(fold: int) -> ModelParams:
            return shared
    else:
        def params_for(fold: int) -> ModelParams:
            return load_checkpoint(checkpoint / f"Fold{fold}" / "best.npz")

    trainer = get_trainer_service(cfg.train_config())
    results = trainer.evaluate_folds(params_for, _splits(cfg))
    rows = [row for fold, result in results.items() for row in evaluation_rows(result, fold, 0, "test")]
    frame = write_metrics(rows, cfg.out_dir / "trace.csv")
    summary = write_summary(frame, cfg.out_dir / "summary.csv")
    click.echo(summary.to_string(index=False))


@router.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--seeds", type=click.IntRange(min=1), default=1, show_default=True,
              help="Number of consecutive seeds to check.")
@click.option("--epsilon", type=float, default=1e-5, show_default=True)
@click.option("--corrupt", type=float, default=0.0, hidden=True)
@LoggingMiddleware
def gradcheck(seed: int, seeds: int, epsilon: float, corrupt: float):
    """Finite-difference checks of the network engine and of the full REINFORCE gradient."""
    worst = 0.0
    for current in range(seed, seed + seeds):
        params = ModelParams.initialize(feature_dim=3, k=1, hidden_units=8, seed=current)
        x = np.random.default_rng(current).normal(size=(4, params.observation_dim))
        pairs = np.random.default_rng(current + 1).normal(size=(4, 4 * params.feature_dim))
        checks = {
            "policy": grad_check(params.policy, x, epsilon, corruption=corrupt),
            "similarity": grad_check(params.similarity, pairs, epsilon, corruption=corrupt),
            "reinforce": reinforce_grad_check(current, epsilon, corruption=corrupt),
        }
        for name, error in checks.items():
            click.echo(f"seed={current} {name} max_rel_err={error:.3e}")
        worst = max(worst, *checks.values())

    click.echo(f"max_rel_err={worst:.3e}")
    if worst >= GRADCHECK_THRESHOLD:
        raise CheckFailure(f"max relative error {worst:.3e} is not below {GRADCHECK_THRESHOLD:g}")
