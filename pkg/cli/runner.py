"""
Command-line interface for multi-intent detection.
"""
import functools
import json
import sys
from pathlib import Path
from typing import Optional

import click

from config.run_config import RunConfig
from config.settings import settings
from core.corpus import (
    DEFAULT_JOINER,
    SPLIT_NAMES,
    PrimaryPolicy,
    build_corpus,
    load_jsonl,
    load_pool,
    sample_fraction,
    sample_k_shot,
    save_jsonl,
    tokenize,
    write_manifest,
)
from core.errors import MlmcidError, NonFiniteLossError
from core.evaluator import evaluate
from core.logger import run_logger
from core.taxonomy import REFERENCE_COARSE_COUNTS, load_taxonomy, validate_expected_sizes
from core.trainer import emit_loss_curve, load_checkpoint, save_checkpoint, train
from utils.helpers import parse_float_list, parse_int_list
from utils.report_generator import report_manager

__version__ = "1.0.0"

EXIT_INPUT_ERROR = 2
EXIT_NUMERICAL_ERROR = 3

existing_file = click.Path(exists=True, dir_okay=False, path_type=Path)


def handle_errors(command):
    """Map package errors to exit codes: 3 for non-finite loss, 2 for everything else."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except NonFiniteLossError as e:
            run_logger.error(str(e))
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_NUMERICAL_ERROR)
        except (MlmcidError, OSError) as e:
            run_logger.error(str(e))
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_INPUT_ERROR)

    return wrapper


def _seed(seed: Optional[int]) -> int:
    return seed if seed is not None else settings.general.seed


def _out(path: Optional[Path], default_name: str) -> Path:
    return path if path is not None else settings.get_output_dir() / default_name


@click.group()
@click.version_option(version=__version__, prog_name="mlmcid")
@click.option("--verbose", is_flag=True, help="Verbose logging")
def cli(verbose: bool):
    """Multi-intent detection: synthesize corpora, train pointer models, evaluate, predict."""
    if verbose:
        settings.logging.level = "DEBUG"
        run_logger.reconfigure()


@cli.command()
@click.option("--pool", "pool_path", type=existing_file, required=True, help="Single-intent utterance pool (JSONL)")
@click.option("--taxonomy", "taxonomy_path", type=existing_file, required=True, help="Taxonomy JSON")
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    help="Output directory (default: <MLMCID_OUTPUT_DIR>/corpus)",
)
@click.option("--counts", default="800,100,100", show_default=True, help="train,dev,test example counts")
@click.option("--n-intents", type=int, default=2, show_default=True, help="Intents per example")
@click.option("--seed", type=int, help="Random seed (default: MLMCID_SEED or 0)")
@click.option(
    "--primary-policy",
    type=click.Choice([policy.value for policy in PrimaryPolicy]),
    default=PrimaryPolicy.SECOND_SPAN.value,
    show_default=True,
)
@click.option("--joiner", default=DEFAULT_JOINER, show_default=True, help="Text placed between utterances")
@handle_errors
def synthesize(pool_path, taxonomy_path, out_dir, counts, n_intents, seed, primary_policy, joiner):
    """Build train/dev/test multi-intent splits from a single-intent pool."""
    seed = _seed(seed)
    out_dir = _out(out_dir, "corpus")
    try:
        split_counts = parse_int_list(counts)
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {counts!r}", param_hint="--counts")
    taxonomy = load_taxonomy(taxonomy_path)
    pool = load_pool(pool_path, taxonomy)
    run_logger.step(f"Synthesizing {counts} examples from {len(pool)} utterances")
    splits = build_corpus(pool, taxonomy, split_counts, n_intents, seed, joiner, primary_policy)

    files = {}
    for name in SPLIT_NAMES:
        path = out_dir / f"{name}.jsonl"
        save_jsonl(splits[name], path)
        files[f"{name}.jsonl"] = path
        run_logger.artifact_written(f"{name} split", path)
    manifest = write_manifest(
        out_dir / "manifest.json",
        files,
        seed=seed,
        counts=dict(zip(SPLIT_NAMES, split_counts)),
        n_intents=n_intents,
        primary_policy=primary_policy,
        joiner=joiner,
        taxonomy_digest=taxonomy.digest(),
    )
    click.echo(f"Wrote {sum(split_counts)} examples to {out_dir} (manifest {manifest['manifest_hash'][:12]})")


@cli.command()
@click.option("--split", "split_path", type=existing_file, required=True, help="Split to subsample (JSONL)")
@click.option("--k", type=int, help="Examples kept per label")
@click.option("--fraction", type=float, help="Fraction kept per label")
@click.option("--key", type=click.Choice(["fine", "coarse"]), default="fine", show_default=True)
@click.option("--seed", type=int, help="Random seed (default: MLMCID_SEED or 0)")
@click.option("--out", "out_path", type=click.Path(dir_okay=False, path_type=Path), required=True)
@handle_errors
def sample(split_path, k, fraction, key, seed, out_path):
    """Draw a k-shot or fractional subset of a split, stratified by primary label."""
    if (k is None) == (fraction is None):
        raise click.UsageError("give exactly one of --k or --fraction")
    split = load_jsonl(split_path, name=split_path.stem)
    if k is not None:
        subset = sample_k_shot(split, k, key, _seed(seed))
    else:
        subset = sample_fraction(split, fraction, key, _seed(seed))
    save_jsonl(subset, out_path)
    run_logger.artifact_written("sampled split", out_path)
    click.echo(f"Kept {len(subset)} of {len(split)} examples")


@cli.command(name="train")
@click.option("--train", "train_path", type=existing_file, required=True, help="Training split (JSONL)")
@click.option("--dev", "dev_path", type=existing_file, required=True, help="Dev split (JSONL)")
@click.option("--taxonomy", "taxonomy_path", type=existing_file, required=True, help="Taxonomy JSON")
@click.option("--config", "config_path", type=existing_file, help="key=value run configuration")
@click.option(
    "--out",
    "out_dir",
    type=click.Path(file_okay=False, path_type=Path),
    help="Output directory (default: <MLMCID_OUTPUT_DIR>/model)",
)
@click.option("--seed", type=int, help="Overrides the config file and MLMCID_SEED")
@handle_errors
def train_command(train_path, dev_path, taxonomy_path, config_path, out_dir, seed):
    """Train a pointer-network model and write checkpoint.pt and loss_curve.csv."""
    out_dir = _out(out_dir, "model")
    run_config = RunConfig.load(config_path, overrides={"seed": seed})
    taxonomy = load_taxonomy(taxonomy_path)
    train_split = load_jsonl(train_path, "train", taxonomy)
    dev_split = load_jsonl(dev_path, "dev", taxonomy)
    result = train(train_split, dev_split, run_config.model, run_config.train, taxonomy)
    save_checkpoint(result.checkpoint, out_dir / "checkpoint.pt")
    emit_loss_curve(result.curve, out_dir / "loss_curve.csv")
    last = result.curve[-1]
    click.echo(
        f"Trained {len(result.curve)} epochs: train={last.train_total:.4f}, best epoch {result.checkpoint.epoch}"
    )


@cli.command(name="eval")
@click.option("--checkpoint", "checkpoint_path", type=existing_file, required=True)
@click.option("--test", "test_path", type=existing_file, required=True, help="Test split (JSONL)")
@click.option("--thresholds", default="0.5,0.6,0.7,0.8,0.9", show_default=True, help="Span-overlap thresholds")
@click.option(
    "--out",
    "out_path",
    type=click.Path(dir_okay=False, path_type=Path),
    help="Metrics JSON (default: <MLMCID_OUTPUT_DIR>/metrics.json)",
)
@click.option("--html", "html_path", type=click.Path(dir_okay=False, path_type=Path), help="Also write an HTML report")
@click.option("--batch-size", type=int, default=32, show_default=True)
@handle_errors
def eval_command(checkpoint_path, test_path, thresholds, out_path, html_path, batch_size):
    """Score a checkpoint on a test split and write the metrics JSON."""
    out_path = _out(out_path, "metrics.json")
    try:
        threshold_list = parse_float_list(thresholds)
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {thresholds!r}", param_hint="--thresholds")
    model = load_checkpoint(checkpoint_path).build_model()
    test_split = load_jsonl(test_path, "test")
    report = evaluate(model, test_split, threshold_list, batch_size)
    outputs = {"json": out_path}
    if html_path:
        outputs["html"] = html_path
    report_manager.generate_reports(report, outputs)
    _display_results(report)


def _display_results(report):
    """Display a metrics summary."""
    click.echo("\n" + "=" * 60)
    click.echo(f"EVALUATION SUMMARY ({report.n_examples} examples)")
    click.echo("=" * 60)
    for granularity in ("coarse", "fine"):
        metrics = getattr(report, granularity)
        for view in ("primary", "average"):
            click.echo(
                f"{granularity:<7} {view:<8} acc={metrics[view]['accuracy']:.4f} "
                f"macro-F1={metrics[view]['macro_f1']:.4f}"
            )
    for key, row in sorted(report.thresholded.items()):
        click.echo(f"Th={key}  coarse={row['coarse']['primary']:.4f}  fine={row['fine']['primary']:.4f}")
    click.echo("=" * 60)


@cli.command()
@click.option("--checkpoint", "checkpoint_path", type=existing_file, required=True)
@click.option("--text", required=True, help="Query to analyse")
@handle_errors
def predict(checkpoint_path, text):
    """Print the decoded intents of one query as JSON."""
    tokens = tokenize(text)
    if not tokens:
        click.echo("Error: --text must contain at least one token", err=True)
        sys.exit(EXIT_INPUT_ERROR)
    model = load_checkpoint(checkpoint_path).build_model()
    triplets = model.predict([tokens])[0]
    click.echo(json.dumps({"intents": [triplet.to_dict() for triplet in triplets]}, ensure_ascii=False))


@cli.command(name="check-taxonomy")
@click.option("--taxonomy", "taxonomy_path", type=existing_file, required=True)
@click.option("--expected-coarse", type=int, help="Expected coarse count (default: known count for the dataset)")
@handle_errors
def check_taxonomy(taxonomy_path, expected_coarse):
    """Check a taxonomy file against its expected number of coarse labels."""
    taxonomy = load_taxonomy(taxonomy_path)
    if expected_coarse is None:
        if taxonomy.dataset_name not in REFERENCE_COARSE_COUNTS:
            raise click.UsageError(
                f"no known coarse count for dataset {taxonomy.dataset_name!r}; pass --expected-coarse"
            )
        expected_coarse = REFERENCE_COARSE_COUNTS[taxonomy.dataset_name]
    result = validate_expected_sizes(taxonomy, expected_coarse)
    n_coarse, n_fine = taxonomy.sizes
    if not result:
        click.echo(f"Error: {result.message}", err=True)
        sys.exit(EXIT_INPUT_ERROR)
    click.echo(f"{click.style('OK', fg='green')} {result.message}, {n_fine} fine labels")


def main():
    cli()


if __name__ == "__main__":
    main()
