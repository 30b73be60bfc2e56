from dotenv import load_dotenv
load_dotenv()
import functools
import logging

import click

from . import pipeline
from .config import load_pipeline_config, setup_logging
from .errors import StageError, WeakRankError
from .models import Architecture, GainFunction, LabelSource, PolicyKind

logger = logging.getLogger(__name__)


def _config_option(f):
    return click.option(
        "--config", "config_path", type=click.Path(dir_okay=False),
        help="Pipeline YAML config (defaults to $WEAKRANK_CONFIG).",
    )(f)


def _workers_option(f):
    return click.option("--workers", type=click.IntRange(min=1), help="Worker threads for LF evaluation.")(f)


def _load(config_path, overrides):
    try:
        return load_pipeline_config(config_path, overrides)
    except WeakRankError as e:
        raise StageError("config", str(e))


def _handle_errors(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except StageError as e:
            raise click.ClickException(str(e))
    return wrapper


@click.group()
@click.option("--log-level", default=None, help="Overrides $LOG_LEVEL.")
def cli(log_level):
    """Weak supervision for learning-to-rank: LFs, weak labeler, relabeling, ranker, evaluation."""
    setup_logging(log_level)


@cli.command("eval-lfs")
@_config_option
@_workers_option
@_handle_errors
def eval_lfs(config_path, workers):
    """Apply every LF to the seed, train and eval datasets."""
    config = _load(config_path, {"workers": workers})
    shapes = pipeline.cmd_eval_lfs(config)
    for split, (n, m) in shapes.items():
        click.echo(f"{split}: {n} records x {m} LFs")


@cli.command("train-labeler")
@_config_option
@click.option("--alpha", type=click.FloatRange(min=0.0), help="Laplace smoothing.")
@_handle_errors
def train_labeler(config_path, alpha):
    """Fit the Naive-Bayes weak labeler on the seed set."""
    config = _load(config_path, {"labeler": {"smoothing_alpha": alpha}})
    model, auc = pipeline.cmd_train_labeler(config)
    click.echo(f"m={model.m} bias={model.bias:.6f} held-out AUC={'n/a' if auc is None else f'{auc:.4f}'}")


@cli.command("relabel")
@_config_option
@click.option("--policy", type=click.Choice([p.value for p in PolicyKind]))
@_handle_errors
def relabel(config_path, policy):
    """Rewrite train/eval targets with weak-labeler probabilities."""
    config = _load(config_path, {"relabel_policy": policy})
    counts = pipeline.cmd_relabel(config)
    click.echo(", ".join(f"{split}: {n} documents" for split, n in counts.items()))


@cli.command("train-ranker")
@_config_option
@click.option("--epochs", type=click.IntRange(min=0))
@click.option("--learning-rate", type=click.FloatRange(min=0.0, min_open=True))
@click.option("--seed", type=int)
@click.option("--label-source", type=click.Choice([s.value for s in LabelSource]))
@click.option("--architecture", type=click.Choice([a.value for a in Architecture]))
@_handle_errors
def train_ranker(config_path, epochs, learning_rate, seed, label_source, architecture):
    """Train the ListNet ranker on relabeled query groups."""
    config = _load(config_path, {"train": {
        "epochs": epochs,
        "learning_rate": learning_rate,
        "seed": seed,
        "label_source": label_source,
        "architecture": architecture,
    }})
    model, log = pipeline.cmd_train_ranker(config)
    click.echo(f"{model.architecture.value} ranker, final loss {log[-1]['loss']:.6f} after {len(log) - 1} epochs")


@cli.command("evaluate")
@_config_option
@click.option("--k", type=click.IntRange(min=1))
@click.option("--gain", "gain_function", type=click.Choice([g.value for g in GainFunction]))
@click.option("--excel/--no-excel", default=None, help="Also write report.xlsx.")
@_handle_errors
def evaluate(config_path, k, gain_function, excel):
    """NDCG@k on original, relabeled and weak labels plus p quantiles per engagement."""
    config = _load(config_path, {"evaluation": {"k": k, "gain_function": gain_function, "excel": excel}})
    report = pipeline.cmd_evaluate(config)
    click.echo(pipeline.report_summary(report))


@cli.command("sample-size")
@click.option("--max-error", "-e", type=float, required=True, help="Tolerated error E of an LF rate estimate.")
@click.option("--z", "z_alpha", type=float, default=2.0, show_default=True, help="Normal quantile z_alpha.")
@_handle_errors
def sample_size(max_error, z_alpha):
    """Seed examples needed for a given estimation error."""
    click.echo(str(pipeline.cmd_sample_size(max_error, z_alpha)))


@cli.command("synth")
@_config_option
@click.option("--seed", type=int)
@_handle_errors
def synth(config_path, seed):
    """Generate a synthetic corpus with planted relevance."""
    config = _load(config_path, {"synth": {"seed": seed}})
    paths = pipeline.cmd_synth(config)
    click.echo(f"Wrote {len(paths)} files under {config.paths.workdir}")


@cli.command("run")
@_config_option
@_workers_option
@click.option("--synth/--no-synth", "with_synth", default=False, help="Generate the corpus first.")
@_handle_errors
def run(config_path, workers, with_synth):
    """Every stage in order."""
    config = _load(config_path, {"workers": workers})
    report = pipeline.run_all(config, synth=with_synth)
    click.echo(pipeline.report_summary(report))


if __name__ == "__main__":
    cli()
