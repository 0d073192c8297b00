"""Operator command line: train, eval, serve, export-dataset, inspect-model.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

import click
import numpy as np

from . import ferw
from .errors import FerkitError
from .evaluation import evaluate, load_labeled_dataset, render_comparison_report
from .model import build_table1_model
from .preprocess import pipeline
from .training import ArrayDataset, TrainConfig, train

STORE_ROOT_ENV = "FERKIT_STORE_ROOT"


@click.group()
def cli():
    """Facial emotion recognition toolkit."""


def _materialize(root: str, limit: int | None = None) -> ArrayDataset:
    dataset = load_labeled_dataset(root)
    records = dataset.records[:limit] if limit else dataset.records
    images = np.stack([pipeline(path.read_bytes()) for path, _ in records])
    labels = np.array([int(label) for _, label in records], dtype=np.int64)
    return ArrayDataset(images=images, labels=labels)


@cli.command("train")
@click.option("--data", "data_root", required=True, type=click.Path(exists=True), help="Training dataset root (directory-per-label).")
@click.option("--eval", "eval_root", required=True, type=click.Path(exists=True), help="Evaluation dataset root.")
@click.option("--out", "out_path", required=True, type=click.Path(), help="Destination for the peak-epoch FERW checkpoint.")
@click.option("--epochs", default=13, show_default=True, help="Number of training epochs.")
@click.option("--batch", "batch_size", default=64, show_default=True, help="Minibatch size.")
@click.option("--seed", default=0, show_default=True, help="Seed for init and shuffling.")
@click.option("--no-class-weights", is_flag=True, help="Disable class-weighted loss.")
@click.option("--history", "history_path", type=click.Path(), default=None, help="Optional CSV path for per-epoch metrics (defaults to <out>.history.csv).")
def train_cmd(data_root, eval_root, out_path, epochs, batch_size, seed, no_class_weights, history_path):
    """Train the lightweight CNN and write the peak checkpoint."""
    train_set = _materialize(data_root)
    eval_set = _materialize(eval_root)
    config = TrainConfig(
        epochs=epochs,
        batch_size=batch_size,
        seed=seed,
        class_weighting=not no_class_weights,
        log=True,
    )
    model = build_table1_model(seed)
    history, best = train(model, train_set, eval_set, config)
    ferw.save_weights(best, out_path)
    history.write_csv(history_path or f"{out_path}.history.csv")
    peak = history.epochs[history.peak_epoch]
    click.echo(f"peak epoch {peak.epoch}: eval top-1 {peak.eval_top1:.4f}; checkpoint {out_path}")


@cli.command("eval")
@click.option("--model", "model_path", required=True, type=click.Path(exists=True), help="FERW model file.")
@click.option("--data", "data_root", required=True, type=click.Path(exists=True), help="Dataset root (directory-per-label).")
@click.option("--report", "report_path", type=click.Path(), default=None, help="Write the report here instead of stdout.")
def eval_cmd(model_path, data_root, report_path):
    """Evaluate a model and print the accuracy comparison report."""
    model = ferw.load_weights(model_path)
    dataset = load_labeled_dataset(data_root)
    metrics = evaluate(model, dataset)
    report = render_comparison_report(metrics, name=Path(model_path).stem)
    if report_path:
        Path(report_path).write_text(report)
        click.echo(f"report written to {report_path}")
    else:
        click.echo(report, nl=False)


@cli.command("serve")
@click.option("--model", "model_path", type=click.Path(exists=True), default=None, help="FERW model to install and activate on startup.")
@click.option("--store", "store_root", type=click.Path(), default=None, help=f"Storage root (default ${STORE_ROOT_ENV} or ./ferkit-store).")
@click.option("--listen", default="127.0.0.1:8000", show_default=True, help="host:port to bind.")
@click.option("--origin", default="*", show_default=True, help="Allowed CORS origin for the UI.")
@click.option("--max-upload", default=10 * 1024 * 1024, show_default=True, help="Maximum upload size in bytes.")
def serve_cmd(model_path, store_root, listen, origin, max_upload):
    """Run the classification service."""
    import uvicorn

    from .service import ServiceConfig, create_app

    root = store_root or os.environ.get(STORE_ROOT_ENV) or "ferkit-store"
    app = create_app(ServiceConfig(
        storage_root=Path(root), max_upload_bytes=max_upload, allowed_origin=origin
    ))
    if model_path:
        data = Path(model_path).read_bytes()
        model_id = app.state.registry.install(data, name=Path(model_path).name)
        app.state.registry.activate(model_id)
        click.echo(f"active model {model_id}")
    host, _, port = listen.rpartition(":")
    if not host or not port.isdigit():
        raise click.UsageError(f"--listen must be host:port, got {listen!r}")
    uvicorn.run(app, host=host, port=int(port))


@cli.command("export-dataset")
@click.option("--store", "store_root", type=click.Path(), default=None, help=f"Storage root (default ${STORE_ROOT_ENV}).")
@click.option("--out", "out_path", required=True, type=click.Path(), help="Destination zip archive.")
@click.option("--labeled-only", is_flag=True, help="Export only human-labeled records.")
def export_cmd(store_root, out_path, labeled_only):
    """Export stored images as a directory-per-label archive."""
    from .store import ImageStore

    root = store_root or os.environ.get(STORE_ROOT_ENV)
    if not root:
        raise click.UsageError(f"--store or ${STORE_ROOT_ENV} is required")
    store = ImageStore(Path(root) / "images")
    Path(out_path).write_bytes(store.export_archive(labeled_only=labeled_only))
    click.echo(f"exported {store.image_count()} stored images to {out_path}")


@cli.command("inspect-model")
@click.argument("model_path", type=click.Path(exists=True))
def inspect_cmd(model_path):
    """Print a model's layer manifest and parameter counts."""
    model = ferw.load_weights(model_path)
    chain = model.spec.shape_chain()
    click.echo(f"input shape: {model.spec.input_shape}")
    for i, layer in enumerate(model.spec.layers):
        config = " ".join(f"{k}={v}" for k, v in layer.config.items())
        click.echo(f"  {i:2d} {layer.kind:<10} {config:<30} -> {chain[i + 1]}")
    click.echo(f"labels: {', '.join(model.spec.labels)}")
    click.echo(f"parameters: {sum(p.size for p in model.params.values())}")
    click.echo(f"running statistics: {sum(s.size for s in model.stats.values())}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.Abort:
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 2
    except (FerkitError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
