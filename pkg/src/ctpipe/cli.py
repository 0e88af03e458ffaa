"""Command-line entry points for the end-to-end workflow."""

import json
import os
from pathlib import Path

import click
import numpy as np

from .config import load_pipeline_config, save_pipeline_config
from .diagnose import DiagnosisPipeline
from .model import build_base_model, load_model, save_model
from .preprocess import augment as augment_image
from .scans import load_manifest
from .store import PatientStore
from .synth import SynthSpec, generate
from .training import (
    BlockId,
    blockwise_sweep,
    build_training_set,
    finetune,
    format_sweep_table,
    make_splits,
)


@click.group()
def main():
    """Chest-CT diagnosis, severity and progression pipeline."""


def _store(store_dir):
    return PatientStore(store_dir or os.environ.get("STORE_DIR", "./store"))


def _prepare_data(manifest, cfg, augment_train=False):
    scans = load_manifest(manifest)
    usable = [s for s in scans if s.label in ("covid_positive", "healthy")]
    train_scans, test_scans, val_scans = make_splits(usable, cfg.split)
    sets = {}
    for name, part in (("train", train_scans), ("val", val_scans), ("test", test_scans)):
        X, y = build_training_set(part, cfg.preproc, cfg.segmenter, seed=cfg.train.seed)
        sets[name] = (X, y)
    if augment_train:
        X, y = sets["train"]
        rng = np.random.default_rng(cfg.train.seed)
        extra = []
        for img in X:
            gray = img[0] * cfg.preproc.channel_std[0] + cfg.preproc.channel_mean[0]
            aug = augment_image(np.clip(gray, 0.0, 1.0), cfg.preproc, seed=int(rng.integers(2**31)))
            mean = np.asarray(cfg.preproc.channel_mean, dtype=np.float32).reshape(3, 1, 1)
            std = np.asarray(cfg.preproc.channel_std, dtype=np.float32).reshape(3, 1, 1)
            extra.append(((np.broadcast_to(aug, (3, *aug.shape)) - mean) / std).astype(np.float32))
        sets["train"] = (np.concatenate([X, np.stack(extra)]), np.concatenate([y, y]))
    return sets


def _write_run(out_dir, cfg, history, model):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_pipeline_config(cfg, out / "config.json")
    with open(out / "metrics.jsonl", "w") as fh:
        for h in history:
            fh.write(json.dumps(h.to_json()) + "\n")
    save_model(model, out / "model.pt")
    return out


@main.command("synth-data")
@click.option("--out", required=True, type=click.Path())
@click.option("--patients", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--slices", default=3, show_default=True)
@click.option("--size", default=192, show_default=True)
@click.option("--positive-fraction", default=0.5, show_default=True)
def synth_data(out, patients, seed, slices, size, positive_fraction):
    """Generate a synthetic phantom dataset (manifest + images + masks)."""
    spec = SynthSpec(
        n_patients=patients,
        slices_per_scan=slices,
        image_size=size,
        positive_fraction=positive_fraction,
        seed=seed,
    )
    paths = generate(spec, out)
    click.echo(f"wrote {paths['manifest']}")


@main.command()
@click.option("--data", "manifest", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--block", default=None, help="block to fine-tune (FC, Conv5 ... Conv1)")
@click.option("--augment", "augment_train", is_flag=True, help="augment the training crops")
def train(manifest, out, config_path, block, augment_train):
    """Fine-tune the classifier on a labeled manifest."""
    cfg = load_pipeline_config(config_path)
    if block:
        cfg.block = block
    sets = _prepare_data(manifest, cfg, augment_train=augment_train)
    model = build_base_model(
        width=cfg.model_width,
        blocks_per_stage=cfg.blocks_per_stage,
        dropout=cfg.train.dropout,
        seed=cfg.train.seed,
    )
    model, history = finetune(
        model, BlockId.from_string(cfg.block), sets["train"], sets["val"], cfg.train
    )
    run_dir = _write_run(out, cfg, history, model)
    last = history[-1]
    click.echo(
        f"trained {cfg.block} for {len(history)} epochs; "
        f"val acc {last.val_accuracy:.3f}; artifacts in {run_dir}"
    )


@main.command()
@click.option("--data", "manifest", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(exists=True))
def sweep(manifest, out, config_path):
    """Fine-tune every block in turn and tabulate test metrics."""
    cfg = load_pipeline_config(config_path)
    sets = _prepare_data(manifest, cfg)
    base = build_base_model(
        width=cfg.model_width,
        blocks_per_stage=cfg.blocks_per_stage,
        dropout=cfg.train.dropout,
        seed=cfg.train.seed,
    )
    rows = blockwise_sweep(base, (sets["train"], sets["val"], sets["test"]), cfg.train)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.json", "w") as fh:
        json.dump(rows, fh, indent=2)
    click.echo(format_sweep_table(rows))


@main.command()
@click.option("--store-dir", type=click.Path())
@click.option("--age", required=True, type=int)
@click.option("--sex", required=True)
@click.option("--patient-id", default=None)
@click.option("--history", multiple=True)
def register(store_dir, age, sex, patient_id, history):
    """Register a patient in the store."""
    pid = _store(store_dir).register_patient(
        {"age": age, "sex": sex}, prior_history=list(history), actor="cli", patient_id=patient_id
    )
    click.echo(pid)


@main.command()
@click.option("--patient", "patient_id", required=True)
@click.option("--scan-dir", required=True, type=click.Path(exists=True))
@click.option("--store-dir", type=click.Path())
@click.option("--model", "model_path", type=click.Path(exists=True))
@click.option("--config", "config_path", type=click.Path(exists=True))
def diagnose(patient_id, scan_dir, store_dir, model_path, config_path):
    """Ingest scans from a directory (manifest.csv + images) and diagnose."""
    cfg = load_pipeline_config(config_path)
    model_path = model_path or os.environ.get("MODEL_PATH")
    if not model_path:
        raise click.UsageError("--model or MODEL_PATH is required")
    pipeline = DiagnosisPipeline(
        model=load_model(model_path), preproc=cfg.preproc, segmenter=cfg.segmenter
    )
    store = _store(store_dir)
    scans = load_manifest(Path(scan_dir) / "manifest.csv")
    for scan in sorted(scans, key=lambda s: s.acquired_at):
        result, point = store.ingest_and_diagnose(patient_id, scan, pipeline, actor="cli")
        click.echo(json.dumps({"diagnosis": result.to_json(), "severity_point": point.to_json() if point else None}))


@main.command()
@click.option("--patient", "patient_id", required=True)
@click.option("--store-dir", type=click.Path())
@click.option("--plot", "plot_path", type=click.Path())
@click.option("--forecast/--no-forecast", "with_forecast", default=True, show_default=True)
@click.option("--horizon", default=3, show_default=True)
def timeline(patient_id, store_dir, plot_path, with_forecast, horizon):
    """Print (and optionally plot) a patient's severity timeline."""
    payload = _store(store_dir).get_timeline(
        patient_id, include_forecast=with_forecast, horizon_days=horizon
    )
    click.echo(json.dumps(payload, indent=2))
    if plot_path:
        _plot_timeline(payload, plot_path)
        click.echo(f"plot written to {plot_path}")


def _plot_timeline(payload, plot_path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.dates as mdates
    import matplotlib.pyplot as plt
    from datetime import datetime

    fig, ax = plt.subplots(figsize=(8, 4.5))
    obs = [p for p in payload["points"] if not p["is_forecast"]]
    if obs:
        ts = [datetime.fromisoformat(p["timestamp"]) for p in obs]
        ax.plot(ts, [p["S"] for p in obs], "o-", color="tab:blue", label="severity S")
    fc = payload.get("forecast", [])
    if fc:
        ts = [datetime.fromisoformat(p["timestamp"]) for p in fc]
        ax.plot(ts, [p["S"] for p in fc], "s--", color="tab:orange", label="forecast")
    for med in payload.get("medications", []):
        start = datetime.fromisoformat(med["start"])
        end = datetime.fromisoformat(med["end"]) if med.get("end") else None
        if end:
            ax.axvspan(start, end, color="tab:green", alpha=0.15)
        ax.axvline(start, color="tab:green", linestyle=":", alpha=0.8)
        ax.annotate(med["name"], (start, ax.get_ylim()[1]), fontsize=8, rotation=90, va="top")
    ax.axhline(100.0, color="tab:red", linestyle="--", alpha=0.4)
    ax.set_ylabel("severity S (% of baseline)")
    ax.xaxis.set_major_formatter(mdates.DateFormatter("%Y-%m-%d"))
    ax.legend(loc="best")
    fig.autofmt_xdate()
    fig.tight_layout()
    fig.savefig(plot_path, dpi=120)
    plt.close(fig)


@main.command()
@click.option("--port", default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--store-dir", type=click.Path())
@click.option("--model", "model_path", type=click.Path())
@click.option("--token", default=None, help="bearer token (defaults to API_TOKEN)")
def serve(port, host, store_dir, model_path, token):
    """Run the HTTP API."""
    import uvicorn

    from .service import create_app

    app = create_app(store_dir=store_dir, model_path=model_path, api_token=token)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
