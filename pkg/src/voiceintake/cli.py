"""Command-line interface: serve the API, measure a recording, export the
curated dataset, render reports (CSV + figures), and run the rubric
evaluation or its consistency oracle."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .audio import decode_wav, to_mono
from .config import ServiceConfig, load_config, make_llm_client
from .domain import SessionRecord
from .errors import TooShort
from .evaluation import (
    RatingTargets,
    aggregate,
    find_consistent_histogram,
    rate_sessions,
)
from .metrics import (
    clipping_fraction,
    deep_breath_count,
    max_phonation_time,
    respiratory_rate,
    rms_dbfs,
)
from .reports import (
    condition_prevalence,
    demographic_report,
    export_manifest,
    import_manifest,
    render_report_figures,
    write_report_csvs,
)


def _load_records(dataset: str) -> list[SessionRecord]:
    """Accepts either an exported manifest directory or a live data dir."""
    path = Path(dataset)
    if (path / "manifest.jsonl").exists() or path.name == "manifest.jsonl":
        records, _ = import_manifest(path)
        return records
    from .store import SessionStore

    return SessionStore(path).records()


@click.group()
def main():
    """Voice + survey health-record intake toolkit."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--host", default=None)
@click.option("--port", type=int, default=None)
@click.option("--data-dir", default=None)
def serve(config_path, host, port, data_dir):
    """Run the collection service."""
    import secrets

    import uvicorn

    from .service import create_app

    cfg = load_config(config_path)
    if host:
        cfg.host = host
    if port:
        cfg.port = port
    if data_dir:
        cfg.data_dir = data_dir
    if not cfg.admin_token:
        cfg.admin_token = secrets.token_urlsafe(16)
        click.echo(f"generated admin token: {cfg.admin_token}")
    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port)


@main.command()
@click.argument("file", type=click.Path(exists=True))
def metrics(file):
    """Print acoustic metrics for one WAV file as JSON."""
    samples, rate = decode_wav(Path(file).read_bytes())
    mono = to_mono(samples)
    out = {
        "rms_dbfs": rms_dbfs(mono),
        "clipping_fraction": clipping_fraction(mono),
        "respiratory_rate_bpm": None,
        "rr_confidence": 0.0,
        "deep_breath_count": None,
        "max_phonation_time_s": None,
    }
    try:
        bpm, conf = respiratory_rate(mono, rate)
        out["respiratory_rate_bpm"] = bpm
        out["rr_confidence"] = conf
    except TooShort:
        pass
    try:
        out["deep_breath_count"] = deep_breath_count(mono, rate)
    except TooShort:
        pass
    try:
        out["max_phonation_time_s"] = max_phonation_time(mono, rate)
    except TooShort:
        pass
    click.echo(json.dumps(out, indent=2, sort_keys=True))


@main.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def export(data_dir, out_dir):
    """Write manifest.jsonl + summary.json + sessions.csv for the dataset."""
    from .store import SessionStore

    store = SessionStore(data_dir)
    manifest = export_manifest(store.records(), store.blobs, out_dir)
    click.echo(
        f"exported {len(manifest.sessions)} sessions "
        f"({manifest.totals.n_included} included, "
        f"{manifest.totals.total_audio_hours:.2f} h audio) to {out_dir}"
    )


@main.command()
@click.option("--data", "dataset", required=True, type=click.Path(exists=True),
              help="data directory or exported manifest directory")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--ratings", "ratings_file", type=click.Path(exists=True), default=None,
              help="ratings JSON produced by 'eval run'")
def report(dataset, out_dir, ratings_file):
    """Render demographic and condition reports as CSVs plus PNG figures."""
    records = _load_records(dataset)
    demo = demographic_report(records)
    conditions = condition_prevalence(records)
    agg = None
    if ratings_file:
        payload = json.loads(Path(ratings_file).read_text())
        ratings = [r["rating"] for r in payload.get("ratings", [])]
        if ratings:
            agg = aggregate(ratings)
    paths = write_report_csvs(out_dir, demo, conditions, agg)
    paths += render_report_figures(out_dir, demo, conditions, agg)
    for path in paths:
        click.echo(str(path))


@main.group()
def eval():
    """Rubric evaluation commands."""


@eval.command("run")
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--llm", "llm_endpoint", default="mock:", show_default=True)
@click.option("--out", "out_file", type=click.Path(), default=None)
@click.option("--concurrency", type=int, default=2)
def eval_run(dataset, llm_endpoint, out_file, concurrency):
    """Rate eligible sessions and print the aggregate."""
    records = _load_records(dataset)
    cfg = ServiceConfig(llm_endpoint=llm_endpoint)
    llm = make_llm_client(cfg)
    ratings = rate_sessions(records, llm, concurrency=concurrency)
    if not ratings:
        click.echo("no eligible sessions")
        sys.exit(0)
    agg = aggregate(ratings)
    payload = {"ratings": [r.to_dict() for r in ratings], "aggregate": agg.to_dict()}
    if out_file:
        Path(out_file).write_text(json.dumps(payload, indent=2, sort_keys=True))
    click.echo(json.dumps(agg.to_dict(), indent=2, sort_keys=True))
    click.echo()
    click.echo(f"{'rating':>8} {'count':>6}")
    for rating, count in enumerate(agg.histogram, start=1):
        click.echo(f"{rating:>8} {count:>6}")


@eval.command("oracle")
@click.option("--n", type=int, required=True)
@click.option("--mean", type=float, default=None)
@click.option("--median", type=int, default=None)
@click.option("--std", type=float, default=None)
@click.option("--gt2", type=int, default=None)
@click.option("--eq5", type=int, default=None)
def eval_oracle(n, mean, median, std, gt2, eq5):
    """Search for a rating histogram consistent with published aggregates."""
    targets = RatingTargets(n=n, mean=mean, median=median, std=std,
                            pct_gt2=gt2, pct_eq5=eq5)
    result = find_consistent_histogram(targets)
    if result is None:
        click.echo("no consistent histogram exists for these targets")
        sys.exit(1)
    click.echo(json.dumps(result.to_dict(), indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
