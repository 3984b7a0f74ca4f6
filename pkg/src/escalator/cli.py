"""Command-line entry points: serve, replay, sweep, build-dataset, eval."""

from __future__ import annotations

import json
from collections import Counter
from pathlib import Path

import click
import uvicorn

from . import corpus as corpus_mod
from . import evaluation
from .classify import PromptSpec
from .config import load_config
from .dataset import StrategyConfig, StrategyMode, build, emit
from .engine import Engine, IngestEvent
from .feedback import derive_labels
from .server import build_service
from .webhook import WebhookSink


def _config_from(ctx_params: dict) -> "tuple[str | None, dict]":
    path = ctx_params.pop("config", None)
    overrides = {k: v for k, v in ctx_params.items() if v is not None}
    return path, overrides


@click.group()
def main() -> None:
    """Online ticket-escalation engine."""


@main.command()
@click.option("--config", type=click.Path(exists=True), help="JSON config file.")
@click.option("--data-dir", "data_dir", type=click.Path(), help="Durable state directory.")
@click.option("--threshold", "similarity_threshold", type=float, help="Similarity threshold.")
@click.option("--webhook", "alert_webhook_url", help="Alert webhook URL.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--snapshot-every", default=200, show_default=True)
@click.option(
    "--console",
    "console_dir",
    type=click.Path(exists=True),
    help="Built analyst console directory (index.html + dist/) to serve at /.",
)
def serve(host: str, port: int, snapshot_every: int, console_dir: str | None, **params) -> None:
    """Run the HTTP service, restoring state from the data directory."""
    path, overrides = _config_from(params)
    config = load_config(path, overrides=overrides)

    def factory(publish):
        sinks = []
        if config.alert_webhook_url or config.category_webhooks:
            sinks.append(WebhookSink(config.alert_webhook_url, config.category_webhooks).deliver)
        if config.data_dir:
            engine, report = Engine.restore(
                config,
                data_dir=config.data_dir,
                alert_sinks=sinks,
                listeners=[publish],
                snapshot_every=snapshot_every,
            )
            click.echo(
                f"restored: snapshot={report.snapshot_loaded} "
                f"tail={report.tail_lines} applied={report.applied} "
                f"rejected={report.rejected} corrupt={report.corrupt_lines}"
            )
            return engine
        return Engine(config, alert_sinks=sinks, listeners=[publish], snapshot_every=snapshot_every)

    engine, app, _ = build_service(factory, console_dir=console_dir)
    try:
        uvicorn.run(app, host=host, port=port, log_level="info")
    finally:
        engine.close()


@main.command()
@click.argument("log", type=click.Path(exists=True))
@click.option("--config", type=click.Path(exists=True), help="JSON config file.")
@click.option("--threshold", "similarity_threshold", type=float)
@click.option("--snapshot-out", type=click.Path(), help="Write the folded state here.")
def replay(log: str, snapshot_out: str | None, **params) -> None:
    """Fold an event log into a fresh engine and print the outcome."""
    path, overrides = _config_from(params)
    config = load_config(path, overrides=overrides)
    engine = Engine(config)
    events = []
    with open(log, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                events.append(IngestEvent.parse(json.loads(line)))
    applied, rejected = engine.fold(events)
    states = Counter(t.state.value for t in engine.tickets.values())
    click.echo(f"applied {applied} events ({rejected} rejected)")
    click.echo(f"tickets: {dict(sorted(states.items()))}")
    click.echo(f"counters: {engine.metrics()}")
    if snapshot_out:
        Path(snapshot_out).write_bytes(engine.snapshot_bytes())
        click.echo(f"snapshot written to {snapshot_out}")


@main.command()
@click.option("--corpus-dir", type=click.Path(exists=True), help="Saved corpus directory.")
@click.option("--start", default=0.86, show_default=True)
@click.option("--stop", default=0.95, show_default=True)
@click.option("--step", default=0.01, show_default=True)
@click.option("--out", default="sweep.csv", show_default=True, type=click.Path())
def sweep(corpus_dir: str | None, start: float, stop: float, step: float, out: str) -> None:
    """Replay the dedup pipeline across thresholds and write a CSV."""
    corpus = (
        corpus_mod.load_corpus(corpus_dir)
        if corpus_dir
        else corpus_mod.geometry_corpus()
    )
    rows = evaluation.sweep_threshold(corpus, start, stop, step)
    evaluation.write_sweep_csv(rows, out)
    for row in rows:
        click.echo(
            f"threshold={row.threshold:.2f} precision={row.precision:.3f} "
            f"recall={row.recall:.3f} f1={row.f1:.3f}"
        )
    click.echo(f"wrote {out}")


@main.command("build-dataset")
@click.option("--data-dir", required=True, type=click.Path(exists=True))
@click.option(
    "--mode",
    type=click.Choice([m.value for m in StrategyMode]),
    default=StrategyMode.CORRECT_AND_REVISED.value,
    show_default=True,
)
@click.option("--revisions", default=3, show_default=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--config", type=click.Path(exists=True), help="JSON config file.")
def build_dataset(data_dir: str, mode: str, revisions: int, out: str, config: str | None) -> None:
    """Derive labels from recorded feedback and emit a fine-tuning dataset."""
    cfg = load_config(config, overrides={"data_dir": data_dir})
    engine, report = Engine.restore(cfg, data_dir=data_dir)
    click.echo(
        f"restored state (snapshot={report.snapshot_loaded}, tail={report.applied}); "
        f"{len(engine.ledger)} feedback events"
    )
    labels = derive_labels(engine.ledger, engine.predictions)
    spec = PromptSpec(
        categories=cfg.categories, max_transcript_messages=cfg.max_transcript_messages
    )
    samples = build(
        labels,
        engine.tickets,
        engine.chat,
        StrategyConfig(StrategyMode(mode), revisions),
        prompt_spec=spec,
    )
    emit(samples, out)
    click.echo(f"wrote {len(samples)} samples from {len(labels)} labels to {out}")


@main.command("generate-corpus")
@click.option("--groups", default=20, show_default=True)
@click.option("--per-group", default=9, show_default=True)
@click.option("--noise", default=0.1, show_default=True)
@click.option("--others", default=0.1, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--close-fraction", default=0.0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def generate_corpus_cmd(
    groups: int,
    per_group: int,
    noise: float,
    others: float,
    seed: int,
    close_fraction: float,
    out: str,
) -> None:
    """Generate a synthetic corpus (events.jsonl + truth.json)."""
    corpus = corpus_mod.generate_corpus(
        corpus_mod.SyntheticCorpusSpec(
            n_groups=groups,
            tickets_per_group=per_group,
            paraphrase_noise=noise,
            others_fraction=others,
            seed=seed,
            close_fraction=close_fraction,
        )
    )
    corpus_mod.save_corpus(corpus, out)
    click.echo(f"wrote {len(corpus.events)} events for {len(corpus.group_truth)} tickets to {out}")


@main.command("eval")
@click.option("--corpus-dir", type=click.Path(exists=True), help="Saved corpus directory.")
@click.option("--threshold", default=0.88, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--ablate/--no-ablate", default=False, show_default=True)
def eval_cmd(corpus_dir: str | None, threshold: float, seed: int, ablate: bool) -> None:
    """Score the mock pipeline on a corpus: escalation and grouping P/R/F1."""
    if corpus_dir:
        corpus = corpus_mod.load_corpus(corpus_dir)
    else:
        corpus = corpus_mod.generate_corpus(
            corpus_mod.SyntheticCorpusSpec(
                n_groups=20,
                tickets_per_group=9,
                paraphrase_noise=0.1,
                others_fraction=0.1,
                seed=seed,
            )
        )
    run = evaluation.run_pipeline(corpus, threshold=threshold)
    esc = evaluation.eval_escalation(run.predicted_categories, corpus.escalate_truth)
    grp = evaluation.eval_grouping(run.predicted_groups, corpus.group_truth)
    click.echo(f"escalation: precision={esc[0]:.3f} recall={esc[1]:.3f} f1={esc[2]:.3f}")
    click.echo(f"grouping:   precision={grp[0]:.3f} recall={grp[1]:.3f} f1={grp[2]:.3f}")
    if ablate:
        report = evaluation.ablate_rewriting(corpus, threshold=threshold)
        for row in report.rows:
            on_p, on_r, on_f = row.with_rewriting
            off_p, off_r, off_f = row.without_rewriting
            click.echo(
                f"{row.slice_name}: rewriting f1={on_f:.3f} "
                f"(p={on_p:.3f} r={on_r:.3f}) vs plain f1={off_f:.3f} "
                f"(p={off_p:.3f} r={off_r:.3f})"
            )


if __name__ == "__main__":
    main()
