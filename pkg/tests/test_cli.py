"""CLI subcommands, driven through click's test runner."""

from __future__ import annotations

import json

import pytest
from click.testing import CliRunner

from escalator.cli import main
from escalator.config import EngineConfig
from escalator.engine import Engine, created, message
from escalator.feedback import FeedbackEvent, FeedbackKind


@pytest.fixture
def runner():
    return CliRunner()


def test_generate_corpus_then_replay(tmp_path, runner):
    corpus_dir = tmp_path / "corpus"
    result = runner.invoke(
        main,
        ["generate-corpus", "--groups", "3", "--per-group", "3", "--out", str(corpus_dir)],
    )
    assert result.exit_code == 0, result.output
    assert (corpus_dir / "events.jsonl").exists()
    assert (corpus_dir / "truth.json").exists()

    snapshot = tmp_path / "snap.json"
    result = runner.invoke(
        main,
        ["replay", str(corpus_dir / "events.jsonl"), "--snapshot-out", str(snapshot)],
    )
    assert result.exit_code == 0, result.output
    assert "rejected" in result.output
    assert json.loads(snapshot.read_text())["counters"]["escalated"] == 3


def test_sweep_writes_csv(tmp_path, runner):
    out = tmp_path / "sweep.csv"
    result = runner.invoke(
        main, ["sweep", "--start", "0.88", "--stop", "0.89", "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "threshold,precision,recall,f1"
    assert len(lines) == 3


def test_eval_reports_metrics(runner):
    result = runner.invoke(main, ["eval", "--ablate"])
    assert result.exit_code == 0, result.output
    assert "escalation:" in result.output
    assert "grouping:" in result.output
    assert "multi_link:" in result.output


def test_build_dataset_from_data_dir(tmp_path, runner):
    data_dir = tmp_path / "state"
    engine = Engine(EngineConfig(), data_dir=data_dir)
    engine.ingest(created("t1", "incident", 1))
    engine.ingest(message("t1", "customer", "big outage of the api gateway", 2))
    engine.ledger.record(FeedbackEvent("t1", FeedbackKind.UPVOTE, timestamp=5))
    engine.write_snapshot()
    engine.close()

    out = tmp_path / "sft.jsonl"
    result = runner.invoke(
        main,
        ["build-dataset", "--data-dir", str(data_dir), "--mode", "all", "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    lines = [json.loads(line) for line in out.read_text().splitlines() if line]
    assert len(lines) == 1  # one confirmed label -> one Correct sample
    assert lines[0]["strategy_tag"] == "Correct"
    assert lines[0]["ticket_id"] == "t1"
