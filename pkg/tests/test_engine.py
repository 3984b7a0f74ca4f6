"""Engine orchestration: ingestion, alerting, persistence, and restore."""

from __future__ import annotations

import json

import pytest
import requests

from escalator.config import EngineConfig
from escalator.embedding import MockEmbedder
from escalator.engine import (
    Engine,
    IngestEvent,
    MalformedEvent,
    OutOfOrder,
    UnknownTicket,
    closed,
    created,
    message,
)
from escalator.providers import MockChatProvider, ScriptedChatProvider
from escalator.tickets import TicketState
from escalator.webhook import WebhookSink


def fresh_engine(**kwargs) -> Engine:
    config = kwargs.pop("config", EngineConfig())
    return Engine(config, MockChatProvider(), MockEmbedder(config.embedding_dim), **kwargs)


def escalate_events(tid: str, text: str, base: int):
    return [
        created(tid, "incident", base),
        message(tid, "customer", text, base + 1),
    ]


def test_benign_ticket_cycles_back_to_active():
    engine = fresh_engine()
    engine.ingest(created("t1", "question", 1))
    for i in range(3):
        engine.ingest(message("t1", "customer", f"documentation question {i}", 2 + i))
    ticket = engine.tickets["t1"]
    assert ticket.state is TicketState.ACTIVE
    assert engine.alerts == []
    assert engine.predictions["t1"][0] == "Others"
    assert [s for s, _ in engine.state_history["t1"]].count("Analyzing") == 3


def test_identical_issues_produce_one_alert_and_a_link():
    engine = fresh_engine()
    for event in escalate_events("t1", "total outage of gpu instances cluster west", 10):
        engine.ingest(event)
    for event in escalate_events("t2", "total outage of gpu instances cluster west", 20):
        engine.ingest(event)
    assert engine.tickets["t1"].state is TicketState.ESCALATED
    assert engine.tickets["t2"].state is TicketState.LINKED
    assert engine.tickets["t2"].linked_to == "t1"
    assert len(engine.alerts) == 1
    assert engine.alerts[0].ticket_id == "t1"
    assert engine.metrics() == {"processed": 4, "escalated": 1, "linked": 1}
    assert engine.group_assignments == {"t1": "t1", "t2": "t1"}


def test_messages_on_escalated_tickets_only_update_transcript():
    engine = fresh_engine()
    for event in escalate_events("t1", "outage of the api gateway", 10):
        engine.ingest(event)
    rounds_before = len(engine.state_history["t1"])
    engine.ingest(message("t1", "analyst", "we are on it", 30))
    assert engine.tickets["t1"].state is TicketState.ESCALATED
    assert len(engine.tickets["t1"].transcript) == 2
    assert len(engine.state_history["t1"]) == rounds_before


def test_unknown_and_out_of_order_events():
    engine = fresh_engine()
    with pytest.raises(UnknownTicket):
        engine.ingest(message("ghost", "customer", "hello", 1))
    engine.ingest(created("t1", "x", 1))
    with pytest.raises(OutOfOrder):
        engine.ingest(created("t1", "x", 2))
    engine.ingest(closed("t1", 3))
    with pytest.raises(OutOfOrder):
        engine.ingest(closed("t1", 4))
    with pytest.raises(OutOfOrder):
        engine.ingest(message("t1", "customer", "late", 5))


def test_non_monotonic_message_timestamps_rejected():
    engine = fresh_engine()
    engine.ingest(created("t1", "x", 1))
    engine.ingest(message("t1", "customer", "first", 100))
    with pytest.raises(MalformedEvent):
        engine.ingest(message("t1", "customer", "earlier", 50))


def test_event_parse_rejects_malformed_payloads():
    with pytest.raises(MalformedEvent):
        IngestEvent.parse({"kind": "Nope", "ticket_id": "t", "timestamp": 1})
    with pytest.raises(MalformedEvent):
        IngestEvent.parse({"kind": "TicketCreated", "ticket_id": "t", "timestamp": 1})
    with pytest.raises(MalformedEvent):
        IngestEvent.parse(
            {
                "kind": "MessageAppended",
                "ticket_id": "t",
                "payload": {"author": "robot", "text": "x", "timestamp": 1},
                "timestamp": 1,
            }
        )


def test_close_promotes_group_representative():
    engine = fresh_engine()
    text = "outage of the payment api cluster"
    for i, tid in enumerate(("t1", "t2", "t3")):
        for event in escalate_events(tid, text, 10 * (i + 1)):
            engine.ingest(event)
    assert engine.tickets["t2"].state is TicketState.LINKED
    engine.ingest(closed("t1", 100))
    assert engine.tickets["t1"].state is TicketState.CLOSED
    assert engine.tickets["t2"].state is TicketState.ESCALATED
    assert engine.tickets["t3"].linked_to == "t2"
    assert set(engine.pool.records) == {"t2"}
    assert engine.pool.records["t2"].group_id == "t1"
    # Late duplicate joins the promoted representative's group.
    for event in escalate_events("t4", text, 200):
        engine.ingest(event)
    assert engine.tickets["t4"].linked_to == "t2"
    assert engine.group_assignments["t4"] == "t1"
    assert len(engine.alerts) == 1


def test_uniqueness_invariant_holds_after_every_event():
    engine = fresh_engine()
    text = "outage of the search index"
    events = (
        escalate_events("t1", text, 10)
        + escalate_events("t2", text, 20)
        + escalate_events("t3", text, 30)
        + [closed("t1", 40), closed("t2", 50), closed("t3", 60)]
    )
    for event in events:
        engine.ingest(event)
        linked = [t for t in engine.tickets.values() if t.state is TicketState.LINKED]
        for ticket in linked:
            assert engine.tickets[ticket.linked_to].state is TicketState.ESCALATED
        for ticket in engine.tickets.values():
            assert (ticket.linked_to is not None) == (ticket.state is TicketState.LINKED)
        escalated = [t for t in engine.tickets.values() if t.state is TicketState.ESCALATED]
        assert len(escalated) == len(engine.pool)


def test_fail_safe_garbage_never_escalates():
    # Scripted misbehaving provider: malformed on both the first attempt
    # and the repair attempt, for each of two rounds.
    provider = ScriptedChatProvider(["garbage", "more garbage", "{broken", "{{"])
    engine = Engine(EngineConfig(), provider, MockEmbedder(256))
    engine.ingest(created("t1", "x", 1))
    engine.ingest(message("t1", "customer", "massive outage everywhere", 2))
    engine.ingest(message("t1", "customer", "still a massive outage", 3))
    assert engine.tickets["t1"].state is TicketState.ACTIVE
    assert engine.alerts == []
    assert len(engine.pool) == 0
    assert engine.predictions["t1"][0] == "Others"


def test_provider_exception_aborts_round_safely():
    engine = Engine(EngineConfig(), ScriptedChatProvider([]), MockEmbedder(256))
    engine.ingest(created("t1", "x", 1))
    engine.ingest(message("t1", "customer", "huge outage", 2))
    assert engine.tickets["t1"].state is TicketState.ACTIVE
    assert engine.alerts == []


# -- persistence ----------------------------------------------------------------


def corpus_events():
    from escalator.corpus import SyntheticCorpusSpec, generate_corpus

    return generate_corpus(
        SyntheticCorpusSpec(6, 4, 0.1, 0.2, seed=31, close_fraction=0.2, embedding_dim=256)
    ).events


def test_replaying_same_log_is_byte_identical():
    events = corpus_events()
    first, second = fresh_engine(), fresh_engine()
    for event in events:
        first.ingest(event)
        second.ingest(event)
    assert first.snapshot_bytes() == second.snapshot_bytes()


def test_snapshot_with_empty_tail_restores_identical_state(tmp_path):
    engine = fresh_engine(data_dir=tmp_path)
    for event in corpus_events():
        engine.ingest(event)
    engine.write_snapshot()
    engine.close()

    restored, report = Engine.restore(
        EngineConfig(), MockChatProvider(), MockEmbedder(256), data_dir=tmp_path
    )
    assert report.snapshot_loaded
    assert report.tail_lines == 0
    assert restored.snapshot_bytes() == engine.snapshot_bytes()


def test_crash_restore_reproduces_prefix_fold(tmp_path):
    events = corpus_events()
    prefix = len(events) // 3
    engine = fresh_engine(data_dir=tmp_path, snapshot_every=10)
    for event in events[:prefix]:
        engine.ingest(event)
    expected = engine.snapshot_bytes()
    engine.close()  # simulated crash: no final snapshot write

    restored, report = Engine.restore(
        EngineConfig(), MockChatProvider(), MockEmbedder(256), data_dir=tmp_path
    )
    assert report.snapshot_loaded  # periodic snapshot plus tail replay
    assert restored.snapshot_bytes() == expected


def test_truncated_final_line_restores_minus_that_event(tmp_path):
    events = corpus_events()[:20]
    engine = fresh_engine(data_dir=tmp_path)
    for event in events:
        engine.ingest(event)
    engine.close()

    log = tmp_path / "events.jsonl"
    content = log.read_text()
    log.write_text(content[: content.rfind('"')])  # chop the last line mid-string

    restored, report = Engine.restore(
        EngineConfig(), MockChatProvider(), MockEmbedder(256), data_dir=tmp_path
    )
    assert report.corrupt_lines == 1
    assert report.applied == 19

    reference = fresh_engine()
    for event in events[:19]:
        reference.ingest(event)
    # Ignore the log-position field: the restored engine also consumed the
    # corrupt line.
    left = json.loads(restored.snapshot_bytes())
    right = json.loads(reference.snapshot_bytes())
    left.pop("log_position"), right.pop("log_position")
    assert left == right


def test_restore_does_not_refire_alerts_or_listeners(tmp_path):
    received = []
    engine = fresh_engine(data_dir=tmp_path)
    for event in escalate_events("t1", "an outage again", 10):
        engine.ingest(event)
    engine.close()
    restored, _ = Engine.restore(
        EngineConfig(),
        MockChatProvider(),
        MockEmbedder(256),
        data_dir=tmp_path,
        alert_sinks=[received.append],
        listeners=[received.append],
    )
    assert restored.alerts  # state knows the alert happened
    assert received == []  # but nothing was re-delivered


# -- webhook delivery ------------------------------------------------------------


class FlakyPost:
    def __init__(self, fail_times: int):
        self.fail_times = fail_times
        self.calls: list[tuple[str, dict]] = []

    def __call__(self, url, json=None, timeout=None):
        self.calls.append((url, json))
        if len(self.calls) <= self.fail_times:
            raise requests.ConnectionError("nope")

        class Response:
            status_code = 200

        return Response()


def test_webhook_retries_then_succeeds():
    post = FlakyPost(fail_times=2)
    sink = WebhookSink("http://alerts.local/hook", post=post, sleep=lambda _: None)
    assert sink.deliver({"ticket_id": "t1", "category": "System Failure"})
    assert len(post.calls) == 3


def test_webhook_gives_up_after_retries():
    post = FlakyPost(fail_times=10)
    sink = WebhookSink("http://alerts.local/hook", post=post, sleep=lambda _: None)
    assert not sink.deliver({"ticket_id": "t1", "category": "System Failure"})
    assert len(post.calls) == 4  # initial attempt + 3 retries


def test_webhook_routes_by_category():
    post = FlakyPost(fail_times=0)
    sink = WebhookSink(
        "http://alerts.local/default",
        {"Security Incident": "http://alerts.local/security"},
        post=post,
        sleep=lambda _: None,
    )
    sink.deliver({"ticket_id": "t1", "category": "Security Incident"})
    sink.deliver({"ticket_id": "t2", "category": "System Failure"})
    assert post.calls[0][0] == "http://alerts.local/security"
    assert post.calls[1][0] == "http://alerts.local/default"


def test_engine_delivers_alert_to_webhook_sink():
    post = FlakyPost(fail_times=0)
    sink = WebhookSink("http://alerts.local/hook", post=post, sleep=lambda _: None)
    engine = fresh_engine(alert_sinks=[sink.deliver])
    for event in escalate_events("t1", "an outage of the cdn", 5):
        engine.ingest(event)
    assert len(post.calls) == 1
    payload = post.calls[0][1]
    assert payload["ticket_id"] == "t1"
    assert payload["category"] == "System Failure"
    assert payload["group_size"] == 1
    assert payload["link_url"] == "/tickets/t1"
