"""The online escalation engine: event ingestion, analysis rounds,
alerting, and event-sourced persistence.

State is a fold over the durable event log. Every applied ingest event is
appended to the log before it mutates state, and snapshots are plain JSON
with sorted keys, so two runs over the same log with deterministic
providers produce byte-identical snapshots. Restore loads the latest
snapshot and replays the log tail.
"""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Iterable

from . import dedup
from .classify import PromptSpec, classify, retrieve_icl_examples, ExampleStore
from .config import EngineConfig
from .dedup import EscalationPool, EscalationRecord, IssueSummary, LinkedTicket
from .embedding import Embedder, HttpEmbedder, IssueEmbedding, MockEmbedder
from .feedback import FeedbackLedger
from .providers import ChatProvider, HttpChatProvider, MockChatProvider, ProviderError
from .tickets import (
    OTHERS,
    Author,
    LifecycleEvent,
    Message,
    Ticket,
    TicketId,
    TicketState,
    create,
    transition,
)

logger = logging.getLogger(__name__)

SNAPSHOT_VERSION = 1
EVENT_LOG_NAME = "events.jsonl"
SNAPSHOT_NAME = "snapshot.json"
FEEDBACK_LOG_NAME = "feedback.jsonl"


class IngestError(Exception):
    pass


class MalformedEvent(IngestError):
    """The event payload does not match the ingest schema."""


class UnknownTicket(IngestError):
    """The event references a ticket id that was never created."""


class OutOfOrder(IngestError):
    """The event is valid in shape but illegal in sequence."""


class IngestKind(str, Enum):
    TICKET_CREATED = "TicketCreated"
    MESSAGE_APPENDED = "MessageAppended"
    TICKET_CLOSED = "TicketClosed"


@dataclass(frozen=True)
class IngestEvent:
    kind: IngestKind
    ticket_id: TicketId
    payload: dict | None
    timestamp: int

    def to_json_obj(self) -> dict:
        return {
            "kind": self.kind.value,
            "ticket_id": self.ticket_id,
            "payload": self.payload,
            "timestamp": self.timestamp,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True, ensure_ascii=False)

    @classmethod
    def parse(cls, obj: Any) -> "IngestEvent":
        if not isinstance(obj, dict):
            raise MalformedEvent("event must be a JSON object")
        try:
            kind = IngestKind(obj["kind"])
        except (KeyError, ValueError) as exc:
            raise MalformedEvent(f"unknown event kind: {obj.get('kind')!r}") from exc
        ticket_id = obj.get("ticket_id")
        if not isinstance(ticket_id, str) or not ticket_id:
            raise MalformedEvent("ticket_id must be a non-empty string")
        timestamp = obj.get("timestamp")
        if not isinstance(timestamp, int):
            raise MalformedEvent("timestamp must be an integer (ms since epoch)")
        payload = obj.get("payload")
        if kind is IngestKind.TICKET_CREATED:
            if not isinstance(payload, dict) or not isinstance(payload.get("title"), str):
                raise MalformedEvent("TicketCreated payload needs a title")
        elif kind is IngestKind.MESSAGE_APPENDED:
            if not isinstance(payload, dict):
                raise MalformedEvent("MessageAppended payload needs a message")
            if payload.get("author") not in (a.value for a in Author):
                raise MalformedEvent("message author must be customer or analyst")
            if not isinstance(payload.get("text"), str) or not payload["text"]:
                raise MalformedEvent("message text must be a non-empty string")
            if not isinstance(payload.get("timestamp"), int):
                raise MalformedEvent("message timestamp must be an integer")
        else:
            payload = None
        return cls(kind=kind, ticket_id=ticket_id, payload=payload, timestamp=timestamp)


def created(ticket_id: str, title: str, timestamp: int) -> IngestEvent:
    return IngestEvent(IngestKind.TICKET_CREATED, ticket_id, {"title": title}, timestamp)


def message(ticket_id: str, author: str, text: str, timestamp: int) -> IngestEvent:
    return IngestEvent(
        IngestKind.MESSAGE_APPENDED,
        ticket_id,
        {"author": author, "text": text, "timestamp": timestamp},
        timestamp,
    )


def closed(ticket_id: str, timestamp: int) -> IngestEvent:
    return IngestEvent(IngestKind.TICKET_CLOSED, ticket_id, None, timestamp)


@dataclass(frozen=True)
class AlertNotification:
    """Emitted exactly once per new escalation record."""

    ticket_id: TicketId
    category: str
    issue_summary: IssueSummary
    group_size: int
    link_url: str

    def to_json_obj(self) -> dict:
        return {
            "ticket_id": self.ticket_id,
            "category": self.category,
            "issue_summary": {
                "text": self.issue_summary.text,
                "product": self.issue_summary.product,
            },
            "group_size": self.group_size,
            "link_url": self.link_url,
        }


@dataclass
class Counters:
    processed: int = 0
    escalated: int = 0
    linked: int = 0

    def to_json_obj(self) -> dict:
        return {"processed": self.processed, "escalated": self.escalated, "linked": self.linked}


@dataclass
class RestoreReport:
    snapshot_loaded: bool = False
    tail_lines: int = 0
    applied: int = 0
    rejected: int = 0
    corrupt_lines: int = 0


def _build_chat(config: EngineConfig) -> ChatProvider:
    if config.chat_provider == "http":
        return HttpChatProvider(
            endpoint=config.chat_endpoint or "",
            model=config.chat_model or "default",
            api_key=config.chat_api_key,
        )
    return MockChatProvider()


def _build_embedder(config: EngineConfig) -> Embedder:
    if config.embedding_provider == "http":
        return HttpEmbedder(
            endpoint=config.embedding_endpoint or "",
            model=config.embedding_model or "default",
            dim=config.embedding_dim,
            api_key=config.embedding_api_key,
        )
    return MockEmbedder(config.embedding_dim)


class Engine:
    """Single engine instance: tickets, escalation pool, ledger, counters.

    Ingestion across tickets may be concurrent; all state mutation runs
    under one lock, and the pool's check-and-insert is additionally its
    own critical section. Listeners receive ``{"type": "alert"|"state",
    "data": ...}`` events synchronously after each mutation.
    """

    def __init__(
        self,
        config: EngineConfig | None = None,
        chat: ChatProvider | None = None,
        embedder: Embedder | None = None,
        *,
        data_dir: str | Path | None = None,
        alert_sinks: Iterable[Callable[[dict], Any]] = (),
        listeners: Iterable[Callable[[dict], None]] = (),
        snapshot_every: int | None = None,
    ):
        self.config = config or EngineConfig()
        self.chat = chat or _build_chat(self.config)
        self.embedder = embedder or _build_embedder(self.config)
        self.prompt_spec = PromptSpec(
            categories=self.config.categories,
            max_transcript_messages=self.config.max_transcript_messages,
        )
        self.pool = EscalationPool(threshold=self.config.similarity_threshold)
        self.tickets: dict[TicketId, Ticket] = {}
        self.state_history: dict[TicketId, list[tuple[str, int]]] = {}
        self.predictions: dict[TicketId, tuple[str, str]] = {}
        self.group_assignments: dict[TicketId, TicketId] = {}
        self.counters = Counters()
        self.example_store = ExampleStore(self.embedder)
        self.alert_sinks = list(alert_sinks)
        self.listeners = list(listeners)
        self.observed_similarities: list[float] = []
        self.alerts: list[AlertNotification] = []
        self._lock = threading.RLock()
        self._log_position = 0
        self._replaying = False
        self._snapshot_every = snapshot_every
        self._data_dir = Path(data_dir or self.config.data_dir) if (data_dir or self.config.data_dir) else None
        self._log_handle = None
        if self._data_dir is not None:
            self._data_dir.mkdir(parents=True, exist_ok=True)
            ledger_path = self._data_dir / FEEDBACK_LOG_NAME
        else:
            ledger_path = None
        self.ledger = FeedbackLedger(ledger_path, eligible=self._was_escalated_or_linked)

    # -- feedback ---------------------------------------------------------

    def _was_escalated_or_linked(self, ticket_id: TicketId) -> bool:
        return ticket_id in self.group_assignments

    # -- event plumbing ----------------------------------------------------

    def _publish(self, event_type: str, data: dict) -> None:
        if self._replaying:
            return
        for listener in self.listeners:
            try:
                listener({"type": event_type, "data": data})
            except Exception:  # pragma: no cover - listener bugs stay isolated
                logger.exception("listener failed for %s event", event_type)

    def _publish_state(self, ticket: Ticket, timestamp: int) -> None:
        self.state_history.setdefault(ticket.id, []).append((ticket.state.value, timestamp))
        self._publish(
            "state",
            {
                "ticket_id": ticket.id,
                "state": ticket.state.value,
                "category": ticket.category,
                "linked_to": ticket.linked_to,
                "timestamp": timestamp,
            },
        )

    def _emit_alert(self, record: EscalationRecord) -> None:
        alert = AlertNotification(
            ticket_id=record.ticket_id,
            category=record.category,
            issue_summary=record.issue,
            group_size=record.group_size,
            link_url=f"/tickets/{record.ticket_id}",
        )
        self.alerts.append(alert)
        if self._replaying:
            return
        payload = alert.to_json_obj()
        for sink in self.alert_sinks:
            try:
                sink(payload)
            except Exception:  # pragma: no cover - sink bugs stay isolated
                logger.exception("alert sink failed for %s", record.ticket_id)
        self._publish("alert", payload)

    # -- ingestion ---------------------------------------------------------

    def ingest(self, event: IngestEvent) -> dict:
        """Append one event to the durable log, then apply it.

        Returns an acknowledgment with the ticket's resulting state.
        Raises UnknownTicket / OutOfOrder / MalformedEvent; rejected
        events remain in the log and are skipped identically on replay.
        """
        with self._lock:
            self._append_to_log(event)
            ack = self._apply(event)
            if (
                self._snapshot_every
                and self._data_dir is not None
                and self.counters.processed % self._snapshot_every == 0
            ):
                self.write_snapshot()
            return ack

    def _append_to_log(self, event: IngestEvent) -> None:
        self._log_position += 1
        if self._data_dir is None:
            return
        if self._log_handle is None:
            self._log_handle = (self._data_dir / EVENT_LOG_NAME).open("a", encoding="utf-8")
        self._log_handle.write(event.to_json_line() + "\n")
        self._log_handle.flush()

    def _apply(self, event: IngestEvent) -> dict:
        if event.kind is IngestKind.TICKET_CREATED:
            self._apply_created(event)
        elif event.kind is IngestKind.MESSAGE_APPENDED:
            self._apply_message(event)
        else:
            self._apply_closed(event)
        self.counters.processed += 1
        ticket = self.tickets[event.ticket_id]
        return {
            "status": "accepted",
            "ticket_id": ticket.id,
            "state": ticket.state.value,
            "processed": self.counters.processed,
        }

    def _apply_created(self, event: IngestEvent) -> None:
        if event.ticket_id in self.tickets:
            raise OutOfOrder(f"ticket {event.ticket_id} was already created")
        ticket = create(event.ticket_id, event.payload["title"])
        self.tickets[ticket.id] = ticket
        self._publish_state(ticket, event.timestamp)

    def _apply_message(self, event: IngestEvent) -> None:
        ticket = self.tickets.get(event.ticket_id)
        if ticket is None:
            raise UnknownTicket(event.ticket_id)
        if ticket.state is TicketState.CLOSED:
            raise OutOfOrder(f"ticket {ticket.id} is closed")
        payload = event.payload or {}
        msg = Message(
            author=Author(payload["author"]),
            text=payload["text"],
            timestamp=payload["timestamp"],
        )
        if ticket.transcript and msg.timestamp < ticket.transcript[-1].timestamp:
            raise MalformedEvent("message timestamps must be non-decreasing")
        ticket.transcript.append(msg)
        if ticket.state is TicketState.ACTIVE:
            self._analysis_round(ticket, event.timestamp)
        # Escalated/Linked tickets only accumulate transcript.

    def _analysis_round(self, ticket: Ticket, timestamp: int) -> None:
        """One classify -> summarize -> resolve round for an active ticket."""
        self._swap(transition(ticket, LifecycleEvent.new_dialogue()), timestamp)
        ticket = self.tickets[ticket.id]
        retrieved = []
        if self.config.icl_examples > 0 and len(self.example_store) > 0:
            retrieved = retrieve_icl_examples(
                self.example_store, ticket, self.config.icl_examples
            )
        try:
            result = classify(self.chat, self.prompt_spec, ticket, retrieved)
        except ProviderError as exc:
            logger.error("classification round for %s aborted: %s", ticket.id, exc)
            self._swap(transition(ticket, LifecycleEvent.classified_others()), timestamp)
            return
        self.predictions[ticket.id] = (result.category, result.thought)
        if result.category == OTHERS:
            self._swap(transition(ticket, LifecycleEvent.classified_others()), timestamp)
            return

        self._swap(
            transition(ticket, LifecycleEvent.classified_category(result.category)), timestamp
        )
        ticket = self.tickets[ticket.id]
        issue = dedup.summarize_issue(self.chat, ticket, self.config.max_transcript_messages)
        embedding = self.embedder.embed(issue.text)
        decision = dedup.resolve_pending(
            self.pool,
            ticket,
            issue,
            embedding,
            provider=self.chat,
            embedder=self.embedder,
            timestamp=timestamp,
            rewrite=self.config.rewrite_enabled,
        )
        if decision.best_similarity is not None:
            self.observed_similarities.append(decision.best_similarity)
        self.group_assignments[ticket.id] = decision.record.group_id
        if decision.linked:
            self._swap(
                transition(ticket, LifecycleEvent.similar_found(decision.record.ticket_id)),
                timestamp,
            )
            self.tickets[ticket.id].issue = issue
            self.counters.linked += 1
            self._publish(
                "group",
                {
                    "group_id": decision.record.group_id,
                    "representative": decision.record.ticket_id,
                    "group_size": decision.record.group_size,
                    "joined": ticket.id,
                },
            )
        else:
            self._swap(transition(ticket, LifecycleEvent.no_similar_found()), timestamp)
            self.tickets[ticket.id].issue = issue
            self.counters.escalated += 1
            self._emit_alert(decision.record)

    def _apply_closed(self, event: IngestEvent) -> None:
        ticket = self.tickets.get(event.ticket_id)
        if ticket is None:
            raise UnknownTicket(event.ticket_id)
        if ticket.state is TicketState.CLOSED:
            raise OutOfOrder(f"ticket {ticket.id} is already closed")
        delta = dedup.on_close(ticket, self.pool, self.tickets)
        self._swap(transition(ticket, LifecycleEvent.customer_closed()), event.timestamp)
        if delta.promoted is not None:
            self._publish_state(self.tickets[delta.promoted], event.timestamp)
            for member_id in delta.relinked:
                self._publish_state(self.tickets[member_id], event.timestamp)

    def _swap(self, ticket: Ticket, timestamp: int) -> None:
        self.tickets[ticket.id] = ticket
        self._publish_state(ticket, timestamp)

    # -- queries -------------------------------------------------------------

    def metrics(self) -> dict:
        return self.counters.to_json_obj()

    def ticket_summary(self, ticket: Ticket) -> dict:
        return {
            "id": ticket.id,
            "title": ticket.title,
            "state": ticket.state.value,
            "category": ticket.category,
            "linked_to": ticket.linked_to,
            "messages": len(ticket.transcript),
            "group_id": self.group_assignments.get(ticket.id),
        }

    def ticket_detail(self, ticket_id: TicketId) -> dict | None:
        ticket = self.tickets.get(ticket_id)
        if ticket is None:
            return None
        detail = self.ticket_summary(ticket)
        detail["transcript"] = [
            {"author": m.author.value, "text": m.text, "timestamp": m.timestamp}
            for m in ticket.transcript
        ]
        detail["history"] = [
            {"state": state, "timestamp": ts}
            for state, ts in self.state_history.get(ticket_id, [])
        ]
        detail["issue"] = (
            {"text": ticket.issue.text, "product": ticket.issue.product}
            if ticket.issue
            else None
        )
        detail["group"] = self._group_view(ticket_id)
        return detail

    def _group_view(self, ticket_id: TicketId) -> dict | None:
        group_id = self.group_assignments.get(ticket_id)
        if group_id is None:
            return None
        with self.pool.lock:
            for record in self.pool.records.values():
                if record.group_id == group_id:
                    return self._record_view(record)
        return {"group_id": group_id, "representative": None, "members": [], "issue": None}

    def _record_view(self, record: EscalationRecord) -> dict:
        return {
            "group_id": record.group_id,
            "representative": record.ticket_id,
            "category": record.category,
            "issue": {"text": record.issue.text, "product": record.issue.product},
            "created_at": record.created_at,
            "group_size": record.group_size,
            "members": [record.ticket_id]
            + [member.ticket_id for member in record.linked],
            "linked": [
                {"ticket_id": member.ticket_id, "issue_text": member.issue.text}
                for member in record.linked
            ],
        }

    def escalation_views(self) -> list[dict]:
        with self.pool.lock:
            records = sorted(self.pool.records.values(), key=lambda r: r.ticket_id)
            return [self._record_view(record) for record in records]

    # -- persistence -----------------------------------------------------------

    def snapshot_state(self) -> dict:
        with self._lock:
            return {
                "version": SNAPSHOT_VERSION,
                "log_position": self._log_position,
                "counters": self.counters.to_json_obj(),
                "tickets": {
                    t.id: {
                        "title": t.title,
                        "state": t.state.value,
                        "category": t.category,
                        "linked_to": t.linked_to,
                        "issue": {"text": t.issue.text, "product": t.issue.product}
                        if t.issue
                        else None,
                        "transcript": [
                            [m.author.value, m.text, m.timestamp] for m in t.transcript
                        ],
                    }
                    for t in self.tickets.values()
                },
                "history": {
                    tid: [[state, ts] for state, ts in entries]
                    for tid, entries in self.state_history.items()
                },
                "predictions": {
                    tid: [category, thought]
                    for tid, (category, thought) in self.predictions.items()
                },
                "group_assignments": dict(self.group_assignments),
                "pool": {
                    "threshold": self.pool.threshold,
                    "records": {
                        record.ticket_id: {
                            "group_id": record.group_id,
                            "category": record.category,
                            "created_at": record.created_at,
                            "issue": {
                                "text": record.issue.text,
                                "product": record.issue.product,
                            },
                            "embedding": list(record.embedding.vector),
                            "linked": [
                                {
                                    "ticket_id": member.ticket_id,
                                    "issue": {
                                        "text": member.issue.text,
                                        "product": member.issue.product,
                                    },
                                }
                                for member in record.linked
                            ],
                        }
                        for record in self.pool.records.values()
                    },
                },
            }

    def snapshot_bytes(self) -> bytes:
        return json.dumps(
            self.snapshot_state(), sort_keys=True, ensure_ascii=False, separators=(",", ":")
        ).encode("utf-8")

    def write_snapshot(self, directory: str | Path | None = None) -> Path:
        directory = Path(directory) if directory is not None else self._data_dir
        if directory is None:
            raise ValueError("no data directory configured for snapshots")
        directory.mkdir(parents=True, exist_ok=True)
        target = directory / SNAPSHOT_NAME
        tmp = target.with_suffix(".tmp")
        tmp.write_bytes(self.snapshot_bytes())
        tmp.replace(target)
        return target

    def _load_state(self, state: dict) -> None:
        if state.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {state.get('version')!r}")
        self._log_position = state["log_position"]
        self.counters = Counters(**state["counters"])
        self.tickets = {}
        for tid in sorted(state["tickets"]):
            raw = state["tickets"][tid]
            issue = (
                IssueSummary(raw["issue"]["text"], raw["issue"]["product"])
                if raw["issue"]
                else None
            )
            self.tickets[tid] = Ticket(
                id=tid,
                title=raw["title"],
                transcript=[
                    Message(Author(author), text, ts) for author, text, ts in raw["transcript"]
                ],
                state=TicketState(raw["state"]),
                category=raw["category"],
                issue=issue,
                linked_to=raw["linked_to"],
            )
        self.state_history = {
            tid: [(state_name, ts) for state_name, ts in entries]
            for tid, entries in state["history"].items()
        }
        self.predictions = {
            tid: (category, thought)
            for tid, (category, thought) in state["predictions"].items()
        }
        self.group_assignments = dict(state["group_assignments"])
        self.pool = EscalationPool(threshold=state["pool"]["threshold"])
        for owner in sorted(state["pool"]["records"]):
            raw = state["pool"]["records"][owner]
            record = EscalationRecord(
                ticket_id=owner,
                issue=IssueSummary(raw["issue"]["text"], raw["issue"]["product"]),
                embedding=IssueEmbedding(tuple(raw["embedding"]), len(raw["embedding"])),
                category=raw["category"],
                created_at=raw["created_at"],
                linked=[
                    LinkedTicket(
                        member["ticket_id"],
                        IssueSummary(member["issue"]["text"], member["issue"]["product"]),
                    )
                    for member in raw["linked"]
                ],
                group_id=raw["group_id"],
            )
            self.pool.records[owner] = record

    @classmethod
    def restore(
        cls,
        config: EngineConfig | None = None,
        chat: ChatProvider | None = None,
        embedder: Embedder | None = None,
        *,
        data_dir: str | Path,
        alert_sinks: Iterable[Callable[[dict], Any]] = (),
        listeners: Iterable[Callable[[dict], None]] = (),
        snapshot_every: int | None = None,
    ) -> tuple["Engine", RestoreReport]:
        """Rebuild an engine from snapshot plus event-log tail.

        A corrupt or truncated line stops the tail replay at the last
        valid event; the report carries the count. Alert sinks and
        listeners stay quiet during replay.
        """
        directory = Path(data_dir)
        engine = cls(
            config,
            chat,
            embedder,
            data_dir=directory,
            alert_sinks=alert_sinks,
            listeners=listeners,
            snapshot_every=snapshot_every,
        )
        report = RestoreReport()
        snapshot_path = directory / SNAPSHOT_NAME
        if snapshot_path.exists():
            engine._load_state(json.loads(snapshot_path.read_text(encoding="utf-8")))
            report.snapshot_loaded = True
        log_path = directory / EVENT_LOG_NAME
        skip = engine._log_position
        engine._replaying = True
        try:
            if log_path.exists():
                with log_path.open(encoding="utf-8") as handle:
                    for line_no, line in enumerate(handle):
                        if line_no < skip:
                            continue
                        stripped = line.strip()
                        if not stripped:
                            continue
                        try:
                            event = IngestEvent.parse(json.loads(stripped))
                        except (json.JSONDecodeError, MalformedEvent):
                            report.corrupt_lines += 1
                            logger.warning(
                                "stopping restore at corrupt log line %d", line_no + 1
                            )
                            break
                        report.tail_lines += 1
                        engine._log_position += 1
                        try:
                            engine._apply(event)
                            report.applied += 1
                        except IngestError:
                            report.rejected += 1
        finally:
            engine._replaying = False
        return engine, report

    def fold(self, events: Iterable[IngestEvent]) -> tuple[int, int]:
        """Apply a batch of events, skipping rejected ones; returns counts."""
        applied = rejected = 0
        with self._lock:
            for event in events:
                self._log_position += 1
                try:
                    self._apply(event)
                    applied += 1
                except IngestError:
                    rejected += 1
        return applied, rejected

    def close(self) -> None:
        if self._log_handle is not None:
            self._log_handle.close()
            self._log_handle = None
