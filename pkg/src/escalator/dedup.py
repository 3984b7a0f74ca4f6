"""Escalation deduplication: issue summaries, the embedding pool, similarity
linking, and group-issue rewriting.

A pending ticket's summarized issue is embedded and compared against every
open escalation. Strictly above the similarity threshold it links to the
best match (and the group's shared issue is rewritten to the commonality);
at or below it a new escalation record is created. The check-and-insert is
one critical section, so concurrent resolutions cannot double-escalate the
same issue.
"""

from __future__ import annotations

import csv
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Mapping

from . import prompts
from .embedding import DimensionMismatch, Embedder, IssueEmbedding
from .providers import (
    ChatProvider,
    MalformedOutput,
    ProviderError,
    extract_json_object,
)
from .tickets import Ticket, TicketId, TicketState

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.88


@dataclass(frozen=True)
class IssueSummary:
    text: str
    product: str | None = None

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("issue text must be non-empty")


@dataclass(frozen=True)
class LinkedTicket:
    ticket_id: TicketId
    issue: IssueSummary


@dataclass
class EscalationRecord:
    """One open, unique escalated issue and the tickets linked to it."""

    ticket_id: TicketId
    issue: IssueSummary
    embedding: IssueEmbedding
    category: str
    created_at: int
    linked: list[LinkedTicket] = field(default_factory=list)
    # Stable group identity: the founding ticket id, preserved when the
    # representative closes and a linked ticket is promoted.
    group_id: TicketId = ""

    def __post_init__(self) -> None:
        if not self.group_id:
            self.group_id = self.ticket_id

    @property
    def group_size(self) -> int:
        return 1 + len(self.linked)


class EscalationPool:
    """Open escalation records keyed by their representative ticket."""

    def __init__(self, threshold: float = DEFAULT_THRESHOLD):
        if not 0.0 < threshold <= 1.0:
            raise ValueError("threshold must be in (0, 1]")
        self.threshold = threshold
        self.records: dict[TicketId, EscalationRecord] = {}
        self.lock = threading.RLock()

    def __len__(self) -> int:
        return len(self.records)

    def _insert(self, record: EscalationRecord) -> None:
        best = _best_match(self.records.values(), record.embedding)
        if best is not None and best[1] > self.threshold:
            raise ValueError(
                f"record {record.ticket_id} duplicates {best[0].ticket_id} "
                f"(similarity {best[1]:.4f} > {self.threshold})"
            )
        self.records[record.ticket_id] = record


def cosine_similarity(a: IssueEmbedding, b: IssueEmbedding) -> float:
    """Cosine of two embeddings; raises DimensionMismatch on shape conflict."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"dims differ: {a.dim} vs {b.dim}")
    dot = sum(x * y for x, y in zip(a.vector, b.vector))
    norm_a = math.sqrt(sum(x * x for x in a.vector))
    norm_b = math.sqrt(sum(y * y for y in b.vector))
    return dot / (norm_a * norm_b)


def _best_match(
    records, query: IssueEmbedding
) -> tuple[EscalationRecord, float] | None:
    best: tuple[EscalationRecord, float] | None = None
    for record in records:
        similarity = cosine_similarity(query, record.embedding)
        if best is None or similarity > best[1]:
            best = (record, similarity)
        elif similarity == best[1]:
            # Exact ties: earliest created_at wins, then lexicographic id.
            incumbent = best[0]
            if (record.created_at, record.ticket_id) < (incumbent.created_at, incumbent.ticket_id):
                best = (record, similarity)
    return best


def find_most_similar(
    pool: EscalationPool, query: IssueEmbedding
) -> tuple[EscalationRecord, float] | None:
    """The pool record most similar to ``query``; None when the pool is empty."""
    with pool.lock:
        return _best_match(pool.records.values(), query)


@dataclass(frozen=True)
class Decision:
    """Outcome of resolving one pending ticket against the pool."""

    record: EscalationRecord
    linked: bool
    similarity: float | None  # match similarity when linked
    best_similarity: float | None  # max similarity observed (None on empty pool)

    @property
    def escalated(self) -> bool:
        return not self.linked


def summarize_issue(
    provider: ChatProvider, ticket: Ticket, max_messages: int = 30
) -> IssueSummary:
    """Summarize the issue a pending ticket reports.

    Falls back to the ticket title on malformed or failing provider
    output; summarization must never block an escalation.
    """
    if ticket.state is not TicketState.PENDING:
        raise ValueError("issues are summarized while a ticket is Pending")
    messages = prompts.summary_messages(ticket, max_messages)
    try:
        raw = provider.complete(messages, temperature=0.0)
        obj = extract_json_object(raw)
        text = obj.get("issue")
        if not isinstance(text, str) or not text.strip():
            raise MalformedOutput("summary carried no issue text")
        product = obj.get("product")
        if not isinstance(product, str) or not product.strip():
            product = None
        return IssueSummary(text=text.strip(), product=product)
    except ProviderError as exc:
        logger.warning("issue summary for %s failed (%s); using title", ticket.id, exc)
        return IssueSummary(text=ticket.title or ticket.id, product=None)


def rewrite_issue(
    provider: ChatProvider, embedder: Embedder, record: EscalationRecord
) -> EscalationRecord:
    """Rewrite the record's issue to the commonality of its group.

    Invoked after every new link. The embedding is recomputed from the
    rewritten text so future matches see the current description. Failures
    leave the record unchanged; rewriting is best-effort.
    """
    if not record.linked:
        raise ValueError("rewrite requires at least one linked ticket")
    messages = prompts.rewrite_messages(
        record.issue.text, [member.issue.text for member in record.linked]
    )
    try:
        raw = provider.complete(messages, temperature=0.0)
        obj = extract_json_object(raw)
        text = obj.get("issue")
        if not isinstance(text, str) or not text.strip():
            raise MalformedOutput("rewrite carried no issue text")
        record.issue = IssueSummary(text=text.strip(), product=record.issue.product)
        record.embedding = embedder.embed(record.issue.text)
    except ProviderError as exc:
        logger.warning("rewrite for %s failed (%s); keeping previous issue", record.ticket_id, exc)
    return record


def resolve_pending(
    pool: EscalationPool,
    ticket: Ticket,
    issue: IssueSummary,
    embedding: IssueEmbedding,
    *,
    provider: ChatProvider,
    embedder: Embedder,
    timestamp: int,
    rewrite: bool = True,
) -> Decision:
    """Link a pending ticket to its duplicate or open a new escalation.

    Similarity strictly above the pool threshold links; otherwise a fresh
    record is inserted. Callers apply the matching lifecycle event
    (SimilarFound / NoSimilarFound) and, on escalation, emit the alert.
    """
    if ticket.state is not TicketState.PENDING:
        raise ValueError("only pending tickets are resolved against the pool")
    if ticket.category is None:
        raise ValueError("pending tickets carry a category")
    with pool.lock:
        best = _best_match(pool.records.values(), embedding)
        if best is not None and best[1] > pool.threshold:
            record, similarity = best
            record.linked.append(LinkedTicket(ticket_id=ticket.id, issue=issue))
            if rewrite:
                rewrite_issue(provider, embedder, record)
            return Decision(
                record=record, linked=True, similarity=similarity, best_similarity=similarity
            )
        record = EscalationRecord(
            ticket_id=ticket.id,
            issue=issue,
            embedding=embedding,
            category=ticket.category,
            created_at=timestamp,
        )
        pool._insert(record)
        return Decision(
            record=record,
            linked=False,
            similarity=None,
            best_similarity=best[1] if best is not None else None,
        )


@dataclass(frozen=True)
class PoolDelta:
    """What closing one ticket did to the pool."""

    closed: TicketId
    retired_group: TicketId | None = None
    promoted: TicketId | None = None
    unlinked_from: TicketId | None = None
    relinked: tuple[TicketId, ...] = ()


def on_close(
    ticket: Ticket, pool: EscalationPool, tickets: Mapping[TicketId, Ticket]
) -> PoolDelta:
    """Remove a closing ticket from dedup consideration.

    Called while the ticket still holds its pre-close state. Closing a
    linked ticket drops its membership. Closing a representative promotes
    the oldest still-open linked ticket (link order) to carry the group's
    current issue and embedding; with no open members left the group is
    retired.
    """
    with pool.lock:
        if ticket.state is TicketState.LINKED:
            record = pool.records.get(ticket.linked_to or "")
            if record is not None:
                record.linked = [m for m in record.linked if m.ticket_id != ticket.id]
                return PoolDelta(closed=ticket.id, unlinked_from=record.ticket_id)
            return PoolDelta(closed=ticket.id)

        if ticket.state is TicketState.ESCALATED:
            record = pool.records.pop(ticket.id, None)
            if record is None:
                return PoolDelta(closed=ticket.id)
            open_members = [
                m
                for m in record.linked
                if tickets.get(m.ticket_id) is not None
                and tickets[m.ticket_id].state is TicketState.LINKED
            ]
            if not open_members:
                return PoolDelta(closed=ticket.id, retired_group=record.group_id)
            heir, *rest = open_members
            successor = EscalationRecord(
                ticket_id=heir.ticket_id,
                issue=record.issue,
                embedding=record.embedding,
                category=record.category,
                created_at=record.created_at,
                linked=rest,
                group_id=record.group_id,
            )
            pool.records[heir.ticket_id] = successor
            heir_ticket = tickets[heir.ticket_id]
            heir_ticket.state = TicketState.ESCALATED
            heir_ticket.linked_to = None
            heir_ticket.issue = record.issue
            for member in rest:
                tickets[member.ticket_id].linked_to = heir.ticket_id
            return PoolDelta(
                closed=ticket.id,
                promoted=heir.ticket_id,
                relinked=tuple(m.ticket_id for m in rest),
            )

        return PoolDelta(closed=ticket.id)


def export_embeddings_csv(pool: EscalationPool, embedder: Embedder, path) -> int:
    """Write (ticket_id, group_id, dim values) rows for offline visualization.

    Linked members are re-embedded from their stored issue summaries.
    Returns the number of rows written.
    """
    with pool.lock:
        records = sorted(pool.records.values(), key=lambda r: r.ticket_id)
        rows = []
        for record in records:
            rows.append((record.ticket_id, record.group_id, record.embedding.vector))
            for member in record.linked:
                member_embedding = embedder.embed(member.issue.text)
                rows.append((member.ticket_id, record.group_id, member_embedding.vector))
    dim = embedder.dim
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["ticket_id", "group_id"] + [f"d{i}" for i in range(dim)])
        for ticket_id, group_id, vector in rows:
            writer.writerow([ticket_id, group_id] + [repr(v) for v in vector])
    return len(rows)
