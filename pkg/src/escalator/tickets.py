"""Ticket domain model and the lifecycle state machine.

A ticket enters the system Active, moves to Analyzing whenever fresh
dialogue triggers a classification round, and either reverts to Active
(no escalation topic found) or goes Pending for duplicate checking.
Pending resolves to Escalated (new unique issue) or Linked (duplicate of
an existing escalation). Closing is terminal from any live state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .dedup import IssueSummary

TicketId = str

#: Reserved category for conversations that do not require escalation.
OTHERS = "Others"


class Author(str, Enum):
    CUSTOMER = "customer"
    ANALYST = "analyst"


class TicketState(str, Enum):
    ACTIVE = "Active"
    ANALYZING = "Analyzing"
    PENDING = "Pending"
    ESCALATED = "Escalated"
    LINKED = "Linked"
    CLOSED = "Closed"


class LifecycleEventKind(str, Enum):
    ACCEPTED = "Accepted"
    NEW_DIALOGUE = "NewDialogue"
    CLASSIFIED_OTHERS = "ClassifiedOthers"
    CLASSIFIED_CATEGORY = "ClassifiedCategory"
    NO_SIMILAR_FOUND = "NoSimilarFound"
    SIMILAR_FOUND = "SimilarFound"
    CUSTOMER_CLOSED = "CustomerClosed"


@dataclass(frozen=True)
class LifecycleEvent:
    """A lifecycle trigger; ``category``/``target`` carry event payloads."""

    kind: LifecycleEventKind
    category: str | None = None
    target: TicketId | None = None

    @classmethod
    def accepted(cls) -> "LifecycleEvent":
        return cls(LifecycleEventKind.ACCEPTED)

    @classmethod
    def new_dialogue(cls) -> "LifecycleEvent":
        return cls(LifecycleEventKind.NEW_DIALOGUE)

    @classmethod
    def classified_others(cls) -> "LifecycleEvent":
        return cls(LifecycleEventKind.CLASSIFIED_OTHERS)

    @classmethod
    def classified_category(cls, category: str) -> "LifecycleEvent":
        return cls(LifecycleEventKind.CLASSIFIED_CATEGORY, category=category)

    @classmethod
    def no_similar_found(cls) -> "LifecycleEvent":
        return cls(LifecycleEventKind.NO_SIMILAR_FOUND)

    @classmethod
    def similar_found(cls, target: TicketId) -> "LifecycleEvent":
        return cls(LifecycleEventKind.SIMILAR_FOUND, target=target)

    @classmethod
    def customer_closed(cls) -> "LifecycleEvent":
        return cls(LifecycleEventKind.CUSTOMER_CLOSED)


class IllegalTransition(Exception):
    """The (state, event) pair is not part of the lifecycle graph."""

    def __init__(self, state: TicketState, kind: LifecycleEventKind):
        super().__init__(f"no transition for {kind.value} in state {state.value}")
        self.state = state
        self.kind = kind


@dataclass(frozen=True)
class Message:
    author: Author
    text: str
    timestamp: int  # milliseconds since epoch

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("message text must be non-empty")


@dataclass
class TicketCategory:
    """One configured escalation topic plus optional few-shot material."""

    name: str
    description: str
    few_shot_examples: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class Ticket:
    id: TicketId
    title: str
    transcript: list[Message] = field(default_factory=list)
    state: TicketState = TicketState.ACTIVE
    category: str | None = None
    issue: "IssueSummary | None" = None
    linked_to: TicketId | None = None


def create(ticket_id: TicketId, title: str) -> Ticket:
    """Accept a new ticket; accepted tickets start out Active."""
    if not ticket_id:
        raise ValueError("ticket id must be non-empty")
    return Ticket(id=ticket_id, title=title)


# Legal edges other than the close edge, which applies to every live state.
_EDGES: dict[tuple[TicketState, LifecycleEventKind], TicketState] = {
    (TicketState.ACTIVE, LifecycleEventKind.NEW_DIALOGUE): TicketState.ANALYZING,
    (TicketState.ANALYZING, LifecycleEventKind.CLASSIFIED_OTHERS): TicketState.ACTIVE,
    (TicketState.ANALYZING, LifecycleEventKind.CLASSIFIED_CATEGORY): TicketState.PENDING,
    (TicketState.PENDING, LifecycleEventKind.NO_SIMILAR_FOUND): TicketState.ESCALATED,
    (TicketState.PENDING, LifecycleEventKind.SIMILAR_FOUND): TicketState.LINKED,
}


def transition(ticket: Ticket, event: LifecycleEvent) -> Ticket:
    """Apply one lifecycle event, returning the updated ticket.

    Raises IllegalTransition for any (state, event) pair outside the
    graph; escalated and linked tickets in particular do not re-enter
    analysis, and Closed is terminal.
    """
    kind = event.kind
    if kind is LifecycleEventKind.CUSTOMER_CLOSED:
        if ticket.state is TicketState.CLOSED:
            raise IllegalTransition(ticket.state, kind)
        return replace(ticket, state=TicketState.CLOSED, category=None, linked_to=None)

    target_state = _EDGES.get((ticket.state, kind))
    if target_state is None:
        raise IllegalTransition(ticket.state, kind)

    if kind is LifecycleEventKind.CLASSIFIED_CATEGORY:
        if not event.category or event.category == OTHERS:
            raise ValueError("ClassifiedCategory requires a non-reserved category")
        return replace(ticket, state=target_state, category=event.category)
    if kind is LifecycleEventKind.CLASSIFIED_OTHERS:
        return replace(ticket, state=target_state, category=None)
    if kind is LifecycleEventKind.SIMILAR_FOUND:
        if not event.target:
            raise ValueError("SimilarFound requires a target ticket id")
        if event.target == ticket.id:
            raise ValueError("a ticket cannot link to itself")
        return replace(ticket, state=target_state, linked_to=event.target)
    return replace(ticket, state=target_state)
