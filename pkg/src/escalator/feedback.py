"""Analyst feedback ledger and ground-truth label derivation.

The ledger is append-only; conflicting signals are resolved at derivation
time. Explicit votes always outrank the indirect join signal, and among
explicit votes the latest appended one wins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping

from .tickets import OTHERS, TicketId


class FeedbackKind(str, Enum):
    UPVOTE = "Upvote"
    DOWNVOTE = "Downvote"
    JOINED = "JoinedViaLink"


class LabelSource(str, Enum):
    EXPLICIT_VOTE = "ExplicitVote"
    JOIN_SIGNAL = "JoinSignal"


class UnknownTicket(Exception):
    """Feedback for a ticket that was never escalated or linked."""


@dataclass(frozen=True)
class FeedbackEvent:
    ticket_id: TicketId
    kind: FeedbackKind
    corrected_category: str | None = None
    timestamp: int = 0

    def __post_init__(self) -> None:
        if self.corrected_category is not None and self.kind is not FeedbackKind.DOWNVOTE:
            raise ValueError("corrected_category is only valid on a downvote")

    def to_json_obj(self) -> dict:
        return {
            "ticket_id": self.ticket_id,
            "kind": self.kind.value,
            "corrected_category": self.corrected_category,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "FeedbackEvent":
        return cls(
            ticket_id=obj["ticket_id"],
            kind=FeedbackKind(obj["kind"]),
            corrected_category=obj.get("corrected_category"),
            timestamp=int(obj.get("timestamp") or 0),
        )


@dataclass(frozen=True)
class DerivedLabel:
    ticket_id: TicketId
    label_category: str
    source: LabelSource
    predicted_category: str
    predicted_thought: str


class FeedbackLedger:
    """Append-only feedback log, optionally persisted as JSON lines."""

    def __init__(
        self,
        path: str | Path | None = None,
        eligible: Callable[[TicketId], bool] | None = None,
    ):
        self._path = Path(path) if path is not None else None
        self._eligible = eligible
        self._events: list[FeedbackEvent] = []
        if self._path is not None and self._path.exists():
            with self._path.open(encoding="utf-8") as handle:
                for line in handle:
                    line = line.strip()
                    if line:
                        self._events.append(FeedbackEvent.from_json_obj(json.loads(line)))

    def __len__(self) -> int:
        return len(self._events)

    @property
    def events(self) -> list[FeedbackEvent]:
        return list(self._events)

    def record(self, event: FeedbackEvent) -> int:
        """Append one event and return its ledger position.

        Duplicates are allowed; derivation resolves conflicts. Raises
        UnknownTicket when the ticket never reached the escalation path.
        """
        if self._eligible is not None and not self._eligible(event.ticket_id):
            raise UnknownTicket(event.ticket_id)
        self._events.append(event)
        if self._path is not None:
            with self._path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(event.to_json_obj(), sort_keys=True) + "\n")
        return len(self._events) - 1


def derive_labels(
    ledger: FeedbackLedger | Iterable[FeedbackEvent],
    predictions: Mapping[TicketId, tuple[str, str]],
) -> list[DerivedLabel]:
    """Collapse the ledger into one label per ticket.

    ``predictions`` maps ticket id to (predicted category, predicted
    thought). An upvote confirms the prediction; a downvote relabels to the
    corrected category, or to "Others" when no correction was given; a
    join signal alone counts as indirect confirmation. Pure function of
    its inputs.
    """
    events = ledger.events if isinstance(ledger, FeedbackLedger) else list(ledger)
    last_vote: dict[TicketId, FeedbackEvent] = {}
    joined: set[TicketId] = set()
    for event in events:
        if event.kind is FeedbackKind.JOINED:
            joined.add(event.ticket_id)
        else:
            last_vote[event.ticket_id] = event

    labels: list[DerivedLabel] = []
    for ticket_id in sorted(set(last_vote) | joined):
        if ticket_id not in predictions:
            raise KeyError(f"no stored prediction for ticket {ticket_id}")
        predicted_category, predicted_thought = predictions[ticket_id]
        vote = last_vote.get(ticket_id)
        if vote is not None:
            if vote.kind is FeedbackKind.UPVOTE:
                label = predicted_category
            else:
                label = vote.corrected_category or OTHERS
            source = LabelSource.EXPLICIT_VOTE
        else:
            label = predicted_category
            source = LabelSource.JOIN_SIGNAL
        labels.append(
            DerivedLabel(
                ticket_id=ticket_id,
                label_category=label,
                source=source,
                predicted_category=predicted_category,
                predicted_thought=predicted_thought,
            )
        )
    return labels
