"""Lifecycle state machine and close-time pool bookkeeping."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from escalator.dedup import (
    EscalationPool,
    EscalationRecord,
    IssueSummary,
    LinkedTicket,
    on_close,
)
from escalator.tickets import (
    IllegalTransition,
    LifecycleEvent,
    LifecycleEventKind,
    Ticket,
    TicketState,
    create,
    transition,
)

ALL_STATES = list(TicketState)
ALL_KINDS = list(LifecycleEventKind)

# The reconstructed lifecycle graph: close is legal from every live state,
# analysis only cycles through Active/Analyzing/Pending, and Escalated /
# Linked absorb everything except the close.
LEGAL: dict[tuple[TicketState, LifecycleEventKind], TicketState] = {
    (TicketState.ACTIVE, LifecycleEventKind.NEW_DIALOGUE): TicketState.ANALYZING,
    (TicketState.ANALYZING, LifecycleEventKind.CLASSIFIED_OTHERS): TicketState.ACTIVE,
    (TicketState.ANALYZING, LifecycleEventKind.CLASSIFIED_CATEGORY): TicketState.PENDING,
    (TicketState.PENDING, LifecycleEventKind.NO_SIMILAR_FOUND): TicketState.ESCALATED,
    (TicketState.PENDING, LifecycleEventKind.SIMILAR_FOUND): TicketState.LINKED,
    (TicketState.ACTIVE, LifecycleEventKind.CUSTOMER_CLOSED): TicketState.CLOSED,
    (TicketState.ANALYZING, LifecycleEventKind.CUSTOMER_CLOSED): TicketState.CLOSED,
    (TicketState.PENDING, LifecycleEventKind.CUSTOMER_CLOSED): TicketState.CLOSED,
    (TicketState.ESCALATED, LifecycleEventKind.CUSTOMER_CLOSED): TicketState.CLOSED,
    (TicketState.LINKED, LifecycleEventKind.CUSTOMER_CLOSED): TicketState.CLOSED,
}


def ticket_in(state: TicketState, ticket_id: str = "t1") -> Ticket:
    ticket = Ticket(id=ticket_id, title="x", state=state)
    if state in (TicketState.PENDING, TicketState.ESCALATED, TicketState.LINKED):
        ticket.category = "System Failure"
    if state is TicketState.LINKED:
        ticket.linked_to = "rep"
    return ticket


def event_of(kind: LifecycleEventKind) -> LifecycleEvent:
    if kind is LifecycleEventKind.CLASSIFIED_CATEGORY:
        return LifecycleEvent.classified_category("System Failure")
    if kind is LifecycleEventKind.SIMILAR_FOUND:
        return LifecycleEvent.similar_found("rep")
    return LifecycleEvent(kind)


def test_accepted_creates_active_tickets():
    assert create("t1", "hello").state is TicketState.ACTIVE


def test_full_grid_matches_lifecycle_graph():
    for state in ALL_STATES:
        for kind in ALL_KINDS:
            ticket = ticket_in(state)
            expected = LEGAL.get((state, kind))
            if expected is None:
                with pytest.raises(IllegalTransition):
                    transition(ticket, event_of(kind))
            else:
                assert transition(ticket, event_of(kind)).state is expected


def test_new_dialogue_starts_analysis():
    assert transition(ticket_in(TicketState.ACTIVE), LifecycleEvent.new_dialogue()).state is TicketState.ANALYZING


def test_classified_others_reverts_to_active():
    after = transition(ticket_in(TicketState.ANALYZING), LifecycleEvent.classified_others())
    assert after.state is TicketState.ACTIVE
    assert after.category is None


def test_escalated_absorbs_new_dialogue():
    with pytest.raises(IllegalTransition):
        transition(ticket_in(TicketState.ESCALATED), LifecycleEvent.new_dialogue())


def test_close_clears_linkage_fields():
    after = transition(ticket_in(TicketState.LINKED), LifecycleEvent.customer_closed())
    assert after.state is TicketState.CLOSED
    assert after.category is None
    assert after.linked_to is None


def test_self_link_rejected():
    with pytest.raises(ValueError):
        transition(ticket_in(TicketState.PENDING, "t9"), LifecycleEvent.similar_found("t9"))


@given(st.lists(st.sampled_from(ALL_KINDS), max_size=30))
def test_random_event_walks_preserve_invariants(kinds):
    ticket = create("t1", "x")
    for kind in kinds:
        try:
            ticket = transition(ticket, event_of(kind))
        except IllegalTransition:
            continue
        # linked_to set exactly when Linked; category set exactly in the
        # categorized states.
        assert (ticket.linked_to is not None) == (ticket.state is TicketState.LINKED)
        categorized = ticket.state in (
            TicketState.PENDING,
            TicketState.ESCALATED,
            TicketState.LINKED,
        )
        assert (ticket.category is not None) == categorized


# -- close-time pool bookkeeping ------------------------------------------


def _group(embedder, n_links: int):
    """An escalated rep plus n linked tickets sharing one record."""
    issue = IssueSummary("api outage tokens", None)
    rep = Ticket(id="rep", title="x", state=TicketState.ESCALATED, category="System Failure", issue=issue)
    record = EscalationRecord(
        ticket_id="rep",
        issue=issue,
        embedding=embedder.embed(issue.text),
        category="System Failure",
        created_at=100,
    )
    tickets = {"rep": rep}
    for i in range(n_links):
        member_issue = IssueSummary(f"api outage tokens variant{i}", None)
        member = Ticket(
            id=f"m{i}",
            title="x",
            state=TicketState.LINKED,
            category="System Failure",
            linked_to="rep",
            issue=member_issue,
        )
        tickets[member.id] = member
        record.linked.append(LinkedTicket(member.id, member_issue))
    pool = EscalationPool(threshold=0.88)
    pool.records["rep"] = record
    return pool, tickets


def test_close_lonely_representative_retires_group(embedder):
    pool, tickets = _group(embedder, 0)
    delta = on_close(tickets["rep"], pool, tickets)
    assert delta.retired_group == "rep"
    assert len(pool) == 0


def test_close_representative_promotes_oldest_open_link(embedder):
    # Simulated by hand: rep + m0 + m1; closing rep must hand the group to
    # m0 (the oldest open link) with m1 re-pointed at it.
    pool, tickets = _group(embedder, 2)
    delta = on_close(tickets["rep"], pool, tickets)
    assert delta.promoted == "m0"
    assert delta.relinked == ("m1",)
    assert set(pool.records) == {"m0"}
    successor = pool.records["m0"]
    assert successor.group_id == "rep"
    assert successor.issue.text == "api outage tokens"
    assert [m.ticket_id for m in successor.linked] == ["m1"]
    assert tickets["m0"].state is TicketState.ESCALATED
    assert tickets["m0"].linked_to is None
    assert tickets["m1"].linked_to == "m0"


def test_close_linked_ticket_only_removes_membership(embedder):
    pool, tickets = _group(embedder, 2)
    delta = on_close(tickets["m0"], pool, tickets)
    assert delta.unlinked_from == "rep"
    assert [m.ticket_id for m in pool.records["rep"].linked] == ["m1"]
    assert len(pool) == 1
