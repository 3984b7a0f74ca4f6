"""Chat prompt builders for classification, issue summary, rewriting, and
thought revision.

The section markers below double as the dispatch signals the deterministic
mock provider keys on, so builders and mock stay in lockstep.
"""

from __future__ import annotations

import json
from typing import Iterable, Protocol, Sequence

from .tickets import Message, Ticket, TicketCategory

TRANSCRIPT_HEADER = "## Conversation"
EXAMPLES_HEADER = "## Labeled examples"
ISSUES_HEADER = "## Issues"
OMITTED_MARKER = "[... earlier messages omitted: {n}]"

DEFAULT_ROLE_PREAMBLE = (
    "You are a meticulous support expert for a large cloud platform. You "
    "review live support conversations and decide whether they must be "
    "escalated to a specialized responder."
)
DEFAULT_COT_INSTRUCTION = (
    "Reason step by step before deciding: restate the customer's problem, "
    "weigh its severity, then pick the single best category."
)
CLASSIFY_SCHEMA_INSTRUCTION = (
    'Respond with a single JSON object: {"thought": "<your reasoning>", '
    '"category": "<one category name>"}. Output nothing else.'
)
REPAIR_INSTRUCTION = (
    'Your previous answer could not be parsed. Reply with only the JSON '
    'object {"thought": "...", "category": "..."} using one of the listed '
    "category names."
)
SUMMARY_SYSTEM = (
    "You condense a support conversation into the core issue it reports, for "
    "duplicate detection. Name the implicated cloud product when you can. "
    'Respond with a single JSON object: {"issue": "<concise issue '
    'description>", "product": "<product name or null>"}. Output nothing else.'
)
REWRITE_SYSTEM = (
    "You maintain the shared issue description for a group of duplicate "
    "escalations. Rewrite the description so it highlights what all the "
    'listed issues have in common. Respond with a single JSON object: '
    '{"issue": "<rewritten shared issue>"}. Output nothing else.'
)
REVISION_SYSTEM = (
    "You write the reasoning that leads to a known correct classification "
    "of a support conversation. Respond with a single JSON object: "
    '{"thought": "<reasoning that supports the category>"}. Output nothing else.'
)


class ExampleLike(Protocol):
    transcript: str
    thought: str
    category: str


def render_transcript(messages: Sequence[Message], max_messages: int) -> str:
    """Messages oldest-first, dropping the oldest beyond ``max_messages``."""
    dropped = max(0, len(messages) - max_messages)
    lines = []
    if dropped:
        lines.append(OMITTED_MARKER.format(n=dropped))
    lines.extend(f"{m.author.value}: {m.text}" for m in messages[dropped:])
    return "\n".join(lines)


def render_categories(categories: Iterable[TicketCategory]) -> str:
    return "\n".join(f"- {c.name}: {c.description}" for c in categories)


def classification_messages(
    role_preamble: str,
    cot_instruction: str,
    categories: Sequence[TicketCategory],
    ticket: Ticket,
    examples: Sequence[ExampleLike],
    max_messages: int,
) -> list[dict[str, str]]:
    system = "\n\n".join(
        [
            role_preamble,
            "## Escalation categories\n" + render_categories(categories),
            cot_instruction,
            CLASSIFY_SCHEMA_INSTRUCTION,
        ]
    )
    parts: list[str] = []
    if examples:
        blocks = [EXAMPLES_HEADER]
        for i, ex in enumerate(examples, start=1):
            answer = json.dumps({"thought": ex.thought, "category": ex.category})
            blocks.append(f"### Example {i}\nConversation:\n{ex.transcript}\nAnswer: {answer}")
        parts.append("\n\n".join(blocks))
    parts.append(
        TRANSCRIPT_HEADER
        + "\n"
        + render_transcript(ticket.transcript, max_messages)
        + "\n\nClassify the conversation above."
    )
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": "\n\n".join(parts)},
    ]


def repair_messages(previous: Sequence[dict[str, str]], raw: str) -> list[dict[str, str]]:
    return list(previous) + [
        {"role": "assistant", "content": raw},
        {"role": "user", "content": REPAIR_INSTRUCTION},
    ]


def summary_messages(ticket: Ticket, max_messages: int) -> list[dict[str, str]]:
    user = (
        TRANSCRIPT_HEADER
        + "\n"
        + render_transcript(ticket.transcript, max_messages)
        + "\n\nSummarize the issue reported above."
    )
    return [
        {"role": "system", "content": SUMMARY_SYSTEM},
        {"role": "user", "content": user},
    ]


def rewrite_messages(current_issue: str, member_issues: Sequence[str]) -> list[dict[str, str]]:
    lines = [ISSUES_HEADER, f"- {current_issue}"]
    lines.extend(f"- {issue}" for issue in member_issues)
    lines.append("")
    lines.append("Rewrite the shared issue description.")
    return [
        {"role": "system", "content": REWRITE_SYSTEM},
        {"role": "user", "content": "\n".join(lines)},
    ]


def revision_messages(
    ticket: Ticket, category: str, variant: int, max_messages: int
) -> list[dict[str, str]]:
    """Ask for reasoning conditioned on the known-correct category.

    ``variant`` numbers the instruction so a temperature-zero provider
    still yields distinct reasoning per sampling iteration.
    """
    user = (
        TRANSCRIPT_HEADER
        + "\n"
        + render_transcript(ticket.transcript, max_messages)
        + f"\n\nCorrect category: {category}"
        + f"\nWrite reasoning variant {variant} that justifies this classification."
    )
    return [
        {"role": "system", "content": REVISION_SYSTEM},
        {"role": "user", "content": user},
    ]
