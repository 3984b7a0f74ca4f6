"""Conversation classification: prompt assembly, provider call, result parsing.

Classification is fail-safe: a completion that cannot be parsed into the
structured record gets one repair attempt, and a second failure lands the
ticket in "Others" so garbage output never causes an escalation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

from . import prompts
from .embedding import Embedder, IssueEmbedding
from .providers import ChatProvider, MalformedOutput, extract_json_object
from .tickets import OTHERS, Ticket, TicketCategory

logger = logging.getLogger(__name__)

#: Field names of the structured classification record. Fixed by contract.
OUTPUT_FIELDS = ("thought", "category")


@dataclass(frozen=True)
class IclExample:
    transcript: str
    thought: str
    category: str


@dataclass
class PromptSpec:
    """Everything needed to render a classification prompt."""

    categories: list[TicketCategory]
    role_preamble: str = prompts.DEFAULT_ROLE_PREAMBLE
    cot_instruction: str = prompts.DEFAULT_COT_INSTRUCTION
    icl_examples: list[IclExample] = field(default_factory=list)
    max_transcript_messages: int = 30
    output_fields: tuple[str, str] = OUTPUT_FIELDS

    def __post_init__(self) -> None:
        if self.output_fields != OUTPUT_FIELDS:
            raise ValueError(f"output fields are fixed to {OUTPUT_FIELDS}")
        names = self.category_names()
        for example in self.icl_examples:
            if example.category not in names:
                raise ValueError(f"ICL example category {example.category!r} is not configured")

    def category_names(self) -> set[str]:
        return {c.name for c in self.categories} | {OTHERS}


@dataclass(frozen=True)
class ClassificationResult:
    thought: str
    category: str
    raw: str


def build_prompt(
    spec: PromptSpec,
    ticket: Ticket,
    retrieved_examples: Sequence[prompts.ExampleLike] = (),
) -> list[dict[str, str]]:
    """Render the classification chat messages for one ticket.

    Statically configured examples come first, then retrieved ones, both
    ahead of the target transcript. Pure function of its arguments.
    """
    if not ticket.transcript:
        raise ValueError("cannot classify a ticket with an empty transcript")
    examples = list(spec.icl_examples) + list(retrieved_examples)
    return prompts.classification_messages(
        spec.role_preamble,
        spec.cot_instruction,
        spec.categories,
        ticket,
        examples,
        spec.max_transcript_messages,
    )


def parse_result(raw: str, allowed: set[str]) -> tuple[str, str]:
    """Extract (thought, category) from a completion or raise MalformedOutput."""
    obj = extract_json_object(raw)
    thought = obj.get("thought")
    category = obj.get("category")
    if not isinstance(thought, str) or not isinstance(category, str):
        raise MalformedOutput("completion is missing thought/category strings")
    if category not in allowed:
        raise MalformedOutput(f"category {category!r} is not configured")
    return thought, category


def classify(
    provider: ChatProvider,
    spec: PromptSpec,
    ticket: Ticket,
    retrieved_examples: Sequence[prompts.ExampleLike] = (),
) -> ClassificationResult:
    """Classify one ticket, repairing malformed output once before failing safe."""
    allowed = spec.category_names()
    messages = build_prompt(spec, ticket, retrieved_examples)
    raw = provider.complete(messages, temperature=0.0)
    try:
        thought, category = parse_result(raw, allowed)
        return ClassificationResult(thought=thought, category=category, raw=raw)
    except MalformedOutput as first_error:
        logger.warning("malformed classification for %s (%s); repairing", ticket.id, first_error)
    repair = prompts.repair_messages(messages, raw)
    raw = provider.complete(repair, temperature=0.0)
    try:
        thought, category = parse_result(raw, allowed)
        return ClassificationResult(thought=thought, category=category, raw=raw)
    except MalformedOutput as second_error:
        logger.warning(
            "repair attempt for %s still malformed (%s); classifying as %s",
            ticket.id,
            second_error,
            OTHERS,
        )
        return ClassificationResult(thought="", category=OTHERS, raw=raw)


@dataclass(frozen=True)
class StoredExample:
    example_id: str
    transcript: str
    thought: str
    category: str
    embedding: IssueEmbedding


class ExampleStore:
    """Labeled (transcript, thought, category) examples with embeddings."""

    def __init__(self, embedder: Embedder):
        self._embedder = embedder
        self._items: list[StoredExample] = []

    def add(self, example_id: str, transcript: str, thought: str, category: str) -> StoredExample:
        item = StoredExample(
            example_id=example_id,
            transcript=transcript,
            thought=thought,
            category=category,
            embedding=self._embedder.embed(transcript),
        )
        self._items.append(item)
        return item

    def __len__(self) -> int:
        return len(self._items)

    @property
    def items(self) -> list[StoredExample]:
        return list(self._items)

    def embed_query(self, ticket: Ticket) -> IssueEmbedding:
        text = "\n".join(m.text for m in ticket.transcript)
        return self._embedder.embed(text)


def retrieve_icl_examples(store: ExampleStore, ticket: Ticket, k: int) -> list[StoredExample]:
    """Top-k stored examples by cosine similarity to the ticket transcript.

    Descending similarity; exact ties go to the example added earlier. An
    empty store yields an empty list and the prompt degrades to pure CoT.
    """
    from .dedup import cosine_similarity

    if k <= 0 or len(store) == 0:
        return []
    query = store.embed_query(ticket)
    scored = [
        (cosine_similarity(query, item.embedding), index, item)
        for index, item in enumerate(store.items)
    ]
    scored.sort(key=lambda entry: (-entry[0], entry[1]))
    return [item for _, _, item in scored[:k]]
