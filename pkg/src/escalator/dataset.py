"""Fine-tuning dataset construction from derived labels.

Correctly predicted tickets contribute their original reasoning verbatim.
Mispredicted tickets contribute, depending on the strategy: nothing, the
flawed reasoning paired with the corrected label, and/or freshly generated
reasoning conditioned on the corrected label (several numbered sampling
iterations per ticket).

Samples are emitted as JSON lines shaped like the inference prompt, so a
downstream LoRA trainer can consume them directly. Reference trainer
settings used with this format: lora_alpha 32, rank 32, learning rate 5e-5,
10 epochs, batch size 1.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from . import prompts
from .classify import PromptSpec, build_prompt
from .feedback import DerivedLabel
from .providers import ChatProvider, MalformedOutput, ProviderError
from .tickets import Ticket, TicketId

logger = logging.getLogger(__name__)


class Strategy(str, Enum):
    RAW = "Raw"
    CORRECT = "Correct"
    WRONG = "Wrong"
    REVISED = "Revised"


class StrategyMode(str, Enum):
    RAW = "raw"
    CORRECT_ONLY = "correct"
    CORRECT_AND_WRONG = "correct-wrong"
    CORRECT_AND_REVISED = "correct-revised"
    CORRECT_WRONG_REVISED = "all"


@dataclass(frozen=True)
class StrategyConfig:
    mode: StrategyMode
    revised_samples_per_ticket: int = 3

    def __post_init__(self) -> None:
        if self.revised_samples_per_ticket < 1:
            raise ValueError("revised_samples_per_ticket must be >= 1")


@dataclass(frozen=True)
class SftSample:
    prompt_messages: tuple[dict, ...]
    thought: str
    category: str
    strategy_tag: Strategy
    ticket_id: TicketId


def build(
    labels: Sequence[DerivedLabel],
    tickets: Mapping[TicketId, Ticket],
    provider: ChatProvider,
    cfg: StrategyConfig,
    *,
    prompt_spec: PromptSpec,
) -> list[SftSample]:
    """Turn derived labels into fine-tuning samples under one strategy mode.

    Sample counts are an exact function of how many labels were predicted
    correctly, the mode, and the revision count. A failed revision is
    skipped; partial corpora are valid.
    """
    mode = cfg.mode
    samples: list[SftSample] = []
    for label in labels:
        ticket = tickets.get(label.ticket_id)
        if ticket is None:
            raise KeyError(f"no ticket stored for label {label.ticket_id}")
        prompt = tuple(build_prompt(prompt_spec, ticket))
        correct = label.label_category == label.predicted_category

        if mode is StrategyMode.RAW:
            samples.append(
                SftSample(prompt, "", label.label_category, Strategy.RAW, label.ticket_id)
            )
            continue

        if correct:
            samples.append(
                SftSample(
                    prompt,
                    label.predicted_thought,
                    label.label_category,
                    Strategy.CORRECT,
                    label.ticket_id,
                )
            )
            continue

        if mode in (StrategyMode.CORRECT_AND_WRONG, StrategyMode.CORRECT_WRONG_REVISED):
            samples.append(
                SftSample(
                    prompt,
                    label.predicted_thought,
                    label.label_category,
                    Strategy.WRONG,
                    label.ticket_id,
                )
            )
        if mode in (StrategyMode.CORRECT_AND_REVISED, StrategyMode.CORRECT_WRONG_REVISED):
            for variant in range(1, cfg.revised_samples_per_ticket + 1):
                thought = _revise_thought(
                    provider, ticket, label.label_category, variant, prompt_spec
                )
                if thought is None:
                    continue
                samples.append(
                    SftSample(
                        prompt, thought, label.label_category, Strategy.REVISED, label.ticket_id
                    )
                )
    return samples


def _revise_thought(
    provider: ChatProvider,
    ticket: Ticket,
    category: str,
    variant: int,
    prompt_spec: PromptSpec,
) -> str | None:
    messages = prompts.revision_messages(
        ticket, category, variant, prompt_spec.max_transcript_messages
    )
    try:
        raw = provider.complete(messages, temperature=0.0)
        obj = json.loads(raw)
        thought = obj.get("thought") if isinstance(obj, dict) else None
        if not isinstance(thought, str) or not thought:
            raise MalformedOutput("revision carried no thought")
        return thought
    except (ProviderError, json.JSONDecodeError) as exc:
        logger.warning(
            "revision %d for %s failed (%s); skipping sample", variant, ticket.id, exc
        )
        return None


class SampleSchemaError(ValueError):
    """An emitted record does not match the dataset schema."""


def _validate_record(record: dict) -> None:
    expected = ["prompt_messages", "completion", "strategy_tag", "ticket_id"]
    if list(record.keys()) != expected:
        raise SampleSchemaError(f"record keys {list(record.keys())} != {expected}")
    messages = record["prompt_messages"]
    if not isinstance(messages, list) or not messages:
        raise SampleSchemaError("prompt_messages must be a non-empty list")
    for message in messages:
        if not isinstance(message, dict) or set(message) != {"role", "content"}:
            raise SampleSchemaError("each prompt message needs exactly role and content")
        if not isinstance(message["role"], str) or not isinstance(message["content"], str):
            raise SampleSchemaError("prompt message fields must be strings")
    completion = record["completion"]
    if not isinstance(completion, dict) or list(completion.keys()) != ["thought", "category"]:
        raise SampleSchemaError("completion must hold thought then category")
    if not isinstance(completion["thought"], str) or not isinstance(completion["category"], str):
        raise SampleSchemaError("completion fields must be strings")
    if record["strategy_tag"] not in {s.value for s in Strategy}:
        raise SampleSchemaError(f"unknown strategy tag {record['strategy_tag']!r}")
    if not isinstance(record["ticket_id"], str) or not record["ticket_id"]:
        raise SampleSchemaError("ticket_id must be a non-empty string")


def sample_to_record(sample: SftSample) -> dict:
    return {
        "prompt_messages": [dict(m) for m in sample.prompt_messages],
        "completion": {"thought": sample.thought, "category": sample.category},
        "strategy_tag": sample.strategy_tag.value,
        "ticket_id": sample.ticket_id,
    }


def emit(samples: Sequence[SftSample], path: str | Path) -> Path:
    """Write samples as JSON lines, validating each record against the schema."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for sample in samples:
            record = sample_to_record(sample)
            _validate_record(record)
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


def read_samples(path: str | Path) -> list[SftSample]:
    """Parse an emitted dataset back into samples, validating every line."""
    samples: list[SftSample] = []
    with Path(path).open(encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            _validate_record(record)
            samples.append(
                SftSample(
                    prompt_messages=tuple(record["prompt_messages"]),
                    thought=record["completion"]["thought"],
                    category=record["completion"]["category"],
                    strategy_tag=Strategy(record["strategy_tag"]),
                    ticket_id=record["ticket_id"],
                )
            )
    return samples
