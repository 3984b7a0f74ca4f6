"""Synthetic ticket-stream generation with embedded ground truth.

Real escalation data is proprietary, so evaluation runs on generated
streams whose issue texts are built from minted tokens. Tokens are minted
so that no two hash into the same embedding bucket, which makes the
bag-of-words cosine geometry of a corpus exact and lets the dedicated
corpora below place intra-group, inter-group, and near-boundary
similarities at designed values.

Event logs use the live ingestion schema; ground truth travels in a
sidecar file.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path

from .embedding import _bucket
from .engine import IngestEvent, closed, created, message

NONE_GROUP = "NONE"

_BASE_TS = 1_700_000_000_000

# Single-token classifier triggers per category; every group transcript
# carries its group's trigger so classification is never the variable
# under test in dedup corpora.
_TRIGGERS = ("outage", "complaint", "wiped", "breach")

_ANALYST_ACK = "thanks for the details, the team is looking at this now"
_BENIGN_SNIPPETS = (
    "question about pricing tiers for new accounts",
    "where can i find the quota increase form",
    "how do i rotate api keys in the dashboard",
    "looking for documentation on backup scheduling",
    "can you confirm the maintenance window next month",
    "need help understanding the billing line items",
)


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    n_groups: int
    tickets_per_group: int | tuple[int, int]
    paraphrase_noise: float
    others_fraction: float
    seed: int
    close_fraction: float = 0.0
    embedding_dim: int = 2048


@dataclass
class SyntheticCorpus:
    events: list[IngestEvent]
    escalate_truth: dict[str, bool]
    group_truth: dict[str, str]
    embedding_dim: int
    meta: dict = field(default_factory=dict)


class TokenMint:
    """Deterministic token stream with collision-free embedding buckets."""

    def __init__(self, dim: int, reserved: tuple[str, ...] = ()):
        self._dim = dim
        self._used = {_bucket(token, dim) for token in reserved}
        self._counter = 0

    def take(self, n: int) -> list[str]:
        out: list[str] = []
        while len(out) < n:
            if len(self._used) >= self._dim:
                raise ValueError(f"token space exhausted for embedding dim {self._dim}")
            token = f"tok{self._counter:05d}"
            self._counter += 1
            bucket = _bucket(token, self._dim)
            if bucket in self._used:
                continue
            self._used.add(bucket)
            out.append(token)
        return out


@dataclass
class _TicketPlan:
    ticket_id: str
    title: str
    group: str
    start: int
    customer_lines: list[str]
    analyst_lines: list[str]
    close_at: int | None = None


def _plan_events(plans: list[_TicketPlan]) -> list[IngestEvent]:
    events: list[tuple[int, int, IngestEvent]] = []
    seq = 0

    def push(ts: int, event: IngestEvent) -> None:
        nonlocal seq
        events.append((ts, seq, event))
        seq += 1

    for plan in plans:
        ts = plan.start
        push(ts, created(plan.ticket_id, plan.title, ts))
        for line in plan.customer_lines:
            ts += 1000
            push(ts, message(plan.ticket_id, "customer", line, ts))
        for line in plan.analyst_lines:
            ts += 1000
            push(ts, message(plan.ticket_id, "analyst", line, ts))
        if plan.close_at is not None:
            push(max(plan.close_at, ts + 1000), closed(plan.ticket_id, max(plan.close_at, ts + 1000)))
    events.sort(key=lambda entry: (entry[0], entry[1]))
    return [event for _, _, event in events]


def _finish(plans: list[_TicketPlan], dim: int, meta: dict) -> SyntheticCorpus:
    escalate = {p.ticket_id: p.group != NONE_GROUP for p in plans}
    groups = {p.ticket_id: p.group for p in plans}
    return SyntheticCorpus(
        events=_plan_events(plans),
        escalate_truth=escalate,
        group_truth=groups,
        embedding_dim=dim,
        meta=meta,
    )


def generate_corpus(spec: SyntheticCorpusSpec) -> SyntheticCorpus:
    """General seeded corpus: grouped issue tickets plus benign chatter.

    Each group shares a token template (trigger word included); every
    member past the first substitutes fresh tokens at the group's
    ``round(noise * template)`` paraphrase positions, so the group keeps a
    stable common core. ``close_fraction`` of tickets close mid-stream,
    exercising membership removal and representative promotion. Identical
    specs produce byte-identical event logs.
    """
    rng = random.Random(spec.seed)
    mint = TokenMint(spec.embedding_dim, reserved=_TRIGGERS)
    plans: list[_TicketPlan] = []
    horizon = 1_000_000
    ticket_no = 0

    def next_id() -> str:
        nonlocal ticket_no
        ticket_no += 1
        return f"t{ticket_no:04d}"

    group_total = 0
    for g in range(spec.n_groups):
        group_id = f"g{g:03d}"
        trigger = _TRIGGERS[g % len(_TRIGGERS)]
        template = [trigger] + mint.take(24)
        replace_n = min(round(spec.paraphrase_noise * len(template)), len(template) - 2)
        positions = rng.sample(range(1, len(template)), replace_n) if replace_n else []
        if isinstance(spec.tickets_per_group, int):
            size = spec.tickets_per_group
        else:
            size = rng.randint(*spec.tickets_per_group)
        for member in range(size):
            group_total += 1
            tokens = list(template)
            if member > 0 and replace_n:
                fresh = mint.take(replace_n)
                for pos, token in zip(positions, fresh):
                    tokens[pos] = token
            rng.shuffle(tokens)
            plans.append(
                _TicketPlan(
                    ticket_id=next_id(),
                    title=f"issue report {group_id}",
                    group=group_id,
                    start=_BASE_TS + rng.randrange(horizon) * 10,
                    customer_lines=[" ".join(tokens)],
                    analyst_lines=[_ANALYST_ACK],
                )
            )

    if spec.others_fraction >= 1.0:
        n_others = max(10, group_total)
    else:
        n_others = round(group_total * spec.others_fraction / (1.0 - spec.others_fraction))
    for _ in range(n_others):
        lines = rng.sample(_BENIGN_SNIPPETS, 2)
        plans.append(
            _TicketPlan(
                ticket_id=next_id(),
                title="general question",
                group=NONE_GROUP,
                start=_BASE_TS + rng.randrange(horizon) * 10,
                customer_lines=list(lines),
                analyst_lines=[],
            )
        )

    if spec.close_fraction > 0:
        n_close = round(len(plans) * spec.close_fraction)
        for plan in rng.sample(plans, n_close):
            plan.close_at = plan.start + rng.randrange(100, horizon) * 10
    return _finish(
        plans,
        spec.embedding_dim,
        {
            "kind": "general",
            "n_groups": spec.n_groups,
            "group_tickets": group_total,
            "others": n_others,
            "seed": spec.seed,
        },
    )


def geometry_corpus(dim: int = 2048, seed: int = 7) -> SyntheticCorpus:
    """Corpus with designed similarity geometry for threshold sweeps.

    Group members share 28 of 30 issue tokens, giving member-vs-first
    similarity 28/30 (~0.933) and member-vs-rewritten ~0.966. All groups
    share a 9-token pool for an inter-group floor of 9/30 (0.3). One pair
    of singleton groups overlaps at 26/30 (~0.867), so only the lowest
    sweep threshold wrongly merges them: grouping quality peaks strictly
    inside the swept range.
    """
    rng = random.Random(seed)
    mint = TokenMint(dim, reserved=_TRIGGERS)
    common = ["outage"] + mint.take(8)
    plans: list[_TicketPlan] = []
    ticket_no = 0
    horizon = 100_000

    def next_id() -> str:
        nonlocal ticket_no
        ticket_no += 1
        return f"t{ticket_no:04d}"

    def plan(tokens: list[str], group: str, start: int) -> None:
        shuffled = list(tokens)
        rng.shuffle(shuffled)
        plans.append(
            _TicketPlan(
                ticket_id=next_id(),
                title=f"issue report {group}",
                group=group,
                start=start,
                customer_lines=[" ".join(shuffled)],
                analyst_lines=[_ANALYST_ACK],
            )
        )

    for g in range(8):
        group_id = f"g{g:03d}"
        specific = mint.take(21)
        template = common + specific
        for member in range(4):
            tokens = list(template)
            if member > 0:
                # Same two positions perturbed in every member, so the
                # rewritten common core stays at 28 tokens.
                tokens[9], tokens[10] = mint.take(2)
            plan(tokens, group_id, _BASE_TS + (g * 10 + member) * horizon)

    # Near-boundary singleton pair: 9 common + 17 shared specific of 30.
    shared = mint.take(17)
    plan(common + shared + mint.take(4), "g100", _BASE_TS + 81 * horizon)
    plan(common + shared + mint.take(4), "g101", _BASE_TS + 82 * horizon)

    for i in range(6):
        lines = rng.sample(_BENIGN_SNIPPETS, 2)
        plans.append(
            _TicketPlan(
                ticket_id=next_id(),
                title="general question",
                group=NONE_GROUP,
                start=_BASE_TS + (90 + i) * horizon,
                customer_lines=list(lines),
                analyst_lines=[],
            )
        )
    return _finish(plans, dim, {"kind": "geometry", "seed": seed})


def drift_corpus(
    dim: int = 2048, seed: int = 11, n_groups: int = 4, group_size: int = 10
) -> SyntheticCorpus:
    """Corpus whose group members drift away from the first report.

    Each member keeps a 25-token core and slides a 5-token window one step
    further along a fresh stream, so adjacent members are close (29/30)
    while distant members share only the core (25/30, below the default
    threshold). Without rewriting the group shatters once drift crosses
    the threshold; rewriting keeps the representative near the common
    core, whose worst chain similarity (~0.895) stays above it.
    """
    rng = random.Random(seed)
    mint = TokenMint(dim, reserved=_TRIGGERS)
    plans: list[_TicketPlan] = []
    ticket_no = 0
    horizon = 100_000

    def next_id() -> str:
        nonlocal ticket_no
        ticket_no += 1
        return f"t{ticket_no:04d}"

    for g in range(n_groups):
        group_id = f"g{g:03d}"
        trigger = _TRIGGERS[g % len(_TRIGGERS)]
        core = [trigger] + mint.take(24)
        stream = mint.take(5 + group_size - 1)
        for member in range(group_size):
            tokens = core + stream[member : member + 5]
            shuffled = list(tokens)
            rng.shuffle(shuffled)
            plans.append(
                _TicketPlan(
                    ticket_id=next_id(),
                    title=f"issue report {group_id}",
                    group=group_id,
                    start=_BASE_TS + (g * group_size + member) * horizon,
                    customer_lines=[" ".join(shuffled)],
                    analyst_lines=[_ANALYST_ACK],
                )
            )
    for i in range(4):
        lines = rng.sample(_BENIGN_SNIPPETS, 2)
        plans.append(
            _TicketPlan(
                ticket_id=next_id(),
                title="general question",
                group=NONE_GROUP,
                start=_BASE_TS + (n_groups * group_size + i) * horizon,
                customer_lines=list(lines),
                analyst_lines=[],
            )
        )
    return _finish(plans, dim, {"kind": "drift", "seed": seed})


def pairs_corpus(dim: int = 2048, seed: int = 13, n_groups: int = 6) -> SyntheticCorpus:
    """Corpus where every group has exactly two tickets.

    Rewriting fires after the only link and can influence nothing else,
    so runs with and without rewriting must be identical.
    """
    rng = random.Random(seed)
    mint = TokenMint(dim, reserved=_TRIGGERS)
    plans: list[_TicketPlan] = []
    ticket_no = 0
    horizon = 100_000

    def next_id() -> str:
        nonlocal ticket_no
        ticket_no += 1
        return f"t{ticket_no:04d}"

    for g in range(n_groups):
        group_id = f"g{g:03d}"
        trigger = _TRIGGERS[g % len(_TRIGGERS)]
        template = [trigger] + mint.take(29)
        for member in range(2):
            tokens = list(template)
            if member:
                tokens[5], tokens[6] = mint.take(2)
            shuffled = list(tokens)
            rng.shuffle(shuffled)
            plans.append(
                _TicketPlan(
                    ticket_id=next_id(),
                    title=f"issue report {group_id}",
                    group=group_id,
                    start=_BASE_TS + (g * 2 + member) * horizon,
                    customer_lines=[" ".join(shuffled)],
                    analyst_lines=[_ANALYST_ACK],
                )
            )
    return _finish(plans, dim, {"kind": "pairs", "seed": seed})


def save_corpus(corpus: SyntheticCorpus, directory: str | Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with (directory / "events.jsonl").open("w", encoding="utf-8") as handle:
        for event in corpus.events:
            handle.write(event.to_json_line() + "\n")
    truth = {
        "embedding_dim": corpus.embedding_dim,
        "escalate": corpus.escalate_truth,
        "groups": corpus.group_truth,
        "meta": corpus.meta,
    }
    (directory / "truth.json").write_text(
        json.dumps(truth, sort_keys=True, ensure_ascii=False, indent=2) + "\n",
        encoding="utf-8",
    )
    return directory


def load_corpus(directory: str | Path) -> SyntheticCorpus:
    directory = Path(directory)
    events = []
    with (directory / "events.jsonl").open(encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                events.append(IngestEvent.parse(json.loads(line)))
    truth = json.loads((directory / "truth.json").read_text(encoding="utf-8"))
    return SyntheticCorpus(
        events=events,
        escalate_truth=truth["escalate"],
        group_truth=truth["groups"],
        embedding_dim=truth["embedding_dim"],
        meta=truth.get("meta", {}),
    )
