"""Acceptance suite: one test per release criterion, each against an
independent oracle or a hand-verified expectation.

Run with ``pytest tests/test_acceptance.py -v`` for the per-criterion
pass/fail lines (add ``-s`` to also see the printed summaries).
"""

from __future__ import annotations

import json
import random
import re
import time

import numpy as np
import pytest

from conftest import make_ticket
from escalator.classify import PromptSpec
from escalator.config import DEFAULT_CATEGORIES, EngineConfig
from escalator.corpus import (
    NONE_GROUP,
    SyntheticCorpus,
    SyntheticCorpusSpec,
    drift_corpus,
    generate_corpus,
    geometry_corpus,
    pairs_corpus,
)
from escalator.dataset import Strategy, StrategyConfig, StrategyMode, build, emit, read_samples
from escalator.dedup import EscalationPool, EscalationRecord, IssueSummary, find_most_similar
from escalator.embedding import IssueEmbedding, MockEmbedder
from escalator.engine import Engine, IngestKind, created, message
from escalator.evaluation import eval_grouping, prf1, run_pipeline, sweep_threshold
from escalator.feedback import DerivedLabel, LabelSource
from escalator.providers import MockChatProvider, ScriptedChatProvider
from escalator.text import STOPWORDS
from escalator.tickets import (
    IllegalTransition,
    LifecycleEvent,
    LifecycleEventKind,
    Ticket,
    TicketState,
    transition,
)

DEDUP_CORPUS_SPEC = SyntheticCorpusSpec(
    n_groups=20,
    tickets_per_group=9,
    paraphrase_noise=0.1,
    others_fraction=0.1,
    seed=7,
    close_fraction=0.15,
)


def report(name: str) -> None:
    print(f"ACCEPTANCE {name}: PASS")


# -- 1. lifecycle grid -------------------------------------------------------


def test_criterion_fsm_exhaustive_grid():
    legal = {
        (TicketState.ACTIVE, LifecycleEventKind.NEW_DIALOGUE): TicketState.ANALYZING,
        (TicketState.ANALYZING, LifecycleEventKind.CLASSIFIED_OTHERS): TicketState.ACTIVE,
        (TicketState.ANALYZING, LifecycleEventKind.CLASSIFIED_CATEGORY): TicketState.PENDING,
        (TicketState.PENDING, LifecycleEventKind.NO_SIMILAR_FOUND): TicketState.ESCALATED,
        (TicketState.PENDING, LifecycleEventKind.SIMILAR_FOUND): TicketState.LINKED,
    }
    for state in (s for s in TicketState if s is not TicketState.CLOSED):
        legal[(state, LifecycleEventKind.CUSTOMER_CLOSED)] = TicketState.CLOSED

    start = time.monotonic()
    checked = 0
    for state in TicketState:
        for kind in LifecycleEventKind:
            ticket = Ticket(id="t1", title="x", state=state)
            if state in (TicketState.PENDING, TicketState.ESCALATED, TicketState.LINKED):
                ticket.category = "System Failure"
            if state is TicketState.LINKED:
                ticket.linked_to = "rep"
            if kind is LifecycleEventKind.CLASSIFIED_CATEGORY:
                event = LifecycleEvent.classified_category("System Failure")
            elif kind is LifecycleEventKind.SIMILAR_FOUND:
                event = LifecycleEvent.similar_found("rep")
            else:
                event = LifecycleEvent(kind)
            expected = legal.get((state, kind))
            if expected is None:
                with pytest.raises(IllegalTransition):
                    transition(ticket, event)
            else:
                assert transition(ticket, event).state is expected
            checked += 1
    elapsed = time.monotonic() - start
    assert checked == 6 * 7
    assert elapsed < 1.0
    report(f"fsm-grid ({checked} pairs in {elapsed:.3f}s)")


# -- 2. dedup oracle equivalence ------------------------------------------------


def _np_cosine(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def sequential_grouping_oracle(corpus: SyntheticCorpus, threshold: float = 0.88) -> dict[str, str]:
    """Straight-line re-simulation of the dedup rules over the event log.

    A plain list stands in for the pool; similarity, tie-breaking,
    rewriting, and close-time promotion are recomputed from first
    principles (numpy cosine over mock-embedder vectors).
    """
    embedder = MockEmbedder(corpus.embedding_dim)
    token_re = re.compile(r"[a-z0-9]+")

    def fingerprint(texts: list[str]) -> str:
        tokens: set[str] = set()
        for text in texts:
            tokens |= {t for t in token_re.findall(text.lower()) if t not in STOPWORDS}
        return " ".join(sorted(tokens))

    def rewrite(texts: list[str]) -> str:
        if len(set(texts)) == 1:
            return texts[0]
        common = set(texts[0].split())
        for text in texts[1:]:
            common &= set(text.split())
        return " ".join(sorted(common)) if common else texts[0]

    pool: list[dict] = []
    assignments: dict[str, str] = {}
    customer_texts: dict[str, list[str]] = {}
    resolved: set[str] = set()

    for event in corpus.events:
        tid = event.ticket_id
        if event.kind is IngestKind.TICKET_CREATED:
            customer_texts[tid] = []
        elif event.kind is IngestKind.MESSAGE_APPENDED:
            if event.payload["author"] == "customer":
                customer_texts[tid].append(event.payload["text"])
            if (
                tid in resolved
                or corpus.group_truth[tid] == NONE_GROUP
                or not customer_texts[tid]
            ):
                continue
            resolved.add(tid)
            issue = fingerprint(customer_texts[tid])
            vector = embedder.embed(issue).vector
            best = None
            for record in pool:
                sim = _np_cosine(vector, record["vec"])
                if best is None or sim > best[1]:
                    best = (record, sim)
                elif sim == best[1] and (record["created_at"], record["owner"]) < (
                    best[0]["created_at"],
                    best[0]["owner"],
                ):
                    best = (record, sim)
            if best is not None and best[1] > threshold:
                record = best[0]
                record["members"].append((tid, issue))
                texts = [record["issue"]] + [m[1] for m in record["members"]]
                record["issue"] = rewrite(texts)
                record["vec"] = embedder.embed(record["issue"]).vector
                assignments[tid] = record["group"]
            else:
                pool.append(
                    {
                        "owner": tid,
                        "group": tid,
                        "issue": issue,
                        "vec": vector,
                        "created_at": event.timestamp,
                        "members": [],
                    }
                )
                assignments[tid] = tid
        else:  # TicketClosed
            for record in pool:
                if record["owner"] == tid:
                    pool.remove(record)
                    if record["members"]:
                        (heir, _), *rest = record["members"]
                        pool.append(
                            {
                                "owner": heir,
                                "group": record["group"],
                                "issue": record["issue"],
                                "vec": record["vec"],
                                "created_at": record["created_at"],
                                "members": rest,
                            }
                        )
                    break
                members = [m for m in record["members"] if m[0] == tid]
                if members:
                    record["members"].remove(members[0])
                    break
    return assignments


def _linked_pairs(groups: dict[str, str]) -> set[tuple[str, str]]:
    pairs = set()
    ids = sorted(groups)
    for i, left in enumerate(ids):
        for right in ids[i + 1 :]:
            if groups[left] != NONE_GROUP and groups[left] == groups[right]:
                pairs.add((left, right))
    return pairs


def test_criterion_dedup_oracle_equivalence():
    start = time.monotonic()
    corpus = generate_corpus(DEDUP_CORPUS_SPEC)
    assert len(corpus.group_truth) == 200
    assert len({g for g in corpus.group_truth.values() if g != NONE_GROUP}) == 20

    run = run_pipeline(corpus)
    streaming = run.predicted_groups
    oracle = sequential_grouping_oracle(corpus)
    oracle_full = {
        tid: oracle.get(tid, NONE_GROUP) for tid in corpus.group_truth
    }
    assert streaming == oracle_full

    disagreements = _linked_pairs(streaming) ^ _linked_pairs(oracle_full)
    assert len(disagreements) == 0
    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    report(
        f"dedup-oracle-equivalence (200 tickets, {len(_linked_pairs(streaming))} "
        f"linked pairs, 0 disagreements, {elapsed:.2f}s)"
    )


# -- 3. cosine / argmax ------------------------------------------------------------


def test_criterion_cosine_and_argmax_oracles():
    from escalator.dedup import cosine_similarity

    rng = random.Random(1234)
    worst = 0.0
    for _ in range(1000):
        dim = rng.randint(2, 48)
        a = [rng.uniform(-1, 1) for _ in range(dim)]
        b = [rng.uniform(-1, 1) for _ in range(dim)]
        if not any(a):
            a[0] = 1.0
        if not any(b):
            b[0] = 1.0
        ours = cosine_similarity(IssueEmbedding(tuple(a), dim), IssueEmbedding(tuple(b), dim))
        worst = max(worst, abs(ours - _np_cosine(a, b)))
    assert worst < 1e-9

    for trial in range(100):
        trial_rng = random.Random(5000 + trial)
        pool = EscalationPool()
        dim = 12
        for i in range(50):
            vector = tuple(trial_rng.uniform(-1, 1) for _ in range(dim))
            pool.records[f"r{i}"] = EscalationRecord(
                ticket_id=f"r{i}",
                issue=IssueSummary("x"),
                embedding=IssueEmbedding(vector, dim),
                category="System Failure",
                created_at=i,
            )
        query = IssueEmbedding(tuple(trial_rng.uniform(-1, 1) for _ in range(dim)), dim)
        record, similarity = find_most_similar(pool, query)

        expected_id, expected_sim = None, -2.0
        for owner, rec in pool.records.items():
            sim = _np_cosine(query.vector, rec.embedding.vector)
            if sim > expected_sim:
                expected_id, expected_sim = owner, sim
        assert record.ticket_id == expected_id
        assert abs(similarity - expected_sim) < 1e-9
    report("cosine-argmax (1000 pairs < 1e-9; 100 argmax trials exact)")


# -- 4. pairwise grouping metric ---------------------------------------------------


def test_criterion_pairwise_grouping_metric():
    cases = [
        # (predicted, truth, hand-counted tp/fp/fn over unordered pairs)
        (
            {"a": "p1", "b": "p1", "c": "p1"},
            {"a": "g1", "b": "g1", "c": NONE_GROUP},
            (1, 2, 0),
        ),
        (
            {"a": "p1", "b": "p2", "c": "p2", "d": NONE_GROUP},
            {"a": "g1", "b": "g1", "c": "g2", "d": "g2"},
            (0, 1, 2),
        ),
        (
            {"a": "p1", "b": "p1", "c": "p2", "d": "p2"},
            {"a": "g1", "b": "g1", "c": "g1", "d": "g1"},
            (2, 0, 4),
        ),
        (
            {"a": NONE_GROUP, "b": NONE_GROUP, "c": NONE_GROUP},
            {"a": NONE_GROUP, "b": NONE_GROUP, "c": NONE_GROUP},
            (0, 0, 0),
        ),
        (
            {"a": "p1", "b": "p1", "c": NONE_GROUP, "d": "p2", "e": "p2"},
            {"a": "g1", "b": "g1", "c": "g1", "d": "g2", "e": "g2"},
            (2, 0, 2),
        ),
    ]
    for predicted, truth, (tp, fp, fn) in cases:
        assert eval_grouping(predicted, truth) == prf1(tp, fp, fn)

    rng = random.Random(77)
    truth = {f"t{i}": f"g{i % 5}" if i % 4 else NONE_GROUP for i in range(30)}
    predicted = {f"t{i}": f"p{i % 3}" if i % 5 else NONE_GROUP for i in range(30)}
    baseline = eval_grouping(predicted, truth)
    for _ in range(100):

        def relabel(groups: dict[str, str]) -> dict[str, str]:
            names = sorted({g for g in groups.values() if g != NONE_GROUP})
            fresh = rng.sample(range(10_000), len(names))
            mapping = dict(zip(names, fresh))
            return {
                t: NONE_GROUP if g == NONE_GROUP else f"perm{mapping[g]}"
                for t, g in groups.items()
            }

        assert eval_grouping(relabel(predicted), relabel(truth)) == baseline
    report("pairwise-grouping-metric (5 hand cases, 100 relabelings)")


# -- 5. threshold sweep -------------------------------------------------------------


def test_criterion_threshold_sweep():
    assert EngineConfig().similarity_threshold == 0.88

    rows = sweep_threshold(geometry_corpus())
    assert len(rows) == 10
    f1s = [row.f1 for row in rows]
    best = max(f1s)
    interior = f1s[1:-1]
    assert best in interior
    assert f1s[0] < best
    assert f1s[-1] < best

    for left, right in zip(rows, rows[1:]):
        crossed = [s for s in left.similarities if left.threshold < s <= right.threshold]
        if not crossed:
            assert (left.precision, left.recall, left.f1) == (
                right.precision,
                right.recall,
                right.f1,
            )
    peak = rows[f1s.index(best)].threshold
    report(
        f"threshold-sweep (peak f1 {best:.3f} at {peak:.2f}, "
        f"edges {f1s[0]:.3f}/{f1s[-1]:.3f}, piecewise-constant)"
    )


# -- 6. rewriting ablation -----------------------------------------------------------


def test_criterion_rewriting_ablation():
    from escalator.evaluation import ablate_rewriting

    drift_report = ablate_rewriting(drift_corpus())
    for row in drift_report.rows:
        assert row.with_rewriting[2] >= row.without_rewriting[2]

    pairs_report = ablate_rewriting(pairs_corpus())
    assert pairs_report.groups_with == pairs_report.groups_without
    for row in pairs_report.rows:
        assert row.with_rewriting == row.without_rewriting
    gain = drift_report.rows[0].with_rewriting[2] - drift_report.rows[0].without_rewriting[2]
    report(f"rewriting-ablation (drift f1 gain {gain:+.3f}; size-2 runs identical)")


# -- 7. dataset builder counts ---------------------------------------------------------


def test_criterion_dataset_builder_counts(tmp_path):
    tickets = {}
    labels = []
    for i in range(9):
        tid = f"t{i}"
        tickets[tid] = make_ticket(tid, texts=(f"outage in region {i}",))
        correct = i < 5
        labels.append(
            DerivedLabel(
                ticket_id=tid,
                label_category="System Failure" if correct else "Asset Loss",
                source=LabelSource.EXPLICIT_VOTE,
                predicted_category="System Failure",
                predicted_thought=f"original reasoning {i}",
            )
        )
    spec = PromptSpec(categories=list(DEFAULT_CATEGORIES))
    provider = MockChatProvider()

    expected = {
        StrategyMode.RAW: 9,
        StrategyMode.CORRECT_ONLY: 5,
        StrategyMode.CORRECT_AND_WRONG: 9,
        StrategyMode.CORRECT_AND_REVISED: 5 + 4 * 3,
        StrategyMode.CORRECT_WRONG_REVISED: 5 + 4 + 12,
    }
    for mode, count in expected.items():
        samples = build(labels, tickets, provider, StrategyConfig(mode, 3), prompt_spec=spec)
        assert len(samples) == count, mode
        if mode is StrategyMode.RAW:
            assert all(s.thought == "" for s in samples)
        for sample in samples:
            if sample.strategy_tag is Strategy.REVISED:
                assert sample.category == "Asset Loss"
        path = emit(samples, tmp_path / f"{mode.value}.jsonl")
        lines = [line for line in path.read_text().splitlines() if line]
        assert len(lines) == count
        for line in lines:
            record = json.loads(line)
            assert list(record) == ["prompt_messages", "completion", "strategy_tag", "ticket_id"]
        assert read_samples(path) == samples
    report(f"dataset-builder-counts ({expected[StrategyMode.RAW]}/"
           f"{expected[StrategyMode.CORRECT_ONLY]}/{expected[StrategyMode.CORRECT_AND_WRONG]}/"
           f"{expected[StrategyMode.CORRECT_AND_REVISED]}/{expected[StrategyMode.CORRECT_WRONG_REVISED]})")


# -- 8. replay determinism ----------------------------------------------------------------


def test_criterion_replay_determinism(tmp_path):
    corpus = generate_corpus(DEDUP_CORPUS_SPEC)
    events = corpus.events[:500]
    assert len(events) == 500

    def engine_for(data_dir=None, **kwargs):
        config = EngineConfig(embedding_dim=corpus.embedding_dim)
        return Engine(
            config,
            MockChatProvider(),
            MockEmbedder(corpus.embedding_dim),
            data_dir=data_dir,
            **kwargs,
        )

    first, second = engine_for(), engine_for()
    for event in events:
        first.ingest(event)
        second.ingest(event)
    assert first.snapshot_bytes() == second.snapshot_bytes()

    prefix = random.Random(99).randint(100, 400)
    data_dir = tmp_path / "state"
    live = engine_for(data_dir=data_dir, snapshot_every=50)
    for event in events[:prefix]:
        live.ingest(event)
    expected = live.snapshot_bytes()
    live.close()  # crash: no final snapshot

    config = EngineConfig(embedding_dim=corpus.embedding_dim)
    restored, restore_report = Engine.restore(
        config,
        MockChatProvider(),
        MockEmbedder(corpus.embedding_dim),
        data_dir=data_dir,
    )
    assert restored.snapshot_bytes() == expected
    report(
        f"replay-determinism (500 events byte-identical; crash at {prefix}, "
        f"snapshot={restore_report.snapshot_loaded}, tail={restore_report.tail_lines})"
    )


# -- 9. fail-safe classification -------------------------------------------------------------


def test_criterion_fail_safe_classification():
    # The scripted mock misbehaves on the first attempt and again on the
    # repair attempt; classification must land in Others and nothing may
    # reach the escalation pool.
    provider = ScriptedChatProvider(
        ["<<not json>>", "{\"thought\": \"x\"}", "category: Outage!!", "[1, 2, 3]"]
    )
    engine = Engine(EngineConfig(), provider, MockEmbedder(256))
    engine.ingest(created("t1", "broken", 1))
    engine.ingest(message("t1", "customer", "catastrophic outage of everything", 2))
    engine.ingest(message("t1", "customer", "the outage is still ongoing", 3))

    assert engine.predictions["t1"][0] == "Others"
    assert engine.tickets["t1"].state is TicketState.ACTIVE
    assert engine.alerts == []
    assert len(engine.pool) == 0
    assert len(provider.calls) == 4  # two rounds x (attempt + one repair)
    report("fail-safe-classification (garbage -> Others, no escalation)")
