"""Online support-ticket escalation engine.

Classifies live ticket conversations into escalation categories, links
duplicate escalations by issue-embedding similarity (rewriting the shared
issue as groups grow), records analyst feedback, and builds fine-tuning
datasets from the derived labels.
"""

from .classify import ClassificationResult, PromptSpec, build_prompt, classify
from .config import DEFAULT_CATEGORIES, EngineConfig, load_config
from .dedup import (
    Decision,
    EscalationPool,
    EscalationRecord,
    IssueSummary,
    cosine_similarity,
    find_most_similar,
    resolve_pending,
    rewrite_issue,
    summarize_issue,
)
from .embedding import Embedder, IssueEmbedding, MockEmbedder
from .engine import AlertNotification, Engine, IngestEvent
from .feedback import DerivedLabel, FeedbackEvent, FeedbackKind, FeedbackLedger, derive_labels
from .providers import ChatProvider, MockChatProvider
from .tickets import (
    OTHERS,
    LifecycleEvent,
    Message,
    Ticket,
    TicketCategory,
    TicketState,
    transition,
)

__version__ = "0.1.0"

__all__ = [
    "AlertNotification",
    "ChatProvider",
    "ClassificationResult",
    "DEFAULT_CATEGORIES",
    "Decision",
    "DerivedLabel",
    "Embedder",
    "Engine",
    "EngineConfig",
    "EscalationPool",
    "EscalationRecord",
    "FeedbackEvent",
    "FeedbackKind",
    "FeedbackLedger",
    "IngestEvent",
    "IssueEmbedding",
    "IssueSummary",
    "LifecycleEvent",
    "Message",
    "MockChatProvider",
    "MockEmbedder",
    "OTHERS",
    "PromptSpec",
    "Ticket",
    "TicketCategory",
    "TicketState",
    "build_prompt",
    "classify",
    "cosine_similarity",
    "derive_labels",
    "find_most_similar",
    "load_config",
    "resolve_pending",
    "rewrite_issue",
    "summarize_issue",
    "transition",
    "__version__",
]
