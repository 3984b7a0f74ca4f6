"""Tokenization tables shared by the deterministic mock providers."""

from __future__ import annotations

import re

# Small closed-class list; enough to strip conversational glue from issue
# summaries without swallowing technical content words.
STOPWORDS = frozenset(
    """
    a about after again all am an and any are as at be because been before
    but by can could did do does for from get got had has have he her here
    hers him his how i if in into is it its just me more most my no not now
    of on once only or other our ours out over own please she should since
    so some still than that the their theirs them then there these they
    this those through to too under until up us very was we were what when
    where which while who whom why will with would you your yours
    """.split()
)

# Cloud products the issue summarizer tries to call out, mapped to their
# display form.
PRODUCT_LEXICON: dict[str, str] = {
    "gpu instances": "GPU instances",
    "gpu instance": "GPU instances",
    "object storage": "Object Storage",
    "block storage": "Block Storage",
    "load balancer": "Load Balancer",
    "kubernetes": "Kubernetes",
    "virtual machine": "Virtual Machine",
    "message queue": "Message Queue",
    "database": "Database",
    "cdn": "CDN",
    "spark": "Spark",
}

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def content_tokens(text: str) -> list[str]:
    """Lowercased alphanumeric tokens with stopwords removed."""
    return [t for t in tokenize(text) if t not in STOPWORDS]


def keyword_fingerprint(text: str) -> list[str]:
    """Sorted unique content tokens; the mock summarizer's issue form."""
    return sorted(set(content_tokens(text)))


def detect_product(text: str) -> str | None:
    lowered = text.lower()
    for phrase, display in PRODUCT_LEXICON.items():
        if phrase in lowered:
            return display
    return None
