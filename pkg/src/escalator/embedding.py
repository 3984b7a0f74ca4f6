"""Issue embeddings and embedding providers.

The mock embedder hashes bag-of-words token counts into a fixed number of
buckets and L2-normalizes, so embedding geometry is a pure function of the
token multiset. The HTTP embedder speaks ``{"model", "input": [text]}`` and
expects one numeric vector per input.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Protocol

import requests

from .providers import ProviderError
from .text import tokenize


class DimensionMismatch(Exception):
    pass


@dataclass(frozen=True)
class IssueEmbedding:
    vector: tuple[float, ...]
    dim: int

    def __post_init__(self) -> None:
        if len(self.vector) != self.dim:
            raise DimensionMismatch(f"vector has {len(self.vector)} dims, expected {self.dim}")
        if not any(v != 0.0 for v in self.vector):
            raise ValueError("embedding must have a positive norm")


class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> IssueEmbedding: ...


def _bucket(token: str, dim: int) -> int:
    digest = hashlib.md5(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % dim


class MockEmbedder:
    """Deterministic hashed bag-of-words embedding."""

    def __init__(self, dim: int = 256):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = dim

    def embed(self, text: str) -> IssueEmbedding:
        tokens = tokenize(text) or ["<empty>"]
        counts = [0.0] * self.dim
        for token in tokens:
            counts[_bucket(token, self.dim)] += 1.0
        norm = math.sqrt(sum(c * c for c in counts))
        return IssueEmbedding(tuple(c / norm for c in counts), self.dim)


class HttpEmbedder:
    """Client for an embedding endpoint."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        dim: int,
        api_key: str | None = None,
        timeout: float = 30.0,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.dim = dim
        self.api_key = api_key
        self.timeout = timeout
        self._session = session or requests.Session()

    def embed(self, text: str) -> IssueEmbedding:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = self._session.post(
                self.endpoint,
                json={"model": self.model, "input": [text]},
                headers=headers,
                timeout=self.timeout,
            )
            response.raise_for_status()
            body = response.json()
        except (requests.RequestException, ValueError) as exc:
            raise ProviderError(f"embedding request failed: {exc}") from exc
        vector = _extract_vector(body)
        if vector is None:
            raise ProviderError("embedding response carried no vector")
        if len(vector) != self.dim:
            raise DimensionMismatch(
                f"embedding endpoint returned {len(vector)} dims, expected {self.dim}"
            )
        return IssueEmbedding(tuple(float(v) for v in vector), self.dim)


def _extract_vector(body: object) -> list[float] | None:
    if not isinstance(body, dict):
        return None
    data = body.get("data")
    if isinstance(data, list) and data and isinstance(data[0], dict):
        vec = data[0].get("embedding")
        if isinstance(vec, list):
            return vec
    embeddings = body.get("embeddings")
    if isinstance(embeddings, list) and embeddings and isinstance(embeddings[0], list):
        return embeddings[0]
    return None
