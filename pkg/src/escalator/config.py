"""Engine configuration with flags > environment > file precedence."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from .dedup import DEFAULT_THRESHOLD
from .tickets import OTHERS, TicketCategory

ENV_PREFIX = "ESCALATOR_"

DEFAULT_CATEGORIES: tuple[TicketCategory, ...] = (
    TicketCategory(
        "System Failure",
        "Malfunctioning platform services: outages, instances failing to "
        "start, degraded or unavailable infrastructure.",
    ),
    TicketCategory(
        "Customer Complaint",
        "Intense dissatisfaction with the service or its support: disputes, "
        "threats to churn, repeated unresolved grievances.",
    ),
    TicketCategory(
        "Asset Loss",
        "Loss or corruption of customer data or funds.",
    ),
    TicketCategory(
        "Security Incident",
        "Suspected breaches, unauthorized access, vulnerabilities, or leaks.",
    ),
)


class ConfigError(ValueError):
    pass


@dataclass
class EngineConfig:
    categories: list[TicketCategory] = field(
        default_factory=lambda: [
            TicketCategory(c.name, c.description, list(c.few_shot_examples))
            for c in DEFAULT_CATEGORIES
        ]
    )
    similarity_threshold: float = DEFAULT_THRESHOLD
    embedding_dim: int = 256
    chat_provider: str = "mock"  # "mock" or "http"
    chat_endpoint: str | None = None
    chat_model: str | None = None
    chat_api_key: str | None = None
    embedding_provider: str = "mock"  # "mock" or "http"
    embedding_endpoint: str | None = None
    embedding_model: str | None = None
    embedding_api_key: str | None = None
    max_transcript_messages: int = 30
    alert_webhook_url: str | None = None
    # Optional category -> webhook routing; falls back to alert_webhook_url.
    category_webhooks: dict[str, str] = field(default_factory=dict)
    data_dir: str | None = None
    icl_examples: int = 0
    rewrite_enabled: bool = True

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if not 0.0 < self.similarity_threshold <= 1.0:
            raise ConfigError("similarity_threshold must be in (0, 1]")
        if self.embedding_dim <= 0:
            raise ConfigError("embedding_dim must be positive")
        if self.max_transcript_messages <= 0:
            raise ConfigError("max_transcript_messages must be positive")
        if self.chat_provider not in ("mock", "http"):
            raise ConfigError(f"unknown chat provider {self.chat_provider!r}")
        if self.embedding_provider not in ("mock", "http"):
            raise ConfigError(f"unknown embedding provider {self.embedding_provider!r}")
        if self.chat_provider == "http" and not self.chat_endpoint:
            raise ConfigError("chat_endpoint is required with the http chat provider")
        if self.embedding_provider == "http" and not self.embedding_endpoint:
            raise ConfigError("embedding_endpoint is required with the http embedding provider")
        names = [c.name for c in self.categories]
        if len(names) != len(set(names)):
            raise ConfigError("category names must be unique")
        # "Others" is reserved: always present conceptually, never escalated,
        # and never listed as an escalation topic of its own.
        self.categories = [c for c in self.categories if c.name != OTHERS]
        if not self.categories:
            raise ConfigError("at least one escalation category is required")

    def category_names(self) -> list[str]:
        return [c.name for c in self.categories] + [OTHERS]


_SIMPLE_FIELDS: dict[str, type] = {
    "similarity_threshold": float,
    "embedding_dim": int,
    "chat_provider": str,
    "chat_endpoint": str,
    "chat_model": str,
    "chat_api_key": str,
    "embedding_provider": str,
    "embedding_endpoint": str,
    "embedding_model": str,
    "embedding_api_key": str,
    "max_transcript_messages": int,
    "alert_webhook_url": str,
    "data_dir": str,
    "icl_examples": int,
    "rewrite_enabled": bool,
}


def _coerce(name: str, value: Any) -> Any:
    kind = _SIMPLE_FIELDS[name]
    if kind is bool and isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")
    return kind(value)


def _categories_from_obj(raw: Any) -> list[TicketCategory]:
    categories = []
    for entry in raw:
        if isinstance(entry, str):
            categories.append(TicketCategory(entry, ""))
        else:
            categories.append(
                TicketCategory(
                    entry["name"],
                    entry.get("description", ""),
                    [tuple(pair) for pair in entry.get("few_shot_examples", [])],
                )
            )
    return categories


def load_config(
    path: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> EngineConfig:
    """Build a config from a JSON file, the environment, and explicit flags.

    Later sources win: file < environment (ESCALATOR_* variables) < overrides.
    """
    values: dict[str, Any] = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        for name, value in raw.items():
            if name == "categories":
                values["categories"] = _categories_from_obj(value)
            elif name == "category_webhooks":
                values["category_webhooks"] = dict(value)
            elif name in _SIMPLE_FIELDS:
                values[name] = _coerce(name, value)
            else:
                raise ConfigError(f"unknown config key {name!r}")

    env = os.environ if env is None else env
    for name in _SIMPLE_FIELDS:
        env_key = ENV_PREFIX + name.upper()
        if env_key in env:
            values[name] = _coerce(name, env[env_key])

    if overrides:
        for name, value in overrides.items():
            if value is None:
                continue
            if name == "categories":
                values["categories"] = value
            elif name == "category_webhooks":
                values["category_webhooks"] = dict(value)
            elif name in _SIMPLE_FIELDS:
                values[name] = _coerce(name, value)
            else:
                raise ConfigError(f"unknown config override {name!r}")

    known = {f.name for f in fields(EngineConfig)}
    assert set(values) <= known
    return EngineConfig(**values)
