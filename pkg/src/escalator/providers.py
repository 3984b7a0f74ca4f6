"""Chat-completion providers: the wire protocol client and deterministic fakes.

The HTTP provider speaks a plain chat-completion protocol: request
``{"model": ..., "messages": [{"role", "content"}], "temperature": ...}``,
response carrying the assistant text. The mock provider recognizes the
prompt shapes built in :mod:`escalator.prompts` and answers each task from
fixed rules, which makes every pipeline test end-to-end deterministic.
"""

from __future__ import annotations

import json
import logging
import re
from typing import Protocol, Sequence

import requests

from . import prompts
from .text import detect_product, keyword_fingerprint, tokenize

logger = logging.getLogger(__name__)

ChatMessages = Sequence[dict[str, str]]


class ProviderError(Exception):
    """The provider could not produce a usable completion."""


class MalformedOutput(ProviderError):
    """The completion did not match the requested structured format."""


_JSON_OBJECT_RE = re.compile(r"\{.*\}", re.DOTALL)


def extract_json_object(raw: str) -> dict:
    """Parse the first JSON object out of a completion, leniently.

    Providers occasionally wrap the requested record in prose; take the
    outermost braced region. Raises MalformedOutput when nothing parses.
    """
    candidate = raw.strip()
    try:
        obj = json.loads(candidate)
    except json.JSONDecodeError:
        match = _JSON_OBJECT_RE.search(candidate)
        if match is None:
            raise MalformedOutput("no JSON object in completion")
        try:
            obj = json.loads(match.group(0))
        except json.JSONDecodeError as exc:
            raise MalformedOutput(f"unparseable JSON object: {exc}") from exc
    if not isinstance(obj, dict):
        raise MalformedOutput("completion is not a JSON object")
    return obj


class ChatProvider(Protocol):
    def complete(self, messages: ChatMessages, temperature: float = 0.0) -> str: ...


# Ordered keyword -> category rules for the mock classifier. First match wins.
DEFAULT_RULES: tuple[tuple[str, str], ...] = (
    ("refund dispute", "Customer Complaint"),
    ("unacceptable", "Customer Complaint"),
    ("complaint", "Customer Complaint"),
    ("furious", "Customer Complaint"),
    ("data loss", "Asset Loss"),
    ("lost data", "Asset Loss"),
    ("missing funds", "Asset Loss"),
    ("wiped", "Asset Loss"),
    ("breach", "Security Incident"),
    ("unauthorized", "Security Incident"),
    ("vulnerability", "Security Incident"),
    ("suspicious login", "Security Incident"),
    ("outage", "System Failure"),
    ("fail to start", "System Failure"),
    ("crash", "System Failure"),
    ("unavailable", "System Failure"),
    ("degraded", "System Failure"),
    ("error", "System Failure"),
)


def _last_user_content(messages: ChatMessages) -> str:
    for message in reversed(messages):
        if message.get("role") == "user":
            return message.get("content", "")
    return ""


def _system_content(messages: ChatMessages) -> str:
    for message in messages:
        if message.get("role") == "system":
            return message.get("content", "")
    return ""


def _target_transcript(messages: ChatMessages) -> str:
    """The transcript section of the final user turn, excluding ICL blocks."""
    content = _last_user_content(messages)
    if prompts.TRANSCRIPT_HEADER in content:
        content = content.rsplit(prompts.TRANSCRIPT_HEADER, 1)[1]
    return content


class MockChatProvider:
    """Rule-driven stand-in for a hosted model.

    Classification scans the target transcript against an ordered
    keyword table and emits a templated thought; issue summaries are the
    sorted content tokens of the conversation plus a product guess;
    rewriting returns the tokens common to all listed issues; thought
    revision echoes a numbered template. Identical input always yields
    identical output.
    """

    def __init__(self, rules: Sequence[tuple[str, str]] = DEFAULT_RULES):
        self.rules = tuple(rules)

    def complete(self, messages: ChatMessages, temperature: float = 0.0) -> str:
        system = _system_content(messages)
        user = _last_user_content(messages)
        if system == prompts.SUMMARY_SYSTEM:
            return self._summarize(messages)
        if system == prompts.REWRITE_SYSTEM:
            return self._rewrite(user)
        if system == prompts.REVISION_SYSTEM:
            return self._revise(messages)
        return self._classify(messages)

    # -- task handlers ---------------------------------------------------

    def match_rule(self, text: str) -> tuple[str, str] | None:
        lowered = text.lower()
        for keyword, category in self.rules:
            if keyword in lowered:
                return keyword, category
        return None

    def _classify(self, messages: ChatMessages) -> str:
        transcript = _target_transcript(messages)
        hit = self.match_rule(transcript)
        if hit is None:
            payload = {
                "thought": (
                    "The conversation does not describe any configured "
                    "escalation topic, so no escalation is needed."
                ),
                "category": "Others",
            }
        else:
            keyword, category = hit
            payload = {
                "thought": (
                    f'The customer describes "{keyword}", which matches the '
                    f"{category} category."
                ),
                "category": category,
            }
        return json.dumps(payload)

    def _summarize(self, messages: ChatMessages) -> str:
        transcript = _target_transcript(messages)
        customer_lines = [
            line.split(":", 1)[1]
            for line in transcript.splitlines()
            if line.startswith("customer:")
        ]
        source = " ".join(customer_lines) if customer_lines else transcript
        issue = " ".join(keyword_fingerprint(source))
        return json.dumps({"issue": issue, "product": detect_product(source)})

    def _rewrite(self, user: str) -> str:
        issues = [
            line[2:]
            for line in user.splitlines()
            if line.startswith("- ")
        ]
        if not issues:
            return json.dumps({"issue": ""})
        if len(set(issues)) == 1:
            return json.dumps({"issue": issues[0]})
        common = set(tokenize(issues[0]))
        for issue in issues[1:]:
            common &= set(tokenize(issue))
        # An empty intersection keeps the current description.
        rewritten = " ".join(sorted(common)) if common else issues[0]
        return json.dumps({"issue": rewritten})

    def _revise(self, messages: ChatMessages) -> str:
        user = _last_user_content(messages)
        category = "Others"
        variant = 1
        for line in user.splitlines():
            if line.startswith("Correct category: "):
                category = line.removeprefix("Correct category: ").strip()
            if line.startswith("Write reasoning variant "):
                variant = int(line.removeprefix("Write reasoning variant ").split()[0])
        transcript = _target_transcript(messages)
        hit = self.match_rule(transcript)
        evidence = f'the mention of "{hit[0]}"' if hit else "the overall conversation"
        thought = (
            f"Reading {variant}: {evidence} shows the customer is affected by "
            f"an issue of type {category}, so {category} is the right call."
        )
        return json.dumps({"thought": thought})


class ScriptedChatProvider:
    """Replays a fixed sequence of raw completions; for failure-path tests."""

    def __init__(self, outputs: Sequence[str]):
        self._outputs = list(outputs)
        self.calls: list[list[dict[str, str]]] = []

    def complete(self, messages: ChatMessages, temperature: float = 0.0) -> str:
        self.calls.append([dict(m) for m in messages])
        if not self._outputs:
            raise ProviderError("scripted provider exhausted")
        return self._outputs.pop(0)


class HttpChatProvider:
    """Client for a chat-completion endpoint."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 30.0,
        session: requests.Session | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self._session = session or requests.Session()

    def complete(self, messages: ChatMessages, temperature: float = 0.0) -> str:
        payload = {
            "model": self.model,
            "messages": [dict(m) for m in messages],
            "temperature": temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = self._session.post(
                self.endpoint, json=payload, headers=headers, timeout=self.timeout
            )
            response.raise_for_status()
            body = response.json()
        except (requests.RequestException, ValueError) as exc:
            raise ProviderError(f"chat completion request failed: {exc}") from exc
        text = _extract_text(body)
        if text is None:
            raise ProviderError("chat completion response carried no assistant text")
        return text


def _extract_text(body: object) -> str | None:
    if isinstance(body, dict):
        choices = body.get("choices")
        if isinstance(choices, list) and choices:
            message = choices[0].get("message", {})
            if isinstance(message, dict) and isinstance(message.get("content"), str):
                return message["content"]
        for key in ("content", "text"):
            if isinstance(body.get(key), str):
                return body[key]
    return None
