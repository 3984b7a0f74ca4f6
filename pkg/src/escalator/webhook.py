"""Webhook delivery for escalation alerts."""

from __future__ import annotations

import logging
import time
from typing import Callable, Mapping

import requests

logger = logging.getLogger(__name__)


class WebhookSink:
    """POSTs alert payloads to a webhook, with per-category routing.

    Failed deliveries are retried three times with exponential backoff and
    then logged; alerting never fails the pipeline.
    """

    def __init__(
        self,
        url: str | None,
        category_urls: Mapping[str, str] | None = None,
        *,
        retries: int = 3,
        backoff: float = 0.25,
        timeout: float = 10.0,
        post: Callable | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.url = url
        self.category_urls = dict(category_urls or {})
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self._post = post or requests.post
        self._sleep = sleep

    def deliver(self, alert: dict) -> bool:
        url = self.category_urls.get(alert.get("category", ""), self.url)
        if not url:
            return False
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                self._sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                response = self._post(url, json=alert, timeout=self.timeout)
                status = getattr(response, "status_code", 200)
                if status < 400:
                    return True
                last_error = RuntimeError(f"webhook returned {status}")
            except requests.RequestException as exc:
                last_error = exc
        logger.error(
            "alert webhook for %s failed after %d attempts: %s",
            alert.get("ticket_id"),
            self.retries + 1,
            last_error,
        )
        return False
