"""JSON-over-HTTP client with bounded concurrency and exponential backoff."""
from __future__ import annotations

import logging
import random
import threading
import time
from typing import Callable, Optional

import httpx

from .core import EndpointUnavailable

log = logging.getLogger(__name__)


def is_retriable(status: int) -> bool:
    return status == 429 or status >= 500


class JsonEndpoint:
    """POSTs JSON to ``base_url`` + path; retries 429/5xx and transport errors."""

    def __init__(
        self,
        base_url: str,
        timeout_ms: int = 30_000,
        max_retries: int = 3,
        backoff_base_s: float = 0.5,
        backoff_cap_s: float = 8.0,
        max_concurrency: int = 8,
        transport: Optional[httpx.BaseTransport] = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.max_retries = max_retries
        self.backoff_base_s = backoff_base_s
        self.backoff_cap_s = backoff_cap_s
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max(1, max_concurrency))
        self._client = httpx.Client(
            timeout=timeout_ms / 1000,
            transport=transport,
            limits=httpx.Limits(max_connections=max(1, max_concurrency)),
        )

    def close(self) -> None:
        self._client.close()

    def _delay(self, attempt: int, retry_after: Optional[str]) -> float:
        if retry_after:
            try:
                return min(float(retry_after), self.backoff_cap_s)
            except ValueError:
                pass
        # full jitter
        return random.uniform(0, min(self.backoff_cap_s, self.backoff_base_s * 2**attempt))

    def post(self, path: str, payload: dict) -> dict:
        url = self.base_url + path
        status: Optional[int] = None
        for attempt in range(self.max_retries + 1):
            retry_after = None
            try:
                with self._slots:
                    resp = self._client.post(url, json=payload)
            except httpx.TransportError as e:
                status = None
                log.warning("POST %s failed: %s (attempt %d)", url, e, attempt + 1)
            else:
                status = resp.status_code
                if 200 <= status < 300:
                    try:
                        return resp.json()
                    except ValueError as e:
                        raise EndpointUnavailable(status, False, f"invalid JSON from {url}") from e
                if not is_retriable(status):
                    raise EndpointUnavailable(status, False, f"POST {url} -> {status}: {resp.text[:200]}")
                retry_after = resp.headers.get("retry-after")
                log.warning("POST %s -> %d (attempt %d)", url, status, attempt + 1)
            if attempt < self.max_retries:
                self._sleep(self._delay(attempt, retry_after))
        raise EndpointUnavailable(status, True)
