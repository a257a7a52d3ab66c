"""Chat-completion endpoint client (``POST {endpoint}/chat``)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import httpx

from .core import EndpointUnavailable, NewsRagError, ValidationError
from .http import JsonEndpoint


@dataclass
class LlmClientConfig:
    endpoint_url: str = "http://127.0.0.1:8081"
    model_id: str = "news-reporter-3b"
    max_new_tokens: int = 512
    temperature: float = 0.0
    timeout_ms: int = 60_000
    max_retries: int = 3
    max_concurrency: int = 4

    def validate(self) -> None:
        if not self.endpoint_url:
            raise ValidationError("llm endpoint_url is required")
        if self.max_new_tokens <= 0 or self.timeout_ms <= 0:
            raise ValidationError("max_new_tokens and timeout_ms must be positive")
        if self.temperature < 0:
            raise ValidationError("temperature must be non-negative")

    def generation_params(self) -> dict:
        return {"max_new_tokens": self.max_new_tokens, "temperature": self.temperature}


class ChatClient:
    def __init__(self, config: LlmClientConfig, transport: Optional[httpx.BaseTransport] = None, **http_kw):
        config.validate()
        self.config = config
        self.model_id = config.model_id
        self._http = JsonEndpoint(
            config.endpoint_url,
            timeout_ms=config.timeout_ms,
            max_retries=config.max_retries,
            max_concurrency=config.max_concurrency,
            transport=transport,
            **http_kw,
        )

    def close(self) -> None:
        self._http.close()

    def complete(self, prompt: str, max_new_tokens: Optional[int] = None, temperature: Optional[float] = None) -> str:
        body = self._http.post(
            "/chat",
            {
                "model": self.config.model_id,
                "prompt": prompt,
                "max_new_tokens": max_new_tokens or self.config.max_new_tokens,
                "temperature": self.config.temperature if temperature is None else temperature,
            },
        )
        text = body.get("text") if isinstance(body, dict) else None
        if not isinstance(text, str):
            raise EndpointUnavailable(200, False, "chat response missing 'text'")
        return text

    def probe(self) -> bool:
        try:
            self.complete("ping", max_new_tokens=1)
            return True
        except NewsRagError:
            return False
