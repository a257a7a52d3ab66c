"""Sentence-encoder clients: a remote HTTP encoder and an offline hashing embedder."""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence

import httpx
import numpy as np

from .core import DEFAULT_DIM, DimensionMismatch, EmbeddingVector, NewsRagError, ValidationError
from .http import JsonEndpoint

TOKEN_SPLIT_RE = re.compile(r"[\W_]+")


class EmbedError(NewsRagError):
    pass


@dataclass
class EmbedderConfig:
    kind: str = "deterministic"  # or "remote"
    endpoint_url: Optional[str] = None
    model_name: str = "mpnet-base"
    dim: int = DEFAULT_DIM
    timeout_ms: int = 30_000
    max_batch: int = 64
    max_texts: int = 1_000_000
    max_text_chars: int = 20_000
    max_retries: int = 3
    max_concurrency: int = 4

    def validate(self) -> None:
        if self.kind not in ("deterministic", "remote"):
            raise ValidationError(f"unknown embedder kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint_url:
            raise ValidationError("remote embedder needs endpoint_url")
        for name in ("dim", "timeout_ms", "max_batch", "max_texts", "max_text_chars"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")


class Embedder(Protocol):
    dim: int
    model_name: str

    def embed_text(self, text: str) -> EmbeddingVector: ...

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]: ...


def tokenize(text: str) -> list[str]:
    return [t for t in TOKEN_SPLIT_RE.split(text.lower()) if t]


def _check_text(text: str) -> None:
    if not isinstance(text, str) or not text.strip():
        raise EmbedError("text is empty", code="EMPTY_INPUT")


class DeterministicEmbedder:
    """Bag-of-hashed-tokens embedder, L2-normalised.

    Tokens are the lowercased runs between non-alphanumerics; each is hashed
    (blake2b) into one of ``dim`` buckets. Text with no alphanumeric token is
    hashed as a single token so every non-empty input has unit norm.
    """

    def __init__(self, dim: int = DEFAULT_DIM, model_name: str = "deterministic-hash"):
        if dim <= 0:
            raise ValidationError("dim must be positive")
        self.dim = dim
        self.model_name = model_name

    def bucket(self, token: str) -> int:
        h = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(h, "little") % self.dim

    def embed_array(self, text: str) -> np.ndarray:
        _check_text(text)
        tokens = tokenize(text) or [text.strip().lower()]
        v = np.zeros(self.dim)
        for t in tokens:
            v[self.bucket(t)] += 1.0
        return v / math.sqrt(float(np.dot(v, v)))

    def embed_text(self, text: str) -> EmbeddingVector:
        return EmbeddingVector(tuple(self.embed_array(text).tolist()), self.dim)

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        if not texts:
            raise EmbedError("empty batch", code="EMPTY_INPUT")
        return [self.embed_text(t) for t in texts]


class RemoteEmbedder:
    """Client for ``POST {endpoint}/embed`` returning ``{"vectors": [[...]]}``."""

    def __init__(self, config: EmbedderConfig, transport: Optional[httpx.BaseTransport] = None, **http_kw):
        config.validate()
        self.config = config
        self.dim = config.dim
        self.model_name = config.model_name
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

    def embed_text(self, text: str) -> EmbeddingVector:
        return self.embed_batch([text])[0]

    def embed_batch(self, texts: Sequence[str]) -> list[EmbeddingVector]:
        cfg = self.config
        if not texts:
            raise EmbedError("empty batch", code="EMPTY_INPUT")
        if len(texts) > cfg.max_texts:
            raise EmbedError(f"{len(texts)} texts exceeds limit {cfg.max_texts}", code="BATCH_TOO_LARGE")
        for t in texts:
            _check_text(t)
            if len(t) > cfg.max_text_chars:
                raise EmbedError(f"text of {len(t)} chars exceeds {cfg.max_text_chars}", code="TEXT_TOO_LONG")
        # Every request must succeed before anything is returned.
        out: list[EmbeddingVector] = []
        for i in range(0, len(texts), cfg.max_batch):
            part = list(texts[i : i + cfg.max_batch])
            body = self._http.post("/embed", {"model": cfg.model_name, "texts": part})
            vectors = body.get("vectors") if isinstance(body, dict) else None
            if not isinstance(vectors, list) or len(vectors) != len(part):
                raise EmbedError("embed response has wrong shape", code="BAD_RESPONSE")
            for v in vectors:
                if len(v) != self.dim:
                    raise DimensionMismatch(self.dim, len(v))
                out.append(EmbeddingVector(tuple(v), self.dim))
        return out

    def probe(self) -> bool:
        try:
            self.embed_text("probe")
            return True
        except NewsRagError:
            return False


def make_embedder(config: EmbedderConfig, transport: Optional[httpx.BaseTransport] = None) -> Embedder:
    config.validate()
    if config.kind == "deterministic":
        return DeterministicEmbedder(config.dim)
    return RemoteEmbedder(config, transport=transport)
