"""Domain types shared by every stage of the pipeline.

All types are frozen dataclasses with a canonical JSON form (snake_case keys,
UTC timestamps as ``YYYY-MM-DDTHH:MM:SS[.ffffff]Z``).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Optional, Sequence

SUPPORTED_LANGUAGES = ("en", "es", "fr", "de", "pt")
LANGUAGE_NAMES = {
    "en": "English",
    "es": "Spanish",
    "fr": "French",
    "de": "German",
    "pt": "Portuguese",
}
DEFAULT_DIM = 768
DURATION_TOLERANCE_S = 1.0


class NewsRagError(Exception):
    """Base error carrying a machine-readable ``code``."""

    code = "ERROR"

    def __init__(self, message: str = "", *, code: Optional[str] = None, **details: Any):
        if code is not None:
            self.code = code
        self.details = details
        super().__init__(message or self.code)


class ValidationError(NewsRagError):
    code = "VALIDATION"


class DimensionMismatch(NewsRagError):
    code = "DIMENSION_MISMATCH"

    def __init__(self, expected: int, got: int):
        super().__init__(f"expected dim {expected}, got {got}", expected=expected, got=got)
        self.expected = expected
        self.got = got


class ZeroVector(NewsRagError):
    code = "ZERO_VECTOR"


class EndpointUnavailable(NewsRagError):
    code = "ENDPOINT_UNAVAILABLE"

    def __init__(self, status: Optional[int], retriable: bool, message: str = ""):
        super().__init__(
            message or f"endpoint unavailable (status={status}, retriable={retriable})",
            status=status,
            retriable=retriable,
        )
        self.status = status
        self.retriable = retriable


# -- timestamps ---------------------------------------------------------------

def parse_utc(value: str) -> datetime:
    """Parse an ISO-8601 timestamp; naive values are taken as UTC."""
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        return dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_utc(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).replace(tzinfo=None).isoformat() + "Z"


# -- types --------------------------------------------------------------------

@dataclass(frozen=True)
class RecordingMetadata:
    recording_id: str
    language: str
    source: str
    duration_s: float
    start_time: datetime
    end_time: datetime
    resolution: Optional[str] = None
    collection: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "recording_id": self.recording_id,
            "language": self.language,
            "source": self.source,
            "duration_s": self.duration_s,
            "resolution": self.resolution,
            "collection": self.collection,
            "start_time": format_utc(self.start_time),
            "end_time": format_utc(self.end_time),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RecordingMetadata":
        return cls(
            recording_id=d["recording_id"],
            language=d["language"],
            source=d["source"],
            duration_s=float(d["duration_s"]),
            start_time=parse_utc(d["start_time"]),
            end_time=parse_utc(d["end_time"]),
            resolution=d.get("resolution"),
            collection=d.get("collection"),
        )


@dataclass(frozen=True)
class Violation:
    code: str
    message: str


def validate_metadata(m: RecordingMetadata) -> list[Violation]:
    """Return every violated invariant; an empty list means the record is valid."""
    out: list[Violation] = []
    if not m.recording_id or not m.recording_id.strip():
        out.append(Violation("EMPTY_ID", "recording_id is empty"))
    if m.language not in SUPPORTED_LANGUAGES:
        out.append(Violation("UNSUPPORTED_LANGUAGE", f"language {m.language!r} not in {SUPPORTED_LANGUAGES}"))
    if not math.isfinite(m.duration_s) or m.duration_s < 0:
        out.append(Violation("NEGATIVE_DURATION", f"duration_s={m.duration_s}"))
    if m.start_time.tzinfo is None or m.end_time.tzinfo is None:
        out.append(Violation("NAIVE_TIMESTAMP", "timestamps must be timezone-aware UTC"))
    else:
        span = (m.end_time - m.start_time).total_seconds()
        if span < 0:
            out.append(Violation("END_BEFORE_START", "end_time precedes start_time"))
        elif math.isfinite(m.duration_s) and abs(span - m.duration_s) > DURATION_TOLERANCE_S:
            out.append(
                Violation("DURATION_MISMATCH", f"duration_s={m.duration_s} but timestamps span {span}s")
            )
    return out


@dataclass(frozen=True)
class Document:
    doc_id: str
    page_content: str
    metadata: RecordingMetadata

    def to_dict(self) -> dict:
        return {"doc_id": self.doc_id, "page_content": self.page_content, "metadata": self.metadata.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Document":
        return cls(d["doc_id"], d["page_content"], RecordingMetadata.from_dict(d["metadata"]))


def format_chunk_id(doc_id: str, ordinal: int) -> str:
    if "#" in doc_id:
        raise ValidationError(f"doc_id may not contain '#': {doc_id!r}")
    if ordinal < 0:
        raise ValidationError(f"negative ordinal {ordinal}")
    return f"{doc_id}#{ordinal}"


def parse_chunk_id(chunk_id: str) -> tuple[str, int]:
    doc_id, sep, ordinal = chunk_id.rpartition("#")
    if not sep or not (ordinal.isascii() and ordinal.isdigit()):
        raise ValidationError(f"malformed chunk_id {chunk_id!r}")
    return doc_id, int(ordinal)


@dataclass(frozen=True)
class DocumentChunk:
    chunk_id: str
    doc_id: str
    ordinal: int
    text: str
    char_span: tuple[int, int]
    metadata: RecordingMetadata

    def to_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "doc_id": self.doc_id,
            "ordinal": self.ordinal,
            "text": self.text,
            "char_span": list(self.char_span),
            "metadata": self.metadata.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DocumentChunk":
        start, end = d["char_span"]
        return cls(
            chunk_id=d["chunk_id"],
            doc_id=d["doc_id"],
            ordinal=int(d["ordinal"]),
            text=d["text"],
            char_span=(int(start), int(end)),
            metadata=RecordingMetadata.from_dict(d["metadata"]),
        )


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    dim: int = field(default=-1)

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if self.dim == -1:
            object.__setattr__(self, "dim", len(values))
        if self.dim <= 0:
            raise ValidationError("dim must be positive")
        if len(values) != self.dim:
            raise DimensionMismatch(self.dim, len(values))
        if not all(math.isfinite(v) for v in values):
            raise ValidationError("embedding contains non-finite values", code="NON_FINITE")

    @property
    def is_zero(self) -> bool:
        return not any(self.values)

    def to_dict(self) -> dict:
        return {"values": list(self.values), "dim": self.dim}

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingVector":
        return cls(tuple(d["values"]), int(d["dim"]))


@dataclass(frozen=True)
class QAPair:
    instruction: str
    output: str
    language: str
    input: str = ""
    source_recording_id: Optional[str] = None

    def validate(self) -> list[Violation]:
        out = []
        if not self.instruction.strip():
            out.append(Violation("EMPTY_INSTRUCTION", "instruction is empty"))
        if not self.output.strip():
            out.append(Violation("EMPTY_OUTPUT", "output is empty"))
        if self.language not in SUPPORTED_LANGUAGES:
            out.append(Violation("UNSUPPORTED_LANGUAGE", f"language {self.language!r}"))
        return out

    def to_dict(self) -> dict:
        return {
            "instruction": self.instruction,
            "input": self.input,
            "output": self.output,
            "language": self.language,
            "source_recording_id": self.source_recording_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QAPair":
        return cls(
            instruction=d["instruction"],
            output=d["output"],
            language=d.get("language", "en"),
            input=d.get("input") or "",
            source_recording_id=d.get("source_recording_id"),
        )


@dataclass(frozen=True)
class SearchHit:
    chunk_id: str
    score: float
    rank: int

    def to_dict(self) -> dict:
        return {"chunk_id": self.chunk_id, "score": self.score, "rank": self.rank}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchHit":
        return cls(d["chunk_id"], float(d["score"]), int(d["rank"]))


@dataclass(frozen=True)
class Answer:
    text: str
    sources: tuple[SearchHit, ...]
    query: str
    model_id: str
    template_version: str = ""
    generation: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "sources": [h.to_dict() for h in self.sources],
            "query": self.query,
            "model_id": self.model_id,
            "template_version": self.template_version,
            "generation": dict(self.generation),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Answer":
        return cls(
            text=d["text"],
            sources=tuple(SearchHit.from_dict(h) for h in d.get("sources", [])),
            query=d["query"],
            model_id=d["model_id"],
            template_version=d.get("template_version", ""),
            generation=d.get("generation") or {},
        )


def check_hits(hits: Sequence[SearchHit]) -> None:
    """Raise if hits are not sorted by score descending with ranks 1..n."""
    for i, h in enumerate(hits):
        if h.rank != i + 1:
            raise ValidationError(f"rank {h.rank} at position {i}")
        if i and hits[i - 1].score < h.score:
            raise ValidationError("hits not sorted by score")


def dumps(obj: Any) -> str:
    """Canonical JSON: sorted keys, no whitespace, UTF-8 kept literal."""
    if hasattr(obj, "to_dict"):
        obj = obj.to_dict()
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
