"""Character-window chunking with overlap and sentence-boundary preference."""
from __future__ import annotations

from dataclasses import dataclass

from .core import Document, DocumentChunk, ValidationError, format_chunk_id

SENTENCE_END = ".!?"


@dataclass(frozen=True)
class ChunkPolicy:
    max_chars: int = 1000
    overlap_chars: int = 200

    def validate(self) -> None:
        if self.max_chars <= 0 or self.overlap_chars < 0 or self.overlap_chars >= self.max_chars:
            raise ValidationError(
                f"invalid chunk policy max_chars={self.max_chars} overlap_chars={self.overlap_chars}",
                code="INVALID_POLICY",
            )

    def to_dict(self) -> dict:
        return {"max_chars": self.max_chars, "overlap_chars": self.overlap_chars}


def _find_cut(text: str, limit: int, floor: int) -> int:
    """Pick the end of the chunk whose window ends at ``limit``.

    The cut lies in (floor, limit]. Preference: just after a sentence end plus
    its trailing whitespace, then just after whitespace, then ``limit``.
    """
    n = len(text)
    for i in range(limit - 1, floor - 1, -1):
        if text[i] in SENTENCE_END and (i + 1 == n or text[i + 1].isspace()):
            p = i + 1
            while p < limit and text[p].isspace():
                p += 1
            return p
    for p in range(limit, floor, -1):
        if text[p - 1].isspace():
            return p
    return limit


def chunk_spans(text: str, policy: ChunkPolicy) -> list[tuple[int, int]]:
    policy.validate()
    n = len(text)
    if n == 0:
        raise ValidationError("cannot chunk empty text", code="EMPTY_CONTENT")
    spans = []
    start = 0
    while True:
        if n - start <= policy.max_chars:
            spans.append((start, n))
            return spans
        limit = start + policy.max_chars
        # cut > start + overlap keeps the next start strictly ahead of this one
        cut = _find_cut(text, limit, start + policy.overlap_chars)
        spans.append((start, cut))
        start = cut - policy.overlap_chars


def split(doc: Document, policy: ChunkPolicy = ChunkPolicy()) -> list[DocumentChunk]:
    """Split a document into ordered, overlapping chunks that cover it exactly."""
    if not doc.page_content.strip():
        raise ValidationError("document has no content", code="EMPTY_CONTENT")
    return [
        DocumentChunk(
            chunk_id=format_chunk_id(doc.doc_id, i),
            doc_id=doc.doc_id,
            ordinal=i,
            text=doc.page_content[s:e],
            char_span=(s, e),
            metadata=doc.metadata,
        )
        for i, (s, e) in enumerate(chunk_spans(doc.page_content, policy))
    ]


def reconstruct(chunks: list[DocumentChunk]) -> str:
    """Join chunk texts dropping each chunk's overlap with its predecessor."""
    parts = []
    prev_end = 0
    for c in chunks:
        s, e = c.char_span
        parts.append(c.text[max(0, prev_end - s):])
        prev_end = e
    return "".join(parts)
