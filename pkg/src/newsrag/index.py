"""Exact cosine-similarity vector index with metadata filters and snapshots.

Search runs in two passes. A float32 BLAS pass scores every row; any row that
could still reach the top-k once float32 rounding error is accounted for is
then rescored in float64 with a kernel whose result depends only on the row
contents. Reported scores, ordering and ties are therefore exact and
reproducible, while the bulk of the work stays in single-precision BLAS.
"""
from __future__ import annotations

import hashlib
import io
import json
import math
import struct
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .core import (
    SUPPORTED_LANGUAGES,
    DimensionMismatch,
    DocumentChunk,
    EmbeddingVector,
    NewsRagError,
    SearchHit,
    ValidationError,
    ZeroVector,
)

MAGIC = b"NRVI"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIQ")
_LEN = struct.Struct("<I")
_DIGEST = 32
_U32 = 2.0**-24
_BLOCK_ROWS = 8192

VectorLike = Union[EmbeddingVector, Sequence[float], np.ndarray]


class SnapshotError(NewsRagError):
    code = "CORRUPT_SNAPSHOT"


class IndexEmpty(NewsRagError):
    code = "INDEX_EMPTY"


def _as_array(v: VectorLike) -> np.ndarray:
    if isinstance(v, EmbeddingVector):
        v = v.values
    return np.asarray(v, dtype=np.float64)


def cosine_similarity(a: VectorLike, b: VectorLike) -> float:
    """(a . b) / (|a| |b|), clipped to [-1, 1]."""
    x, y = _as_array(a), _as_array(b)
    if x.shape != y.shape:
        raise DimensionMismatch(x.shape[-1], y.shape[-1])
    nx, ny = math.sqrt(float(np.dot(x, x))), math.sqrt(float(np.dot(y, y)))
    if nx == 0.0 or ny == 0.0:
        raise ZeroVector("cosine of an all-zero vector is undefined")
    return min(1.0, max(-1.0, float(np.dot(x, y)) / (nx * ny)))


def _row_dots(rows: np.ndarray, q: np.ndarray) -> np.ndarray:
    # einsum reduces each contiguous row with the same inner loop, so equal
    # rows give bit-equal results wherever they sit in the matrix.
    return np.einsum("ij,j->i", np.ascontiguousarray(rows, dtype=np.float64), q)


@dataclass(frozen=True)
class IndexedChunk:
    chunk: DocumentChunk
    vector: EmbeddingVector


@dataclass(frozen=True)
class SearchFilter:
    language: Optional[str] = None
    source: Optional[str] = None
    time_range: Optional[tuple[datetime, datetime]] = None

    def __post_init__(self):
        if self.time_range is not None and self.time_range[0] > self.time_range[1]:
            raise ValidationError("time_range start after end", code="INVALID_FILTER")

    @property
    def is_empty(self) -> bool:
        return self.language is None and self.source is None and self.time_range is None

    def matches(self, chunk: DocumentChunk) -> bool:
        m = chunk.metadata
        if self.language is not None and m.language != self.language:
            return False
        if self.source is not None and m.source != self.source:
            return False
        if self.time_range is not None:
            lo, hi = self.time_range
            if m.start_time > hi or m.end_time < lo:
                return False
        return True


@dataclass(frozen=True)
class UpsertResult:
    inserted: int
    replaced: int


class RWLock:
    """Many readers or one writer; writers are not starved by a reader stream."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False
        self._waiting_writers = 0

    @contextmanager
    def read(self) -> Iterator[None]:
        with self._cond:
            while self._writer or self._waiting_writers:
                self._cond.wait()
            self._readers += 1
        try:
            yield
        finally:
            with self._cond:
                self._readers -= 1
                if not self._readers:
                    self._cond.notify_all()

    @contextmanager
    def write(self) -> Iterator[None]:
        with self._cond:
            self._waiting_writers += 1
            while self._writer or self._readers:
                self._cond.wait()
            self._waiting_writers -= 1
            self._writer = True
        try:
            yield
        finally:
            with self._cond:
                self._writer = False
                self._cond.notify_all()


class VectorIndex:
    def __init__(self, dim: int, capacity: int = 1024):
        if dim <= 0:
            raise ValidationError("dim must be positive")
        self.dim = dim
        self._n = 0
        self._vecs = np.zeros((max(1, capacity), dim), dtype=np.float32)
        self._norms = np.zeros(max(1, capacity))
        self._lang = np.full(max(1, capacity), -1, dtype=np.int8)
        self._src = np.zeros(max(1, capacity), dtype=np.int32)
        self._t0 = np.zeros(max(1, capacity))
        self._t1 = np.zeros(max(1, capacity))
        self._source_codes: dict[str, int] = {}
        self._chunks: list[DocumentChunk] = []
        self._pos: dict[str, int] = {}
        self._lock = RWLock()

    def __len__(self) -> int:
        return self._n

    def __contains__(self, chunk_id: str) -> bool:
        return chunk_id in self._pos

    def get(self, chunk_id: str) -> DocumentChunk:
        with self._lock.read():
            try:
                return self._chunks[self._pos[chunk_id]]
            except KeyError:
                raise KeyError(chunk_id) from None

    def vector(self, chunk_id: str) -> np.ndarray:
        with self._lock.read():
            return self._vecs[self._pos[chunk_id]].copy()

    def chunks(self) -> list[DocumentChunk]:
        with self._lock.read():
            return list(self._chunks)

    # -- writes ---------------------------------------------------------------

    def _grow(self, need: int) -> None:
        cap = self._vecs.shape[0]
        if need <= cap:
            return
        new = max(need, cap * 2)
        for name in ("_vecs", "_norms", "_lang", "_src", "_t0", "_t1"):
            old = getattr(self, name)
            arr = np.zeros((new,) + old.shape[1:], dtype=old.dtype)
            if name == "_lang":
                arr[:] = -1
            arr[: self._n] = old[: self._n]
            setattr(self, name, arr)

    def _prepare(self, matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        m = np.asarray(matrix)
        if m.ndim != 2 or m.shape[1] != self.dim:
            raise DimensionMismatch(self.dim, m.shape[-1] if m.ndim else 0)
        m32 = np.ascontiguousarray(m, dtype=np.float32)
        if not np.isfinite(m32).all():
            raise ValidationError("vector has non-finite entries", code="NON_FINITE")
        norms = np.empty(len(m32))
        for s in range(0, len(m32), _BLOCK_ROWS):
            b = m32[s : s + _BLOCK_ROWS].astype(np.float64)
            norms[s : s + _BLOCK_ROWS] = np.sqrt(np.einsum("ij,ij->i", b, b))
        if len(norms) and not norms.all():
            raise ZeroVector("cannot index an all-zero vector")
        return m32, norms

    def upsert(self, items: Iterable[IndexedChunk]) -> UpsertResult:
        items = list(items)
        for it in items:
            if it.vector.dim != self.dim:
                raise DimensionMismatch(self.dim, it.vector.dim)
        matrix = np.array([it.vector.values for it in items], dtype=np.float64).reshape(len(items), self.dim)
        return self.upsert_arrays([it.chunk for it in items], matrix)

    def upsert_arrays(self, chunks: Sequence[DocumentChunk], matrix: np.ndarray) -> UpsertResult:
        """Bulk upsert; the whole call is rejected if any row is invalid."""
        if len(chunks) != len(matrix):
            raise ValidationError("chunks and vectors differ in length")
        m32, norms = self._prepare(matrix)
        inserted = replaced = 0
        with self._lock.write():
            new_ids = {c.chunk_id for c in chunks if c.chunk_id not in self._pos}
            self._grow(self._n + len(new_ids))
            for c, v, nrm in zip(chunks, m32, norms):
                pos = self._pos.get(c.chunk_id)
                if pos is None:
                    pos = self._n
                    self._n += 1
                    self._pos[c.chunk_id] = pos
                    self._chunks.append(c)
                    inserted += 1
                else:
                    self._chunks[pos] = c
                    replaced += 1
                self._vecs[pos] = v
                self._norms[pos] = nrm
                meta = c.metadata
                self._lang[pos] = SUPPORTED_LANGUAGES.index(meta.language) if meta.language in SUPPORTED_LANGUAGES else -1
                self._src[pos] = self._source_codes.setdefault(meta.source, len(self._source_codes))
                self._t0[pos] = meta.start_time.timestamp()
                self._t1[pos] = meta.end_time.timestamp()
        return UpsertResult(inserted, replaced)

    # -- search ---------------------------------------------------------------

    def _mask(self, flt: Optional[SearchFilter]) -> Optional[np.ndarray]:
        if flt is None or flt.is_empty:
            return None
        n = self._n
        mask = np.ones(n, dtype=bool)
        if flt.language is not None:
            code = SUPPORTED_LANGUAGES.index(flt.language) if flt.language in SUPPORTED_LANGUAGES else -2
            mask &= self._lang[:n] == code
        if flt.source is not None:
            mask &= self._src[:n] == self._source_codes.get(flt.source, -1)
        if flt.time_range is not None:
            lo, hi = (t.timestamp() for t in flt.time_range)
            mask &= (self._t0[:n] <= hi) & (self._t1[:n] >= lo)
        return mask

    def search(self, query: VectorLike, k: int = 4, filter: Optional[SearchFilter] = None) -> list[SearchHit]:
        """Top-k chunks by cosine similarity; ties ordered by ascending chunk_id."""
        if not isinstance(k, int) or k <= 0:
            raise ValidationError(f"k must be a positive integer, got {k!r}")
        q = _as_array(query)
        if q.shape != (self.dim,):
            raise DimensionMismatch(self.dim, q.shape[-1] if q.ndim else 0)
        qnorm = math.sqrt(float(np.dot(q, q)))
        if qnorm == 0.0:
            raise ZeroVector("query vector is all-zero")
        qn = q / qnorm
        with self._lock.read():
            n = self._n
            if n == 0:
                return []
            mask = self._mask(filter)
            passing = n if mask is None else int(mask.sum())
            k = min(k, passing)
            if k == 0:
                return []
            coarse = (self._vecs[:n] @ qn.astype(np.float32)) / self._norms[:n]
            if mask is not None:
                coarse = np.where(mask, coarse, -np.inf)
            kth = np.partition(coarse, n - k)[n - k]
            # float32 dot error is at most ~dim*u relative to |a||q|; doubled for
            # the second side of the comparison, with headroom.
            margin = 4.0 * (self.dim + 4) * _U32
            cand = np.flatnonzero(coarse >= kth - 2 * margin)
            scores = _row_dots(self._vecs[cand], qn) / self._norms[cand]
            np.clip(scores, -1.0, 1.0, out=scores)
            ids = [self._chunks[i].chunk_id for i in cand]
        order = sorted(range(len(cand)), key=lambda j: (-scores[j], ids[j]))[:k]
        return [SearchHit(ids[j], float(scores[j]), r) for r, j in enumerate(order, start=1)]

    # -- persistence ----------------------------------------------------------

    def _records(self) -> Iterator[tuple[DocumentChunk, np.ndarray]]:
        for i in range(self._n):
            yield self._chunks[i], self._vecs[i]

    def save_snapshot(self, path: Union[str, Path]) -> None:
        digest = hashlib.sha256()
        tmp = Path(str(path) + ".tmp")
        with self._lock.read(), open(tmp, "wb") as f:

            def put(b: bytes) -> None:
                digest.update(b)
                f.write(b)

            put(_HEADER.pack(MAGIC, FORMAT_VERSION, self.dim, self._n))
            for chunk, vec in self._records():
                payload = json.dumps(chunk.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode()
                put(_LEN.pack(len(payload)))
                put(payload)
                put(vec.astype("<f4").tobytes())
            f.write(digest.digest())
        tmp.replace(path)

    @classmethod
    def load_snapshot(cls, path: Union[str, Path]) -> "VectorIndex":
        data = Path(path).read_bytes()
        if len(data) < _HEADER.size + _DIGEST:
            raise SnapshotError("file too short")
        magic, version, dim, count = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise SnapshotError("bad magic")
        if version != FORMAT_VERSION:
            raise NewsRagError(f"snapshot version {version} unsupported", code="VERSION_UNSUPPORTED")
        body, digest = data[:-_DIGEST], data[-_DIGEST:]
        if hashlib.sha256(body).digest() != digest:
            raise SnapshotError("checksum mismatch")
        if dim == 0:
            raise SnapshotError("zero dimension")
        buf = io.BytesIO(body)
        buf.seek(_HEADER.size)
        chunks = []
        matrix = np.empty((count, dim), dtype=np.float32)
        vec_bytes = 4 * dim
        try:
            for i in range(count):
                (length,) = _LEN.unpack(buf.read(_LEN.size))
                payload = buf.read(length)
                raw = buf.read(vec_bytes)
                if len(payload) != length or len(raw) != vec_bytes:
                    raise SnapshotError(f"record {i} truncated")
                chunks.append(DocumentChunk.from_dict(json.loads(payload)))
                matrix[i] = np.frombuffer(raw, dtype="<f4")
        except (struct.error, ValueError, KeyError) as e:
            raise SnapshotError(f"unreadable record: {e}") from e
        if buf.read(1):
            raise SnapshotError("trailing bytes after records")
        index = cls(dim, capacity=max(1, count))
        if count:
            index.upsert_arrays(chunks, matrix)
        return index

    def export_jsonl(self, path: Union[str, Path]) -> int:
        with self._lock.read(), open(path, "w", encoding="utf-8") as f:
            for chunk, vec in self._records():
                f.write(json.dumps({"chunk": chunk.to_dict(), "vector": vec.tolist()}, ensure_ascii=False) + "\n")
            return self._n

    @classmethod
    def import_jsonl(cls, path: Union[str, Path], dim: Optional[int] = None) -> "VectorIndex":
        chunks, rows = [], []
        with open(path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    chunks.append(DocumentChunk.from_dict(rec["chunk"]))
                    rows.append(rec["vector"])
                except (ValueError, KeyError, TypeError) as e:
                    raise ValidationError(f"{path}:{line_no}: {e}", code="BAD_RECORD") from e
        if dim is None:
            if not rows:
                raise ValidationError("cannot infer dimension from an empty export")
            dim = len(rows[0])
        index = cls(dim, capacity=max(1, len(rows)))
        if rows:
            index.upsert_arrays(chunks, np.asarray(rows, dtype=np.float64))
        return index


def build_index(chunks: Sequence[DocumentChunk], embedder, batch_size: int = 256) -> VectorIndex:
    index = VectorIndex(embedder.dim, capacity=max(1, len(chunks)))
    for s in range(0, len(chunks), batch_size):
        part = chunks[s : s + batch_size]
        vectors = embedder.embed_batch([c.text for c in part])
        index.upsert_arrays(part, np.array([v.values for v in vectors]))
    return index
