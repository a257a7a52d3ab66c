"""Transcript parsing and corpus ingestion.

File grammar::

    ID: <recording id>
    LAN: <iso code>
    SRC: <channel>
    START: <utc timestamp>
    [END: ..., DUR: <seconds>, RES: ..., COL: ...]
    HH:MM:SS.mmm|HH:MM:SS.mmm|caption text
    ...

Caption timestamps are offsets from START. Blank lines are ignored anywhere.
"""
from __future__ import annotations

import json
import logging
import re
import threading
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path
from typing import Iterable, Optional, Union

from .core import (
    LANGUAGE_NAMES,
    SUPPORTED_LANGUAGES,
    Document,
    NewsRagError,
    RecordingMetadata,
    parse_utc,
    validate_metadata,
)

log = logging.getLogger(__name__)

HEADER_RE = re.compile(r"^([A-Za-z][A-Za-z_]*):\s*(.*?)\s*$")
CAPTION_RE = re.compile(
    r"^(\d{2,}):([0-5]\d):([0-5]\d)\.(\d{3})\|(\d{2,}):([0-5]\d):([0-5]\d)\.(\d{3})\|(.*)$"
)
SPEAKER_RE = re.compile(r">{2,3}\s*")
# bracketed directions with no lowercase letters: [APPLAUSE], [ CROSSTALK ]
STAGE_RE = re.compile(r"\[[^\]a-z]*\]")
SPACE_RE = re.compile(r"\s+")

HEADER_ALIASES = {
    "ID": "recording_id",
    "RECORDING_ID": "recording_id",
    "LAN": "language",
    "LANG": "language",
    "LANGUAGE": "language",
    "SRC": "source",
    "SOURCE": "source",
    "START": "start_time",
    "END": "end_time",
    "DUR": "duration_s",
    "DURATION": "duration_s",
    "RES": "resolution",
    "RESOLUTION": "resolution",
    "COL": "collection",
    "COLLECTION": "collection",
}
REQUIRED_FIELDS = ("recording_id", "language", "source", "start_time")
MANIFEST_COLUMNS = ("language", "channels", "recordings", "hours")
HOURS_DEFINITION = "sum of recording duration_s / 3600"


class TranscriptError(NewsRagError):
    code = "TRANSCRIPT"

    def __init__(self, code: str, message: str, line_no: Optional[int] = None, name: Optional[str] = None):
        super().__init__(message, code=code, line_no=line_no, name=name)
        self.line_no = line_no
        self.name = name


def _offset(h: str, m: str, s: str, ms: str) -> float:
    return int(h) * 3600 + int(m) * 60 + int(s) + int(ms) / 1000


def clean_caption(text: str) -> str:
    text = SPEAKER_RE.sub(" ", text)
    text = STAGE_RE.sub(" ", text)
    return SPACE_RE.sub(" ", text).strip()


def parse_transcript(raw: Union[bytes, str], doc_id: Optional[str] = None) -> Document:
    """Parse one transcript into a Document (one per recording)."""
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise TranscriptError("INVALID_UTF8", f"invalid UTF-8 at byte {e.start}") from e
    if raw.startswith("\ufeff"):
        raw = raw[1:]

    header: dict[str, str] = {}
    captions: list[tuple[float, float, str]] = []
    for line_no, line in enumerate(raw.splitlines(), start=1):
        if not line.strip():
            continue
        m = CAPTION_RE.match(line)
        if m:
            g = m.groups()
            start, end = _offset(*g[0:4]), _offset(*g[4:8])
            if end < start:
                raise TranscriptError("MALFORMED_LINE", f"line {line_no}: caption ends before it starts", line_no)
            captions.append((start, end, g[8]))
            continue
        m = HEADER_RE.match(line)
        if m and not captions:
            key = HEADER_ALIASES.get(m.group(1).upper())
            if key is not None:
                header[key] = m.group(2)
                continue
        raise TranscriptError("MALFORMED_LINE", f"line {line_no}: {line[:60]!r}", line_no)

    for name in REQUIRED_FIELDS:
        if not header.get(name):
            raise TranscriptError("MISSING_HEADER_FIELD", f"missing header field {name}", name=name)

    # Timestamp order, text as the final key so identical timings stay order independent.
    captions.sort()
    texts = [t for t in (clean_caption(c[2]) for c in captions) if t]
    if not texts:
        raise TranscriptError("EMPTY_TRANSCRIPT", "no caption text survives stripping")

    try:
        start_time = parse_utc(header["start_time"])
        if "end_time" in header:
            end_time = parse_utc(header["end_time"])
        else:
            end_time = start_time + timedelta(seconds=max(c[1] for c in captions))
        if "duration_s" in header:
            duration = float(header["duration_s"])
        else:
            duration = (end_time - start_time).total_seconds()
    except ValueError as e:
        raise TranscriptError("BAD_HEADER_VALUE", str(e)) from e

    meta = RecordingMetadata(
        recording_id=header["recording_id"],
        language=header["language"].lower(),
        source=header["source"],
        duration_s=duration,
        start_time=start_time,
        end_time=end_time,
        resolution=header.get("resolution") or None,
        collection=header.get("collection") or None,
    )
    return Document(doc_id or meta.recording_id, " ".join(texts), meta)


@dataclass
class IngestError:
    path: str
    code: str
    message: str
    line_no: Optional[int] = None

    def to_dict(self) -> dict:
        return {"path": self.path, "code": self.code, "message": self.message, "line_no": self.line_no}


@dataclass
class IngestReport:
    documents: list[Document] = field(default_factory=list)
    errors: list[IngestError] = field(default_factory=list)
    skipped: int = 0
    _parsed: list = field(default_factory=list, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def add(self, doc: Optional[Document] = None, error: Optional[IngestError] = None,
            skipped: bool = False, path: str = ""):
        with self._lock:
            if doc is not None:
                self._parsed.append((doc.doc_id, path, doc))
            if error is not None:
                self.errors.append(error)
            if skipped:
                self.skipped += 1

    def manifest(self) -> dict:
        return build_manifest(self.documents)

    def language_counts(self) -> dict[str, int]:
        counts: dict[str, int] = defaultdict(int)
        for d in self.documents:
            counts[d.metadata.language] += 1
        return dict(counts)


def build_manifest(documents: Iterable[Document]) -> dict:
    """Per-language corpus statistics with the raw-data table's columns."""
    channels: dict[str, set] = defaultdict(set)
    recordings: dict[str, int] = defaultdict(int)
    seconds: dict[str, float] = defaultdict(float)
    for d in documents:
        lang = d.metadata.language
        channels[lang].add(d.metadata.source)
        recordings[lang] += 1
        seconds[lang] += d.metadata.duration_s
    rows = [
        {
            "language": lang,
            "channels": len(channels[lang]),
            "recordings": recordings[lang],
            "hours": round(seconds[lang] / 3600, 6),
        }
        for lang in SUPPORTED_LANGUAGES
        if recordings.get(lang)
    ]
    return {"columns": list(MANIFEST_COLUMNS), "hours_definition": HOURS_DEFINITION, "rows": rows}


def render_manifest(manifest: dict) -> str:
    lines = ["Language | #Channels | #Recordings | #Hours"]
    for r in manifest["rows"]:
        name = LANGUAGE_NAMES.get(r["language"], r["language"])
        lines.append(f"{name} | {r['channels']} | {r['recordings']} | {r['hours']:.2f}")
    return "\n".join(lines)


def _parse_file(path: Path, root: Path, language: Optional[str], report: IngestReport) -> None:
    rel = str(path.relative_to(root))
    try:
        doc = parse_transcript(path.read_bytes())
    except TranscriptError as e:
        report.add(error=IngestError(rel, e.code, str(e), e.line_no))
        return
    except OSError as e:
        report.add(error=IngestError(rel, "IO_ERROR", str(e)))
        return
    violations = validate_metadata(doc.metadata)
    if violations:
        v = violations[0]
        report.add(error=IngestError(rel, v.code, "; ".join(x.message for x in violations)))
        return
    if language and doc.metadata.language != language:
        report.add(skipped=True)
        return
    report.add(doc=doc, path=rel)


def ingest_directory(
    root: Union[str, Path],
    language: Optional[str] = None,
    pattern: str = "*",
    workers: int = 4,
) -> IngestReport:
    """Parse every transcript below ``root``; per-file failures are recorded, not raised."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"not a directory: {root}")
    paths = sorted(p for p in root.rglob(pattern) if p.is_file() and not p.name.startswith("."))
    report = IngestReport()
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        list(pool.map(lambda p: _parse_file(p, root, language, report), paths))

    # Deterministic output regardless of completion order; enforce corpus-level id uniqueness.
    report._parsed.sort(key=lambda t: (t[0], t[1]))
    seen: set[str] = set()
    unique = []
    for _, rel, d in report._parsed:
        if d.metadata.recording_id in seen:
            report.errors.append(
                IngestError(rel, "DUPLICATE_RECORDING_ID", f"recording_id {d.metadata.recording_id!r} repeated")
            )
            continue
        seen.add(d.metadata.recording_id)
        unique.append(d)
    report.documents = unique
    report.errors.sort(key=lambda e: (e.path, e.line_no or 0, e.code))
    log.info("ingested %d documents, %d errors, %d skipped", len(unique), len(report.errors), report.skipped)
    return report


def write_documents(docs: Iterable[Document], path: Union[str, Path]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for d in docs:
            f.write(json.dumps(d.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
            n += 1
    return n


def read_documents(path: Union[str, Path]) -> list[Document]:
    with open(path, encoding="utf-8") as f:
        return [Document.from_dict(json.loads(line)) for line in f if line.strip()]
