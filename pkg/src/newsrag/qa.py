"""Self-Instruct style QA-pair extraction from transcripts.

The model is asked for numbered ``Q:``/``A:`` blocks::

    1. Q: Who won the primary?
    A: The senator won by four points.

Pairs are converted to Alpaca records (instruction/input/output) on write.
"""
from __future__ import annotations

import json
import logging
import random
import re
import string
import threading
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from .core import SUPPORTED_LANGUAGES, Document, NewsRagError, QAPair, ValidationError

log = logging.getLogger(__name__)

PROMPT_VERSION = "selfinstruct-qa/1"
MAX_PAIRS_PER_DOC = 50
DEDUP_RULE = "lowercase, strip punctuation, collapse whitespace; first occurrence wins"
# Evaluation split sizes of the released dataset.
DEFAULT_EVAL_SIZES = {"en": 399, "es": 60, "fr": 60, "de": 60, "pt": 60}
MANIFEST_COLUMNS = ("language", "fine_tune", "evaluation")

SELF_INSTRUCT_TEMPLATE = """You are building a question-answering dataset from a broadcast news transcript.

Read the transcript below and write exactly {n} question-answer pairs about it.

Requirements:
- Write exactly {n} pairs, numbered 1 to {n}.
- Questions must be answerable from the transcript alone.
- Answers must be detailed and conversational, in the voice of a news reporter.
- Together the pairs must cover the whole transcript, without repetition: no two questions may ask the same thing.
- Write questions and answers in the language of the transcript ({language}).
- Use exactly this format and nothing else:

1. Q: <question>
A: <answer>

2. Q: <question>
A: <answer>

Transcript:
\"\"\"
{transcript}
\"\"\"
"""

Q_LINE_RE = re.compile(r"^\s*(\d+)[.)]\s*Q:\s?(.*)$")
A_LINE_RE = re.compile(r"^\s*A:\s?(.*)$")
_PUNCT = str.maketrans({c: " " for c in string.punctuation + "¿¡«»“”‘’"})


class QAError(NewsRagError):
    pass


@dataclass(frozen=True)
class GenerationJob:
    document: Document
    target_pairs: int = 10
    prompt_version: str = PROMPT_VERSION
    model_id: str = ""

    def __post_init__(self):
        if not 0 < self.target_pairs <= MAX_PAIRS_PER_DOC:
            raise ValidationError(f"target_pairs must be in 1..{MAX_PAIRS_PER_DOC}", code="INVALID_JOB")


def build_selfinstruct_prompt(doc: Document, n: int = 10) -> str:
    if not doc.page_content.strip():
        raise QAError("document is empty", code="EMPTY_DOCUMENT")
    return SELF_INSTRUCT_TEMPLATE.format(n=n, language=doc.metadata.language, transcript=doc.page_content)


def render_pairs(pairs: Sequence[QAPair]) -> str:
    """Inverse of the response grammar; used by tests and fixtures."""
    return "\n\n".join(f"{i}. Q: {p.instruction}\nA: {p.output}" for i, p in enumerate(pairs, start=1))


@dataclass
class ParsedResponse:
    pairs: list[QAPair]
    dropped: int = 0


def parse_qa_response(raw: str, doc: Document) -> ParsedResponse:
    """Extract well-formed Q/A blocks; incomplete blocks are dropped and counted."""
    blocks: list[dict] = []
    for line in (raw or "").splitlines():
        m = Q_LINE_RE.match(line)
        if m:
            blocks.append({"q": [m.group(2)], "a": None})
            continue
        if not blocks:
            continue
        cur = blocks[-1]
        m = A_LINE_RE.match(line)
        if m and cur["a"] is None:
            cur["a"] = [m.group(1)]
        elif cur["a"] is None:
            cur["q"].append(line)
        else:
            cur["a"].append(line)

    pairs, dropped = [], 0
    for b in blocks:
        q = "\n".join(b["q"]).strip()
        a = "\n".join(b["a"]).strip() if b["a"] is not None else ""
        if not q or not a:
            dropped += 1
            continue
        pairs.append(
            QAPair(
                instruction=q,
                output=a,
                language=doc.metadata.language,
                source_recording_id=doc.metadata.recording_id,
            )
        )
    if not pairs:
        raise QAError("no well-formed Q/A blocks in response", code="NO_PAIRS_FOUND", dropped=dropped)
    return ParsedResponse(pairs, dropped)


def normalize_instruction(text: str) -> str:
    return " ".join(text.lower().translate(_PUNCT).split())


def dedup_pairs(pairs: Iterable[QAPair]) -> list[QAPair]:
    seen: set[str] = set()
    out = []
    for p in pairs:
        key = normalize_instruction(p.instruction)
        if key in seen:
            continue
        seen.add(key)
        out.append(p)
    return out


@dataclass
class GenerationReport:
    pairs: list[QAPair] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    dropped_blocks: int = 0
    duplicates_removed: int = 0


def generate_pairs(
    documents: Sequence[Document],
    client,
    target_pairs: int = 10,
    workers: int = 4,
) -> GenerationReport:
    """Run extraction over a corpus. Per-document failures are logged and skipped."""
    jobs = [GenerationJob(d, target_pairs, model_id=getattr(client, "model_id", "")) for d in documents]
    results: list[Optional[ParsedResponse]] = [None] * len(jobs)
    report = GenerationReport()
    lock = threading.Lock()

    def run(i: int) -> None:
        job = jobs[i]
        try:
            raw = client.complete(build_selfinstruct_prompt(job.document, job.target_pairs))
            results[i] = parse_qa_response(raw, job.document)
        except NewsRagError as e:
            log.warning("qa extraction failed for %s: %s", job.document.doc_id, e)
            with lock:
                report.failures.append({"doc_id": job.document.doc_id, "code": e.code, "message": str(e)})

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        list(pool.map(run, range(len(jobs))))

    collected = []
    for r in results:
        if r is not None:
            collected.extend(r.pairs[:target_pairs])
            report.dropped_blocks += r.dropped
    report.pairs = dedup_pairs(collected)
    report.duplicates_removed = len(collected) - len(report.pairs)
    report.failures.sort(key=lambda f: f["doc_id"])
    return report


def split_eval(
    pairs: Sequence[QAPair], eval_sizes: Optional[dict] = None, seed: int = 0
) -> tuple[list[QAPair], list[QAPair]]:
    """Hold out a fixed number of pairs per language for evaluation."""
    sizes = DEFAULT_EVAL_SIZES if eval_sizes is None else eval_sizes
    by_lang: dict[str, list[int]] = defaultdict(list)
    for i, p in enumerate(pairs):
        by_lang[p.language].append(i)
    rng = random.Random(seed)
    held: set[int] = set()
    for lang in sorted(by_lang):
        idx = by_lang[lang]
        held.update(rng.sample(idx, min(sizes.get(lang, 0), len(idx))))
    train = [p for i, p in enumerate(pairs) if i not in held]
    evaluation = [p for i, p in enumerate(pairs) if i in held]
    return train, evaluation


def build_manifest(
    train: Sequence[QAPair], evaluation: Sequence[QAPair], settings: Optional[dict] = None
) -> dict:
    """Pair counts per language with the fine-tune / evaluation columns."""
    tc = Counter(p.language for p in train)
    ec = Counter(p.language for p in evaluation)
    rows = [
        {"language": lang, "fine_tune": tc.get(lang, 0), "evaluation": ec.get(lang, 0)}
        for lang in SUPPORTED_LANGUAGES
        if tc.get(lang) or ec.get(lang)
    ]
    return {
        "columns": list(MANIFEST_COLUMNS),
        "rows": rows,
        "settings": {"prompt_version": PROMPT_VERSION, "dedup": DEDUP_RULE, **(settings or {})},
    }


def write_alpaca_jsonl(pairs: Iterable[QAPair], path: Union[str, Path]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for p in pairs:
            f.write(json.dumps(p.to_dict(), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_alpaca_jsonl(path: Union[str, Path]) -> list[QAPair]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                out.append(QAPair.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as e:
                raise ValidationError(f"{path}:{line_no}: {e}", code="BAD_RECORD") from e
    return out
