"""Retrieval and generation metrics: context recall/precision, answer correctness/relevance.

Judgments (statement splitting, attribution, context relevance, question
generation) come from a judge. ``LexicalJudge`` is offline and deterministic;
``LlmJudge`` asks a chat endpoint.
"""
from __future__ import annotations

import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .core import NewsRagError, QAPair, ValidationError
from .embedder import tokenize
from .index import cosine_similarity

log = logging.getLogger(__name__)

METRICS = ("CR", "CP", "AC", "AR")
REPORT_COLUMNS = ("model", "setting", "CR", "CP", "AC", "AR")
SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")
MIN_STATEMENT_TOKENS = 3

STOPWORDS = frozenset(
    """
    a an the and or but if of to in on at by for with from as is are was were be been being am
    it its this that these those there here he she they them his her their we us our you your i me my
    do does did done has have had not no so than then too very can could will would shall should may might
    must about into over under after before also just what which who whom whose when where why how
    el la los las un una y o de del en que por para con es son fue al lo se su sus
    le les des du et ou en est sont une dans pour par sur au aux ce qui que
    der die das den dem des ein eine und oder ist sind war mit von zu im auf für nicht
    o os as um uma e ou do da dos das em no na que por para com é são foi
    """.split()
)


class EvalError(NewsRagError):
    pass


@dataclass(frozen=True)
class EvalSample:
    question: str
    ground_truth: str
    retrieved_contexts: tuple[str, ...]
    generated_answer: str

    def __post_init__(self):
        object.__setattr__(self, "retrieved_contexts", tuple(self.retrieved_contexts))


@dataclass
class JudgeConfig:
    kind: str = "lexical"  # or "llm"
    endpoint: Optional[str] = None
    model_id: str = ""
    overlap_threshold: float = 0.6
    statement_splitter: str = "sentence"  # or "llm"
    answer_weight: float = 0.75
    num_questions: int = 3

    def validate(self) -> None:
        if self.kind not in ("lexical", "llm"):
            raise ValidationError(f"unknown judge kind {self.kind!r}")
        if self.statement_splitter not in ("sentence", "llm"):
            raise ValidationError(f"unknown statement splitter {self.statement_splitter!r}")
        if not 0 < self.overlap_threshold <= 1:
            raise ValidationError("overlap_threshold must be in (0, 1]")
        if not 0 <= self.answer_weight <= 1:
            raise ValidationError("answer_weight must be in [0, 1]")
        if self.num_questions <= 0:
            raise ValidationError("num_questions must be positive")
        if self.kind == "lexical" and self.statement_splitter == "llm":
            raise ValidationError("lexical judge cannot use the llm statement splitter")

    def provenance(self) -> dict:
        return {
            "judge": self.kind,
            "judge_model": self.model_id or None,
            "tau": self.overlap_threshold,
            "w": self.answer_weight,
            "M": self.num_questions,
            "statement_splitter": self.statement_splitter,
        }


def content_tokens(text: str) -> list[str]:
    tokens = tokenize(text)
    kept = [t for t in tokens if t not in STOPWORDS]
    return kept or tokens


def token_recall(statement: str, text: str) -> float:
    """Share of the statement's distinct content tokens that occur in ``text``."""
    st = set(content_tokens(statement))
    if not st:
        return 0.0
    return len(st & set(tokenize(text))) / len(st)


def sentence_statements(text: str) -> list[str]:
    if not isinstance(text, str) or not text.strip():
        raise EvalError("text is empty", code="EMPTY_TEXT")
    parts = (p.strip() for p in SENTENCE_SPLIT_RE.split(text.strip()))
    return [p for p in parts if len(tokenize(p)) >= MIN_STATEMENT_TOKENS]


class LexicalJudge:
    kind = "lexical"
    can_generate_questions = False

    def __init__(self, config: Optional[JudgeConfig] = None):
        self.config = config or JudgeConfig()
        self.config.validate()

    def split_statements(self, text: str) -> list[str]:
        return sentence_statements(text)

    def supports(self, statement: str, text: str) -> bool:
        return token_recall(statement, text) >= self.config.overlap_threshold

    def context_relevant(self, context: str, question: str, gt_statements: Sequence[str]) -> bool:
        return any(self.supports(s, context) for s in gt_statements)

    def generate_questions(self, answer: str, m: int) -> list[str]:
        raise EvalError("lexical judge cannot generate questions", code="UNSUPPORTED")


_YES_RE = re.compile(r"^\W*(yes|true|1)\b", re.IGNORECASE)
_BULLET_RE = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s*")


class LlmJudge:
    """Delegates judgments to a chat endpoint; falls back to lexical splitting when configured."""

    kind = "llm"
    can_generate_questions = True

    def __init__(self, client, config: Optional[JudgeConfig] = None):
        self.config = config or JudgeConfig(kind="llm", statement_splitter="llm")
        self.config.validate()
        self.client = client

    def _ask(self, prompt: str) -> str:
        return self.client.complete(prompt, temperature=0.0)

    @staticmethod
    def _lines(text: str) -> list[str]:
        return [s for s in (_BULLET_RE.sub("", line).strip() for line in text.splitlines()) if s]

    def split_statements(self, text: str) -> list[str]:
        if self.config.statement_splitter == "sentence":
            return sentence_statements(text)
        if not text.strip():
            raise EvalError("text is empty", code="EMPTY_TEXT")
        out = self._ask(
            "Break the following text into short, self-contained factual statements. "
            "Write one statement per line and nothing else.\n\nText:\n" + text
        )
        return self._lines(out)

    def supports(self, statement: str, text: str) -> bool:
        out = self._ask(
            "Can the statement be inferred from the context? Reply with yes or no only.\n\n"
            f"Context:\n{text}\n\nStatement:\n{statement}"
        )
        return bool(_YES_RE.match(out))

    def context_relevant(self, context: str, question: str, gt_statements: Sequence[str]) -> bool:
        out = self._ask(
            "Is the context useful for arriving at the given answer to the question? Reply with yes or no only.\n\n"
            f"Question:\n{question}\n\nAnswer:\n{' '.join(gt_statements)}\n\nContext:\n{context}"
        )
        return bool(_YES_RE.match(out))

    def generate_questions(self, answer: str, m: int) -> list[str]:
        out = self._ask(
            f"Write {m} different questions that the following answer responds to. "
            "One question per line, nothing else.\n\nAnswer:\n" + answer
        )
        return self._lines(out)[:m]


def make_judge(config: JudgeConfig, client=None):
    config.validate()
    if config.kind == "lexical":
        return LexicalJudge(config)
    if client is None:
        raise ValidationError("llm judge needs a chat client")
    return LlmJudge(client, config)


def split_statements(text: str, judge) -> list[str]:
    return judge.split_statements(text)


def _statements(text: str, judge) -> list[str]:
    # A text whose sentences are all too short still counts as one claim.
    return judge.split_statements(text) or [text.strip()]


def _clip01(x: float) -> float:
    return min(1.0, max(0.0, x))


def _semantic(embedder, a: str, b: str) -> float:
    return max(0.0, cosine_similarity(embedder.embed_text(a), embedder.embed_text(b)))


# -- metrics ------------------------------------------------------------------

def context_recall(sample: EvalSample, judge) -> float:
    if not sample.ground_truth.strip():
        raise EvalError("ground truth is empty", code="EMPTY_GROUND_TRUTH")
    if not sample.retrieved_contexts:
        raise EvalError("no retrieved contexts", code="NO_CONTEXTS")
    statements = _statements(sample.ground_truth, judge)
    hit = sum(any(judge.supports(s, c) for c in sample.retrieved_contexts) for s in statements)
    return hit / len(statements)


def context_precision_from_flags(flags: Sequence[int]) -> float:
    """Mean of precision@k over the relevant ranks k."""
    total = 0.0
    relevant = 0
    for k, v in enumerate(flags, start=1):
        if v:
            relevant += 1
            total += relevant / k
    return total / max(1, relevant)


def context_precision(sample: EvalSample, judge) -> float:
    if not sample.retrieved_contexts:
        raise EvalError("no retrieved contexts", code="NO_CONTEXTS")
    gt = _statements(sample.ground_truth, judge) if sample.ground_truth.strip() else []
    flags = [int(judge.context_relevant(c, sample.question, gt)) for c in sample.retrieved_contexts]
    return context_precision_from_flags(flags)


def answer_correctness_from_counts(tp: int, fp: int, fn: int, semantic: float, weight: float = 0.75) -> float:
    denom = 2 * tp + fp + fn
    f1 = 2 * tp / denom if denom else 0.0
    return _clip01(weight * f1 + (1 - weight) * max(0.0, semantic))


def statement_counts(sample: EvalSample, judge) -> tuple[int, int, int]:
    answer_st = _statements(sample.generated_answer, judge)
    gt_st = _statements(sample.ground_truth, judge)
    tp = sum(judge.supports(s, sample.ground_truth) for s in answer_st)
    fn = sum(not judge.supports(s, sample.generated_answer) for s in gt_st)
    return tp, len(answer_st) - tp, fn


def answer_correctness(sample: EvalSample, judge, embedder, weight: Optional[float] = None) -> float:
    if not sample.generated_answer.strip() or not sample.ground_truth.strip():
        raise EvalError("answer or ground truth is empty", code="EMPTY_INPUT")
    w = judge.config.answer_weight if weight is None else weight
    tp, fp, fn = statement_counts(sample, judge)
    return answer_correctness_from_counts(tp, fp, fn, _semantic(embedder, sample.generated_answer, sample.ground_truth), w)


def answer_relevance(sample: EvalSample, judge, embedder, m: Optional[int] = None) -> float:
    """Question/answer similarity; lexical judges compare the question to the answer directly."""
    if not sample.generated_answer.strip():
        raise EvalError("generated answer is empty", code="EMPTY_ANSWER")
    if not judge.can_generate_questions:
        return _semantic(embedder, sample.question, sample.generated_answer)
    questions = judge.generate_questions(sample.generated_answer, m or judge.config.num_questions)
    if not questions:
        return 0.0
    q = embedder.embed_text(sample.question)
    return sum(max(0.0, cosine_similarity(q, embedder.embed_text(g))) for g in questions) / len(questions)


def score_sample(sample: EvalSample, judge, embedder, use_rag: bool = True) -> dict:
    out = {
        "CR": context_recall(sample, judge) if use_rag and sample.retrieved_contexts else None,
        "CP": context_precision(sample, judge) if use_rag and sample.retrieved_contexts else None,
        "AC": answer_correctness(sample, judge, embedder),
        "AR": answer_relevance(sample, judge, embedder),
    }
    return out


# -- runner -------------------------------------------------------------------

@dataclass
class EvalReport:
    model: str
    setting: str
    samples: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def summary(self) -> dict:
        row: dict = {"model": self.model, "setting": self.setting}
        for m in METRICS:
            vals = [s["scores"][m] for s in self.samples if s["scores"].get(m) is not None]
            row[m] = math.fsum(vals) / len(vals) if vals else None
        return row

    def to_dict(self) -> dict:
        return {
            "columns": list(REPORT_COLUMNS),
            "summary": self.summary(),
            "samples": self.samples,
            "failures": self.failures,
            "provenance": self.provenance,
        }

    def write(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def render_table(rows: Sequence[dict]) -> str:
    """Text table in (Model, Setting, CR, CP, AC, AR) order; missing metrics print as '-'."""
    header = ["Model", "Setting", *METRICS]
    body = [
        [r["model"], r["setting"], *("-" if r.get(m) is None else f"{r[m]:.4f}" for m in METRICS)]
        for r in rows
    ]
    widths = [max(len(x[i]) for x in [header, *body]) for i in range(len(header))]

    def line(cells):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"

    sep = "|" + "|".join("-" * (w + 2) for w in widths) + "|"
    return "\n".join([line(header), sep, *(line(b) for b in body)])


def run_eval(
    eval_set: Sequence[QAPair],
    engine,
    judge,
    embedder,
    cfg=None,
    model: Optional[str] = None,
    setting: Optional[str] = None,
    workers: int = 1,
    extra_provenance: Optional[dict] = None,
) -> EvalReport:
    """Answer every eval question through ``engine`` and score it.

    ``engine`` needs ``answer_with_contexts(question, cfg) -> (Answer, [context text])``.
    """
    if not eval_set:
        raise ValidationError("eval set is empty")
    cfg = cfg if cfg is not None else engine.config
    use_rag = cfg.use_rag

    def one(i: int):
        pair = eval_set[i]
        try:
            answer, contexts = engine.answer_with_contexts(pair.instruction, cfg)
            sample = EvalSample(pair.instruction, pair.output, tuple(contexts), answer.text)
            scores = score_sample(sample, judge, embedder, use_rag=use_rag)
        except NewsRagError as e:
            return None, {"position": i, "question": pair.instruction, "code": e.code, "message": str(e)}
        return {
            "position": i,
            "question": pair.instruction,
            "ground_truth": pair.output,
            "answer": answer.text,
            "sources": [h.chunk_id for h in answer.sources],
            "scores": scores,
        }, None

    if workers <= 1:
        results = [one(i) for i in range(len(eval_set))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(len(eval_set))))

    model_id = model or getattr(getattr(engine, "llm", None), "model_id", "") or "unknown"
    provenance = {
        **judge.config.provenance(),
        "answer_relevance_mode": "generated-questions" if judge.can_generate_questions else "lexical-fallback",
        "degraded": not judge.can_generate_questions,
        "model_id": model_id,
        "k": cfg.k,
        "use_rag": use_rag,
        "template_version": cfg.template_version,
        "context_layout": "contexts before Input:, prefixed 'Context [i]: '",
        **(extra_provenance or {}),
    }
    return EvalReport(
        model=model_id,
        setting=setting or ("rag" if use_rag else "no rag"),
        samples=[s for s, _ in results if s is not None],
        failures=[f for _, f in results if f is not None],
        provenance=provenance,
    )
