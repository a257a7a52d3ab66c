"""Question answering: embed, retrieve top-k, render prompt, generate."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .core import Answer, NewsRagError, SearchHit, ValidationError
from .index import IndexEmpty, SearchFilter, VectorIndex
from .prompts import MAX_CONTEXTS, TEMPLATE_VERSION, render_plain, render_with_context

log = logging.getLogger(__name__)


@dataclass
class EngineConfig:
    k: int = 4
    filter: SearchFilter = field(default_factory=SearchFilter)
    use_rag: bool = True
    template_version: str = TEMPLATE_VERSION
    max_prompt_chars: int = 12_000

    def validate(self) -> None:
        if self.k <= 0:
            raise ValidationError("k must be positive")
        if self.k > MAX_CONTEXTS:
            raise ValidationError(f"k={self.k} exceeds the template's {MAX_CONTEXTS} context slots")
        if self.template_version != TEMPLATE_VERSION:
            raise ValidationError(f"unknown template version {self.template_version!r}")


@dataclass
class BatchError:
    position: int
    question: str
    code: str
    message: str

    def to_dict(self) -> dict:
        return {"position": self.position, "question": self.question, "code": self.code, "message": self.message}


@dataclass
class Retrieval:
    hits: list[SearchHit]
    contexts: list[str]
    prompt: str


class RagEngine:
    """Stateless per request; the index is only read."""

    def __init__(self, index: Optional[VectorIndex], embedder, llm, config: Optional[EngineConfig] = None):
        self.index = index
        self.embedder = embedder
        self.llm = llm
        self.config = config or EngineConfig()

    def retrieve(self, question: str, cfg: Optional[EngineConfig] = None) -> Retrieval:
        cfg = cfg or self.config
        cfg.validate()
        if not isinstance(question, str) or not question.strip():
            raise ValidationError("question is empty", code="EMPTY_QUESTION")
        if not cfg.use_rag:
            return Retrieval([], [], render_plain(question))
        if self.index is None or len(self.index) == 0:
            raise IndexEmpty("retrieval requested but the index has no chunks")
        qvec = self.embedder.embed_text(question)
        hits = self.index.search(qvec, k=cfg.k, filter=cfg.filter)
        contexts = [self.index.get(h.chunk_id).text for h in hits]
        prompt = render_with_context(question, contexts)
        # drop whole contexts from the bottom of the ranking until the prompt fits
        while len(prompt) > cfg.max_prompt_chars and hits:
            hits, contexts = hits[:-1], contexts[:-1]
            prompt = render_with_context(question, contexts)
        return Retrieval(hits, contexts, prompt)

    def answer(self, question: str, cfg: Optional[EngineConfig] = None) -> Answer:
        return self.answer_with_contexts(question, cfg)[0]

    def answer_with_contexts(self, question: str, cfg: Optional[EngineConfig] = None) -> tuple[Answer, list[str]]:
        cfg = cfg or self.config
        r = self.retrieve(question, cfg)
        text = self.llm.complete(r.prompt)
        generation = {"k": cfg.k, "use_rag": cfg.use_rag}
        if hasattr(self.llm, "config"):
            generation.update(self.llm.config.generation_params())
        answer = Answer(
            text=text,
            sources=tuple(r.hits),
            query=question,
            model_id=getattr(self.llm, "model_id", ""),
            template_version=cfg.template_version,
            generation=generation,
        )
        return answer, r.contexts

    def answer_batch(
        self, questions: Sequence[str], cfg: Optional[EngineConfig] = None, workers: int = 1
    ) -> list[Union[Answer, BatchError]]:
        if not questions:
            raise ValidationError("empty question list")

        def one(i: int) -> Union[Answer, BatchError]:
            try:
                return self.answer(questions[i], cfg)
            except NewsRagError as e:
                log.warning("question %d failed: %s", i, e)
                return BatchError(i, questions[i], e.code, str(e))

        if workers <= 1:
            return [one(i) for i in range(len(questions))]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, range(len(questions))))
