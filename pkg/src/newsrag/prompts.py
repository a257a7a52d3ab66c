"""Chat prompt rendering with the news-reporter control-token template."""
from __future__ import annotations

from typing import Sequence

from .core import NewsRagError

USER_OPEN = "<|user|>"
END = "<|end|>"
ASSISTANT_OPEN = "<|assistant|>"
SYSTEM_INSTRUCTION = "Act as a news reporter and answer the question:"
# System prompt used when building fine-tuning records; not part of inference prompts.
FINE_TUNE_SYSTEM_PROMPT = "You should act like a news reporter"
TEMPLATE_VERSION = "news-reporter-chat/1"
MAX_CONTEXTS = 4
CONTROL_TOKENS = (USER_OPEN, END, ASSISTANT_OPEN)


class PromptError(NewsRagError):
    pass


def sanitize(text: str) -> str:
    """Break every ``<|`` / ``|>`` pair so user text cannot forge a control token."""
    return text.replace("<|", "< |").replace("|>", "| >")


def _check_question(question: str) -> None:
    if not isinstance(question, str) or not question.strip():
        raise PromptError("question is empty", code="EMPTY_QUESTION")


def render_plain(question: str) -> str:
    _check_question(question)
    return f"{USER_OPEN}\n{SYSTEM_INSTRUCTION} \nInput: {sanitize(question)}\n{END}\n{ASSISTANT_OPEN}\n"


def render_with_context(question: str, contexts: Sequence[str]) -> str:
    """Prompt with retrieved contexts, in rank order, placed before the ``Input:`` line."""
    _check_question(question)
    if len(contexts) > MAX_CONTEXTS:
        raise PromptError(f"{len(contexts)} contexts exceeds {MAX_CONTEXTS}", code="TOO_MANY_CONTEXTS")
    if not contexts:
        return render_plain(question)
    lines = "".join(f"Context [{i}]: {sanitize(c)}\n" for i, c in enumerate(contexts, start=1))
    return f"{USER_OPEN}\n{SYSTEM_INSTRUCTION} \n{lines}Input: {sanitize(question)}\n{END}\n{ASSISTANT_OPEN}\n"
