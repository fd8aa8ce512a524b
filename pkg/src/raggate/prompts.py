"""Prompt templates for every generation call the pipeline makes.

Rendering is byte-stable: blocks are joined with single newlines and the
instruction line always comes last, so identical inputs produce identical
prompts across runs.
"""

from __future__ import annotations

from typing import Sequence

from .corpus import DocChunk
from .errors import TemplateError

ANSWER_NO_RETRIEVAL = "answer_no_retrieval"
ANSWER_WITH_RETRIEVAL = "answer_with_retrieval"
PSEUDO_CONTEXT = "pseudo_context"
COT = "cot"
JUDGE = "judge"

TEMPLATE_KINDS = (
    ANSWER_NO_RETRIEVAL,
    ANSWER_WITH_RETRIEVAL,
    PSEUDO_CONTEXT,
    COT,
    JUDGE,
)

_ANSWER_INSTRUCTION = "Answer the question using a single word or phrase."
_CONTEXT_INSTRUCTION = (
    "Answer the question based on the above context using a single word or phrase."
)
_PSEUDO_INSTRUCTION = "Write a passage to answer this question."
_COT_HEADER = "Answer the following question:"
_COT_INSTRUCTION = "Give the rationale before answering"
_JUDGE_INSTRUCTION = (
    "Determine whether external information is needed to answer the question accurately. "
    'Respond with "Yes" if additional information is required, '
    'or "No" if the question can be answered without it.'
)


def render_prompt(
    kind: str,
    question: str,
    passages: Sequence[DocChunk] | None = None,
) -> str:
    """Render one of the five templates for a question.

    ``passages`` is required for answer_with_retrieval (rank order is
    preserved, one block per passage) and rejected for every other kind.
    """
    if kind not in TEMPLATE_KINDS:
        raise TemplateError(f"unknown template kind {kind!r}")
    if kind == ANSWER_WITH_RETRIEVAL:
        if not passages:
            raise TemplateError("answer_with_retrieval requires at least one passage")
        blocks = [question, *(p.passage_block for p in passages), _CONTEXT_INSTRUCTION]
        return "\n".join(blocks)
    if passages:
        raise TemplateError(f"template {kind!r} does not take passages")
    if kind == ANSWER_NO_RETRIEVAL:
        return f"{question}\n{_ANSWER_INSTRUCTION}"
    if kind == PSEUDO_CONTEXT:
        return f"{question}\n{_PSEUDO_INSTRUCTION}"
    if kind == COT:
        return f"{_COT_HEADER}\n{question}\n{_COT_INSTRUCTION}"
    return f"{question}\n{_JUDGE_INSTRUCTION}"
