"""End-to-end orchestration of the gated retrieval pipeline and all
comparison/ablation modes, with a full per-query audit trace.

Modes:
    no_retrieval   answer from parametric knowledge only
    standard_rag   always retrieve top-k by the query embedding
    llm_judge      ask the model whether to retrieve (Yes/No)
    hyde           retrieve by the pseudo-context embedding only
    q2d, cot       retrieve by question + generated text as one signal
    dtr            uncertainty gate, then dual-path retrieval + joint
                   angular selection
    dtr_no_ugt     dtr's retrieval branch for every query
    dtr_no_dpr     uncertainty gate, then query-only top-k
    fixed_mix(a,b) uncertainty gate, then a query hits + b pseudo hits,
                   no rescoring
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import prompts
from .corpus import DocChunk, QueryItem
from .embedding import EmbedderHandle, EmbeddingCache, embed_texts
from .errors import ConfigError, RagGateError, UsageError
from .generator import (
    GenerationCache,
    GenerationRequest,
    GeneratorHandle,
    generate,
)
from .index import FlatIndex, Hit
from .selection import ScoredDoc, SelectionResult, dual_retrieve, select
from .uncertainty import UncertaintyScore, decide, uncertainty
from .errors import UncertaintyUndefinedError

logger = logging.getLogger(__name__)

MODE_NAMES = (
    "no_retrieval",
    "standard_rag",
    "llm_judge",
    "hyde",
    "q2d",
    "cot",
    "dtr",
    "dtr_no_ugt",
    "dtr_no_dpr",
    "fixed_mix",
)

_FIXED_MIX_RE = re.compile(r"^fixed_mix\((\d+)\s*,\s*(\d+)\)$")

DEFAULT_MAX_TOKENS = {
    prompts.ANSWER_NO_RETRIEVAL: 64,
    prompts.ANSWER_WITH_RETRIEVAL: 64,
    prompts.PSEUDO_CONTEXT: 256,
    prompts.COT: 512,
    prompts.JUDGE: 8,
}


@dataclass(frozen=True)
class PipelineMode:
    name: str
    q_count: int = 0
    p_count: int = 0

    def __post_init__(self):
        if self.name not in MODE_NAMES:
            raise UsageError(
                f"unknown mode {self.name!r}; valid modes: "
                + ", ".join(list(MODE_NAMES[:-1]) + ["fixed_mix(a,b)"])
            )

    @classmethod
    def parse(cls, text: str) -> "PipelineMode":
        text = text.strip()
        match = _FIXED_MIX_RE.match(text)
        if match:
            return cls("fixed_mix", int(match.group(1)), int(match.group(2)))
        return cls(text)

    def __str__(self) -> str:
        if self.name == "fixed_mix":
            return f"fixed_mix({self.q_count},{self.p_count})"
        return self.name


@dataclass
class RunConfig:
    """Tunables for a pipeline run: 5 candidates per retrieval path, 3
    final passages and greedy decoding unless overridden."""

    u_threshold: float = 0.001
    n_per_path: int = 5
    k_final: int = 3
    temperature: float = 0.0
    concurrency: int = 1
    max_tokens: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_MAX_TOKENS))

    def __post_init__(self):
        if self.n_per_path < 1 or self.k_final < 1:
            raise ConfigError("n_per_path and k_final must be >= 1")
        if self.concurrency < 1:
            raise ConfigError("concurrency must be >= 1")
        merged = dict(DEFAULT_MAX_TOKENS)
        merged.update(self.max_tokens)
        self.max_tokens = merged


@dataclass(frozen=True)
class TraceSelection:
    """Disk-friendly view of a SelectionResult (ids and scores, no texts)."""

    selected_ids: tuple[str, ...]
    candidates: tuple[ScoredDoc, ...]
    hits_q: tuple[Hit, ...]
    hits_p: tuple[Hit, ...]
    qp_angle: float

    @classmethod
    def from_selection(cls, sel: SelectionResult) -> "TraceSelection":
        return cls(
            selected_ids=tuple(c.id for c in sel.selected),
            candidates=sel.candidates,
            hits_q=sel.hits_q,
            hits_p=sel.hits_p,
            qp_angle=sel.qp_angle,
        )

    def to_record(self) -> dict:
        return {
            "selected_ids": list(self.selected_ids),
            "candidates": [[c.doc_id, c.s1, c.s2, c.joint] for c in self.candidates],
            "hits_q": [[h.doc_id, h.score] for h in self.hits_q],
            "hits_p": [[h.doc_id, h.score] for h in self.hits_p],
            "qp_angle": self.qp_angle,
        }

    @classmethod
    def from_record(cls, record: dict) -> "TraceSelection":
        return cls(
            selected_ids=tuple(record["selected_ids"]),
            candidates=tuple(ScoredDoc(*c) for c in record["candidates"]),
            hits_q=tuple(Hit(*h) for h in record["hits_q"]),
            hits_p=tuple(Hit(*h) for h in record["hits_p"]),
            qp_angle=float(record["qp_angle"]),
        )


@dataclass
class QueryTrace:
    """Complete audit record for one query through one mode."""

    query_id: str
    mode: str
    final_answer: str = ""
    parametric_answer: str | None = None
    u: UncertaintyScore | None = None
    triggered: bool = False
    pseudo_context: str | None = None
    selection: TraceSelection | None = None
    passage_ids: tuple[str, ...] | None = None
    call_log: tuple[tuple[str, int], ...] = ()
    flags: tuple[str, ...] = ()
    error: str | None = None

    def calls(self, component: str) -> int:
        return dict(self.call_log).get(component, 0)

    def to_record(self) -> dict:
        return {
            "query_id": self.query_id,
            "mode": self.mode,
            "final_answer": self.final_answer,
            "parametric_answer": self.parametric_answer,
            "u": None
            if self.u is None
            else {"value": self.u.value, "token_count": self.u.token_count},
            "triggered": self.triggered,
            "pseudo_context": self.pseudo_context,
            "selection": None if self.selection is None else self.selection.to_record(),
            "passage_ids": None if self.passage_ids is None else list(self.passage_ids),
            "call_log": [[c, n] for c, n in self.call_log],
            "flags": list(self.flags),
            "error": self.error,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_record(cls, record: dict) -> "QueryTrace":
        u = record.get("u")
        sel = record.get("selection")
        passages = record.get("passage_ids")
        return cls(
            query_id=record["query_id"],
            mode=record["mode"],
            final_answer=record.get("final_answer", ""),
            parametric_answer=record.get("parametric_answer"),
            u=None if u is None else UncertaintyScore(float(u["value"]), int(u["token_count"])),
            triggered=bool(record.get("triggered", False)),
            pseudo_context=record.get("pseudo_context"),
            selection=None if sel is None else TraceSelection.from_record(sel),
            passage_ids=None if passages is None else tuple(passages),
            call_log=tuple((str(c), int(n)) for c, n in record.get("call_log", [])),
            flags=tuple(record.get("flags", [])),
            error=record.get("error"),
        )


def load_traces(path) -> list[QueryTrace]:
    traces = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                traces.append(QueryTrace.from_record(json.loads(line)))
    return traces


def save_traces(traces: Sequence[QueryTrace], path) -> None:
    from .util import atomic_write_text

    atomic_write_text(path, "".join(t.to_json() + "\n" for t in traces))


class _Session:
    """Per-query working state: counts every component operation."""

    def __init__(self, pipe: "Pipeline"):
        self.pipe = pipe
        self.counts: Counter[str] = Counter()
        self.flags: list[str] = []

    def flag(self, name: str) -> None:
        if name not in self.flags:
            self.flags.append(name)

    def embed(self, text: str, label: str) -> np.ndarray:
        self.counts[f"embed.{label}"] += 1
        return embed_texts([text], self.pipe.embedder, self.pipe.embed_cache)[0]

    def generate(self, kind: str, prompt: str, want_logprobs: bool = False):
        self.counts[f"generate.{kind}"] += 1
        request = GenerationRequest(
            prompt=prompt,
            max_tokens=self.pipe.cfg.max_tokens[kind],
            temperature=self.pipe.cfg.temperature,
            want_logprobs=want_logprobs,
        )
        return generate(self.pipe.generator, request, self.pipe.gen_cache)

    def search(self, vec: np.ndarray, n: int) -> list[Hit]:
        self.counts["index.search"] += 1
        return self.pipe.index.search(vec, n)

    def call_log(self) -> tuple[tuple[str, int], ...]:
        return tuple(sorted(self.counts.items()))


class Pipeline:
    """Wires the index, embedder and generator into runnable modes."""

    def __init__(
        self,
        index: FlatIndex,
        chunks: Sequence[DocChunk] | Mapping[str, DocChunk],
        embedder: EmbedderHandle,
        generator: GeneratorHandle,
        cfg: RunConfig | None = None,
        embed_cache: EmbeddingCache | None = None,
        gen_cache: GenerationCache | None = None,
    ):
        self.index = index
        if isinstance(chunks, Mapping):
            self.chunks_by_id = dict(chunks)
        else:
            self.chunks_by_id = {c.id: c for c in chunks}
        self.embedder = embedder
        self.generator = generator
        self.cfg = cfg or RunConfig()
        self.embed_cache = embed_cache
        self.gen_cache = gen_cache

    # -- mode implementations -------------------------------------------

    def _answer_with(self, session: _Session, query: QueryItem, passages: Sequence[DocChunk]):
        prompt = prompts.render_prompt(prompts.ANSWER_WITH_RETRIEVAL, query.question, passages)
        return session.generate(prompts.ANSWER_WITH_RETRIEVAL, prompt)

    def _parametric(self, session: _Session, query: QueryItem):
        prompt = prompts.render_prompt(prompts.ANSWER_NO_RETRIEVAL, query.question)
        return session.generate(prompts.ANSWER_NO_RETRIEVAL, prompt, want_logprobs=True)

    def _pseudo(self, session: _Session, query: QueryItem) -> str:
        prompt = prompts.render_prompt(prompts.PSEUDO_CONTEXT, query.question)
        return session.generate(prompts.PSEUDO_CONTEXT, prompt).text

    def _query_only_passages(self, session: _Session, query: QueryItem) -> list[DocChunk]:
        q_vec = session.embed(query.question, "query")
        hits = session.search(q_vec, self.cfg.k_final)
        return [self.chunks_by_id[h.doc_id] for h in hits if h.doc_id in self.chunks_by_id]

    def _run_no_retrieval(self, session: _Session, query: QueryItem, trace: QueryTrace):
        result = self._parametric(session, query)
        trace.parametric_answer = result.text
        try:
            trace.u = uncertainty(result)
        except UncertaintyUndefinedError:
            session.flag("missing_logprobs")
        trace.final_answer = result.text
        trace.triggered = False

    def _run_standard_rag(self, session: _Session, query: QueryItem, trace: QueryTrace):
        passages = self._query_only_passages(session, query)
        trace.passage_ids = tuple(p.id for p in passages)
        trace.triggered = True
        trace.final_answer = self._answer_with(session, query, passages).text

    def _run_llm_judge(self, session: _Session, query: QueryItem, trace: QueryTrace):
        prompt = prompts.render_prompt(prompts.JUDGE, query.question)
        verdict = session.generate(prompts.JUDGE, prompt).text
        match = re.match(r"\s*([A-Za-z]+)", verdict)
        token = match.group(1).lower() if match else ""
        if token == "no":
            self._run_no_retrieval(session, query, trace)
        else:
            if token != "yes":
                session.flag("judge_unparsed")
            self._run_standard_rag(session, query, trace)

    def _run_hyde(self, session: _Session, query: QueryItem, trace: QueryTrace):
        pseudo = self._pseudo(session, query)
        trace.pseudo_context = pseudo
        p_vec = session.embed(pseudo, "pseudo_context")
        hits = session.search(p_vec, self.cfg.k_final)
        passages = [self.chunks_by_id[h.doc_id] for h in hits if h.doc_id in self.chunks_by_id]
        trace.passage_ids = tuple(p.id for p in passages)
        trace.triggered = True
        trace.final_answer = self._answer_with(session, query, passages).text

    def _run_concat(self, session: _Session, query: QueryItem, trace: QueryTrace, kind: str):
        prompt = prompts.render_prompt(kind, query.question)
        generated = session.generate(kind, prompt).text
        trace.pseudo_context = generated
        retrieval_text = f"{query.question}\n{generated}"
        vec = session.embed(retrieval_text, "augmented_query")
        hits = session.search(vec, self.cfg.k_final)
        passages = [self.chunks_by_id[h.doc_id] for h in hits if h.doc_id in self.chunks_by_id]
        trace.passage_ids = tuple(p.id for p in passages)
        trace.triggered = True
        trace.final_answer = self._answer_with(session, query, passages).text

    def _gate(self, session: _Session, query: QueryItem, trace: QueryTrace, threshold: float) -> bool:
        """Run the parametric generation and the trigger decision.

        Returns True when retrieval should run. Missing logprobs flag the
        record and fail toward the retrieval branch.
        """
        result = self._parametric(session, query)
        trace.parametric_answer = result.text
        try:
            trace.u = uncertainty(result)
        except UncertaintyUndefinedError:
            session.flag("missing_logprobs")
            trace.triggered = True
            return True
        decision = decide(trace.u, threshold)
        trace.triggered = decision.retrieve
        if not decision.retrieve:
            trace.final_answer = result.text
        return decision.retrieve

    def _dual_branch(self, session: _Session, query: QueryItem, trace: QueryTrace):
        pseudo = self._pseudo(session, query)
        trace.pseudo_context = pseudo
        if not pseudo.strip():
            session.flag("degenerate_pseudo_context")
            passages = self._query_only_passages(session, query)
            trace.passage_ids = tuple(p.id for p in passages)
            trace.final_answer = self._answer_with(session, query, passages).text
            return
        q_vec = session.embed(query.question, "query")
        p_vec = session.embed(pseudo, "pseudo_context")
        session.counts["index.search"] += 2
        hits_q, hits_p = dual_retrieve(self.index, q_vec, p_vec, self.cfg.n_per_path)
        sel = select(
            self.chunks_by_id, hits_q, hits_p, q_vec, p_vec, self.cfg.k_final, self.index
        )
        trace.selection = TraceSelection.from_selection(sel)
        trace.passage_ids = tuple(c.id for c in sel.selected)
        trace.final_answer = self._answer_with(session, query, sel.selected).text

    def _mix_branch(self, session: _Session, query: QueryItem, trace: QueryTrace, mode: PipelineMode):
        q_vec = session.embed(query.question, "query")
        hits_q = session.search(q_vec, max(self.cfg.n_per_path, self.cfg.k_final))
        hits_p: list[Hit] = []
        if mode.p_count > 0:
            pseudo = self._pseudo(session, query)
            trace.pseudo_context = pseudo
            if pseudo.strip():
                p_vec = session.embed(pseudo, "pseudo_context")
                hits_p = session.search(p_vec, max(self.cfg.n_per_path, self.cfg.k_final))
            else:
                session.flag("degenerate_pseudo_context")
        chosen: list[str] = [h.doc_id for h in hits_q[: mode.q_count]]
        taken = set(chosen)
        added_p = 0
        for hit in hits_p:
            if added_p == mode.p_count:
                break
            if hit.doc_id not in taken:
                chosen.append(hit.doc_id)
                taken.add(hit.doc_id)
                added_p += 1
        # backfill from the query path on collision or a short pseudo list
        for hit in hits_q[mode.q_count :]:
            if len(chosen) == self.cfg.k_final:
                break
            if hit.doc_id not in taken:
                chosen.append(hit.doc_id)
                taken.add(hit.doc_id)
        passages = [self.chunks_by_id[d] for d in chosen if d in self.chunks_by_id]
        trace.passage_ids = tuple(p.id for p in passages)
        trace.final_answer = self._answer_with(session, query, passages).text

    # -- public API ------------------------------------------------------

    def run_query(self, query: QueryItem, mode: PipelineMode | str) -> QueryTrace:
        """Run one query through one mode, producing a full audit trace.

        Component failures are recorded on the trace (error field) rather
        than raised, so a query never silently drops from a batch.
        """
        mode = PipelineMode.parse(mode) if isinstance(mode, str) else mode
        if mode.name == "fixed_mix" and mode.q_count + mode.p_count != self.cfg.k_final:
            raise ConfigError(
                f"fixed_mix({mode.q_count},{mode.p_count}) requires "
                f"q_count + p_count == k_final ({self.cfg.k_final})"
            )
        trace = QueryTrace(query_id=query.id, mode=str(mode))
        session = _Session(self)
        try:
            if mode.name == "no_retrieval":
                self._run_no_retrieval(session, query, trace)
            elif mode.name == "standard_rag":
                self._run_standard_rag(session, query, trace)
            elif mode.name == "llm_judge":
                self._run_llm_judge(session, query, trace)
            elif mode.name == "hyde":
                self._run_hyde(session, query, trace)
            elif mode.name in ("q2d", "cot"):
                kind = prompts.PSEUDO_CONTEXT if mode.name == "q2d" else prompts.COT
                self._run_concat(session, query, trace, kind)
            elif mode.name == "dtr":
                if self._gate(session, query, trace, self.cfg.u_threshold):
                    self._dual_branch(session, query, trace)
            elif mode.name == "dtr_no_ugt":
                if self._gate(session, query, trace, float("-inf")):
                    self._dual_branch(session, query, trace)
            elif mode.name == "dtr_no_dpr":
                if self._gate(session, query, trace, self.cfg.u_threshold):
                    passages = self._query_only_passages(session, query)
                    trace.passage_ids = tuple(p.id for p in passages)
                    trace.final_answer = self._answer_with(session, query, passages).text
            else:  # fixed_mix
                if self._gate(session, query, trace, self.cfg.u_threshold):
                    self._mix_branch(session, query, trace, mode)
        except RagGateError as exc:
            trace.error = f"{exc.category}: {exc}"
            logger.warning("query %s failed in mode %s: %s", query.id, mode, exc)
        trace.call_log = session.call_log()
        trace.flags = tuple(session.flags)
        return trace

    def run_batch(self, queries: Sequence[QueryItem], mode: PipelineMode | str) -> list[QueryTrace]:
        """Run a batch, preserving input order regardless of concurrency."""
        mode = PipelineMode.parse(mode) if isinstance(mode, str) else mode
        if not queries:
            return []
        if self.cfg.concurrency > 1 and len(queries) > 1:
            with ThreadPoolExecutor(max_workers=self.cfg.concurrency) as pool:
                return list(pool.map(lambda q: self.run_query(q, mode), queries))
        return [self.run_query(q, mode) for q in queries]
