"""Answer scoring and report generation.

EM/F1 follow the standard open-domain QA convention: answers are
lowercased, punctuation stripped, articles (a/an/the) removed and
whitespace collapsed before comparison; F1 is the token-multiset
precision/recall harmonic mean, maximised over gold answers. Retrieval
recall counts a triggered query as a hit when any gold supporting doc is
among its final passages; bypassed queries leave the recall denominator
but stay in the trigger-ratio denominator.
"""

from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import QueryItem
from .errors import ContractError, IntegrityError
from .index import FlatIndex
from .pipeline import QueryTrace

_ARTICLE_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, drop articles, collapse whitespace."""
    text = text.lower()
    text = text.translate(_PUNCT_TABLE)
    text = _ARTICLE_RE.sub(" ", text)
    return " ".join(text.split())


def _f1(prediction_tokens: list[str], gold_tokens: list[str]) -> float:
    if not prediction_tokens and not gold_tokens:
        return 1.0
    if not prediction_tokens or not gold_tokens:
        return 0.0
    common = Counter(prediction_tokens) & Counter(gold_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(prediction_tokens)
    recall = num_same / len(gold_tokens)
    return 2 * precision * recall / (precision + recall)


def em_f1(prediction: str, golds: Sequence[str]) -> tuple[int, float]:
    """Exact match against any gold, and the best token-level F1."""
    if not golds:
        raise ContractError("golds must be non-empty")
    pred_norm = normalize_answer(prediction)
    pred_tokens = pred_norm.split()
    em = 0
    best_f1 = 0.0
    for gold in golds:
        gold_norm = normalize_answer(gold)
        if pred_norm == gold_norm:
            em = 1
        best_f1 = max(best_f1, _f1(pred_tokens, gold_norm.split()))
    return em, best_f1


@dataclass(frozen=True)
class EvalRecord:
    query_id: str
    em: int
    f1: float
    triggered: bool
    u_value: float | None = None
    gold_hit_at_k: bool | None = None
    gold_coverage_at_k: float | None = None


@dataclass(frozen=True)
class ThresholdRow:
    threshold: float
    avg_em: float  # percentage
    avg_f1: float  # percentage
    trigger_ratio: float  # percentage
    improvement_vs_no_retrieval: float  # EM percentage points
    query_ratio: float  # fraction of queries with u <= threshold


@dataclass
class EvalReport:
    mode: str
    n_queries: int
    avg_em: float  # percentage
    avg_f1: float  # percentage
    trigger_ratio: float  # percentage
    recall_at_k: float | None = None  # percentage over triggered queries
    recall_denominator: int = 0
    per_threshold: list[ThresholdRow] | None = None

    def to_text(self) -> str:
        lines = [
            f"mode: {self.mode}",
            f"n_queries: {self.n_queries}",
            f"avg_em: {self.avg_em:.2f}",
            f"avg_f1: {self.avg_f1:.2f}",
            f"trigger_ratio: {self.trigger_ratio:.2f}",
        ]
        if self.recall_at_k is not None:
            lines.append(
                f"recall_at_k: {self.recall_at_k:.2f} (denominator {self.recall_denominator})"
            )
        if self.per_threshold:
            lines.append(
                "threshold\tavg_em\tavg_f1\ttrigger_ratio\timprovement\tquery_ratio"
            )
            for row in self.per_threshold:
                lines.append(
                    f"{row.threshold:g}\t{row.avg_em:.2f}\t{row.avg_f1:.2f}"
                    f"\t{row.trigger_ratio:.2f}\t{row.improvement_vs_no_retrieval:+.2f}"
                    f"\t{row.query_ratio:.4f}"
                )
        return "\n".join(lines)


def recall_at_k(trace: QueryTrace, gold_doc_ids: Sequence[str]) -> bool | None:
    """Any-hit recall over the final passages; None when not applicable."""
    if not gold_doc_ids:
        raise ContractError("gold_doc_ids must be non-empty")
    if trace.passage_ids is None:
        return None
    return any(g in trace.passage_ids for g in gold_doc_ids)


def gold_coverage_at_k(trace: QueryTrace, gold_doc_ids: Sequence[str]) -> float | None:
    """Per-document reading: fraction of gold docs among the final passages."""
    if not gold_doc_ids:
        raise ContractError("gold_doc_ids must be non-empty")
    if trace.passage_ids is None:
        return None
    hit = sum(1 for g in set(gold_doc_ids) if g in trace.passage_ids)
    return hit / len(set(gold_doc_ids))


def score_traces(
    traces: Sequence[QueryTrace],
    queries: Sequence[QueryItem],
) -> list[EvalRecord]:
    """One EvalRecord per trace, in trace order."""
    by_id = {q.id: q for q in queries}
    records = []
    for trace in traces:
        query = by_id.get(trace.query_id)
        if query is None:
            raise IntegrityError(f"trace references unknown query id {trace.query_id!r}")
        if not query.gold_answers:
            raise ContractError(f"query {query.id!r} has no gold answers")
        em, f1 = em_f1(trace.final_answer, query.gold_answers)
        hit = cov = None
        if query.gold_doc_ids:
            hit = recall_at_k(trace, query.gold_doc_ids)
            cov = gold_coverage_at_k(trace, query.gold_doc_ids)
        records.append(
            EvalRecord(
                query_id=trace.query_id,
                em=em,
                f1=f1,
                triggered=trace.triggered,
                u_value=None if trace.u is None else trace.u.value,
                gold_hit_at_k=hit,
                gold_coverage_at_k=cov,
            )
        )
    return records


def build_report(
    mode: str,
    records: Sequence[EvalRecord],
    recall_mode: str = "any",
) -> EvalReport:
    """Aggregate records into percentages (two-decimal rendering)."""
    if not records:
        return EvalReport(mode=mode, n_queries=0, avg_em=0.0, avg_f1=0.0, trigger_ratio=0.0)
    n = len(records)
    avg_em = 100.0 * sum(r.em for r in records) / n
    avg_f1 = 100.0 * sum(r.f1 for r in records) / n
    trigger_ratio = 100.0 * sum(1 for r in records if r.triggered) / n
    if recall_mode == "any":
        applicable = [r.gold_hit_at_k for r in records if r.gold_hit_at_k is not None]
        values = [1.0 if v else 0.0 for v in applicable]
    elif recall_mode == "per_doc":
        values = [
            r.gold_coverage_at_k for r in records if r.gold_coverage_at_k is not None
        ]
    else:
        raise ContractError(f"unknown recall mode {recall_mode!r}")
    recall = 100.0 * sum(values) / len(values) if values else None
    return EvalReport(
        mode=mode,
        n_queries=n,
        avg_em=avg_em,
        avg_f1=avg_f1,
        trigger_ratio=trigger_ratio,
        recall_at_k=recall,
        recall_denominator=len(values),
    )


def sweep_report(
    traces_by_threshold: Mapping[float, Sequence[QueryTrace]],
    queries: Sequence[QueryItem],
    baseline_no_retrieval: Sequence[EvalRecord],
) -> list[ThresholdRow]:
    """Per-threshold EM/F1/trigger rows plus EM improvement over the
    no-retrieval baseline and the query-ratio (fraction with u <= t)."""
    if not baseline_no_retrieval:
        raise ContractError("baseline records must be non-empty")
    baseline_ids = {r.query_id for r in baseline_no_retrieval}
    baseline_em = 100.0 * sum(r.em for r in baseline_no_retrieval) / len(baseline_no_retrieval)
    rows = []
    for threshold in sorted(traces_by_threshold):
        traces = traces_by_threshold[threshold]
        ids = {t.query_id for t in traces}
        if ids != baseline_ids:
            raise ContractError(
                f"threshold {threshold:g} ran a different query set than the baseline"
            )
        records = score_traces(traces, queries)
        report = build_report("dtr", records)
        with_u = [t for t in traces if t.u is not None]
        query_ratio = sum(1 for t in with_u if t.u.value <= threshold) / len(traces)
        rows.append(
            ThresholdRow(
                threshold=threshold,
                avg_em=report.avg_em,
                avg_f1=report.avg_f1,
                trigger_ratio=report.trigger_ratio,
                improvement_vs_no_retrieval=report.avg_em - baseline_em,
                query_ratio=query_ratio,
            )
        )
    return rows


_RANK_BUCKETS = ("1-3", "4-10", "11-20", "20+")


def gold_rank_report(
    index: FlatIndex,
    queries: Sequence[QueryItem],
    q_vecs: Sequence,
) -> dict:
    """Histogram of the best gold-document rank in a full-corpus ranking.

    Queries without gold_doc_ids are skipped. Buckets: 1-3, 4-10, 11-20,
    20+.
    """
    counts = {bucket: 0 for bucket in _RANK_BUCKETS}
    ranks: dict[str, int] = {}
    for query, vec in zip(queries, q_vecs):
        if not query.gold_doc_ids:
            continue
        for gid in query.gold_doc_ids:
            if gid not in index:
                raise IntegrityError(f"query {query.id!r} gold doc {gid!r} not in index")
        hits = index.search(vec, len(index))
        position = {h.doc_id: i + 1 for i, h in enumerate(hits)}
        best = min(position[g] for g in query.gold_doc_ids)
        ranks[query.id] = best
        if best <= 3:
            counts["1-3"] += 1
        elif best <= 10:
            counts["4-10"] += 1
        elif best <= 20:
            counts["11-20"] += 1
        else:
            counts["20+"] += 1
    return {"buckets": counts, "ranks": ranks}


def records_to_lines(records: Sequence[EvalRecord]) -> list[str]:
    """Per-record report lines (key=value, one query per line)."""
    lines = []
    for r in records:
        parts = [
            f"record {r.query_id}",
            f"em={r.em}",
            f"f1={r.f1:.4f}",
            f"triggered={'true' if r.triggered else 'false'}",
        ]
        if r.u_value is not None:
            parts.append(f"u={r.u_value:.6g}")
        if r.gold_hit_at_k is not None:
            parts.append(f"gold_hit={'true' if r.gold_hit_at_k else 'false'}")
        lines.append(" ".join(parts))
    return lines


def records_to_tsv(records: Sequence[EvalRecord]) -> str:
    """Delimiter-separated table for spreadsheet import."""
    header = "query_id\tem\tf1\ttriggered\tu\tgold_hit"
    rows = [header]
    for r in records:
        rows.append(
            "\t".join(
                [
                    r.query_id,
                    str(r.em),
                    f"{r.f1:.6f}",
                    "1" if r.triggered else "0",
                    "" if r.u_value is None else f"{r.u_value:.8g}",
                    "" if r.gold_hit_at_k is None else ("1" if r.gold_hit_at_k else "0"),
                ]
            )
        )
    return "\n".join(rows) + "\n"
