"""Dual-path retrieval and joint angular rescoring.

Two independent top-n searches (query embedding and pseudo-context
embedding) produce a candidate union; every union member is rescored by
the joint angle score cos(theta1 + theta2), where theta1/theta2 are the
document's angles to the query and pseudo-context vectors. A document is
rewarded only when it aligns with both directions at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .corpus import DocChunk
from .errors import ContractError, IntegrityError
from .index import FlatIndex, Hit


@dataclass(frozen=True)
class ScoredDoc:
    """A candidate with both path similarities and the joint score."""

    doc_id: str
    s1: float  # inner product with the query embedding, clamped to [-1, 1]
    s2: float  # inner product with the pseudo-context embedding, clamped
    joint: float


@dataclass(frozen=True)
class SelectionResult:
    selected: tuple[DocChunk, ...]
    candidates: tuple[ScoredDoc, ...]
    hits_q: tuple[Hit, ...]
    hits_p: tuple[Hit, ...]
    qp_angle: float  # angle between query and pseudo-context embeddings; diagnostic only


def _clamp(value: float) -> float:
    return min(1.0, max(-1.0, value))


def joint_score(s1: float, s2: float) -> float:
    """cos(arccos s1 + arccos s2) via the expanded product form.

    Inputs are clamped into [-1, 1] first so float drift like 1.0000001
    cannot push the square roots into NaN. Result lies in [-1, 1].
    """
    a = _clamp(float(s1))
    b = _clamp(float(s2))
    return a * b - math.sqrt(1.0 - a * a) * math.sqrt(1.0 - b * b)


def dual_retrieve(
    index: FlatIndex,
    q_vec: np.ndarray,
    p_vec: np.ndarray,
    n: int,
) -> tuple[list[Hit], list[Hit]]:
    """Two independent top-n searches: one per path."""
    return index.search(q_vec, n), index.search(p_vec, n)


def select(
    chunks_by_id: Mapping[str, DocChunk],
    hits_q: Sequence[Hit],
    hits_p: Sequence[Hit],
    q_vec: np.ndarray,
    p_vec: np.ndarray,
    k: int,
    index: FlatIndex,
) -> SelectionResult:
    """Rescore the dual-path union by joint angle and keep the top k.

    Both similarities are computed for every union member, including
    documents only one path retrieved (their stored vectors come from the
    index). Ties on the joint score break by ascending doc id.
    """
    if k < 1:
        raise ContractError("k must be >= 1")
    union_ids: list[str] = []
    seen: set[str] = set()
    for hit in list(hits_q) + list(hits_p):
        if hit.doc_id not in seen:
            seen.add(hit.doc_id)
            union_ids.append(hit.doc_id)
    for doc_id in union_ids:
        if doc_id not in chunks_by_id:
            raise IntegrityError(f"retrieved doc id {doc_id!r} missing from chunk lookup")

    q = np.asarray(q_vec, dtype=np.float64)
    p = np.asarray(p_vec, dtype=np.float64)
    s1 = np.array([float(np.dot(index.vector(d), q)) for d in union_ids])
    s2 = np.array([float(np.dot(index.vector(d), p)) for d in union_ids])
    s1c = np.clip(s1, -1.0, 1.0)
    s2c = np.clip(s2, -1.0, 1.0)
    joints = kernels.get_backend().joint_scores(s1c, s2c)

    scored = [
        ScoredDoc(doc_id=d, s1=float(a), s2=float(b), joint=float(j))
        for d, a, b, j in zip(union_ids, s1c, s2c, joints)
    ]
    scored.sort(key=lambda sd: (-sd.joint, sd.doc_id))
    selected = tuple(chunks_by_id[sd.doc_id] for sd in scored[:k])
    qp = _clamp(float(np.dot(q, p)))
    return SelectionResult(
        selected=selected,
        candidates=tuple(scored),
        hits_q=tuple(hits_q),
        hits_p=tuple(hits_p),
        qp_angle=math.acos(qp),
    )
