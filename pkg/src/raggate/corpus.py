"""Corpus and query-set loading.

Both file kinds are line-delimited JSON, one record per line, UTF-8:
corpus records carry id/title/text, query records carry
id/question/answers/gold_doc_ids. Ids must be unique within a file.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .errors import ContractError, IntegrityError, ParseError


@dataclass(frozen=True)
class DocChunk:
    """One corpus passage: the unit that is indexed, retrieved and cited."""

    id: str
    text: str
    title: str = ""

    def __post_init__(self):
        if not self.id:
            raise ContractError("chunk id must be non-empty")
        if not self.text.strip():
            raise ContractError(f"chunk {self.id!r} has empty text")

    @property
    def embedding_text(self) -> str:
        """Text fed to the embedder: title-prefixed when a title exists."""
        return f"{self.title}\n{self.text}" if self.title else self.text

    @property
    def passage_block(self) -> str:
        """Rendering of this chunk inside a prompt (same as embedding_text)."""
        return self.embedding_text


@dataclass(frozen=True)
class QueryItem:
    """One evaluation question with its gold answers and supporting docs."""

    id: str
    question: str
    gold_answers: tuple[str, ...] = ()
    gold_doc_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.id:
            raise ContractError("query id must be non-empty")
        if not self.question.strip():
            raise ContractError(f"query {self.id!r} has empty question")


class Chunker(Protocol):
    """Splits a raw document into DocChunks. v1 corpora are pre-chunked."""

    def chunk(self, doc_id: str, title: str, text: str) -> list[DocChunk]: ...


class PassthroughChunker:
    """Identity chunker: one input document becomes one chunk."""

    def chunk(self, doc_id: str, title: str, text: str) -> list[DocChunk]:
        return [DocChunk(id=doc_id, title=title, text=text)]


def _iter_records(path: str | Path) -> Iterable[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if not isinstance(record, dict):
                raise ParseError(f"{path}:{lineno}: record is not an object")
            yield lineno, record


def load_corpus(path: str | Path) -> list[DocChunk]:
    """Load a corpus file, preserving file order. Duplicate ids are rejected."""
    chunks: list[DocChunk] = []
    seen: set[str] = set()
    for lineno, record in _iter_records(path):
        try:
            chunk = DocChunk(
                id=str(record["id"]),
                title=str(record.get("title", "") or ""),
                text=str(record["text"]),
            )
        except KeyError as exc:
            raise ParseError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from exc
        except ContractError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        if chunk.id in seen:
            raise IntegrityError(f"{path}: duplicate chunk id {chunk.id!r}")
        seen.add(chunk.id)
        chunks.append(chunk)
    return chunks


def save_corpus(chunks: Sequence[DocChunk], path: str | Path) -> None:
    """Write chunks back out in the load_corpus line format."""
    with open(path, "w", encoding="utf-8") as fh:
        for chunk in chunks:
            record: dict = {"id": chunk.id, "text": chunk.text}
            if chunk.title:
                record["title"] = chunk.title
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def load_queries(path: str | Path) -> list[QueryItem]:
    """Load a query file. Duplicate ids are rejected; answers may be absent."""
    queries: list[QueryItem] = []
    seen: set[str] = set()
    for lineno, record in _iter_records(path):
        try:
            answers = record.get("answers", ())
            gold_ids = record.get("gold_doc_ids")
            query = QueryItem(
                id=str(record["id"]),
                question=str(record["question"]),
                gold_answers=tuple(str(a) for a in answers),
                gold_doc_ids=None if gold_ids is None else tuple(str(g) for g in gold_ids),
            )
        except KeyError as exc:
            raise ParseError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from exc
        except ContractError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        if query.id in seen:
            raise IntegrityError(f"{path}: duplicate query id {query.id!r}")
        seen.add(query.id)
        queries.append(query)
    return queries


def check_gold_ids(queries: Sequence[QueryItem], chunks: Sequence[DocChunk]) -> None:
    """Verify every gold_doc_ids entry references a chunk in the paired corpus."""
    known = {c.id for c in chunks}
    for query in queries:
        for gid in query.gold_doc_ids or ():
            if gid not in known:
                raise IntegrityError(
                    f"query {query.id!r} references unknown gold doc id {gid!r}"
                )
