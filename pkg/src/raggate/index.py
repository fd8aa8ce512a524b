"""Exact flat inner-product index.

No approximate structures: every search scans the full corpus matrix, so
results are exact and deterministic. Hits are ordered by score descending
with ties broken by ascending doc id, which makes the id sequence exactly
reproducible across runs, platforms and kernel backends.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .corpus import DocChunk
from .errors import ContractError, DataError, IntegrityError, ParseError

_MAGIC = b"RGIX"
_VERSION = 1

NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Hit:
    """One search result: document id and its inner-product score."""

    doc_id: str
    score: float


def as_unit_vector(values: Sequence[float] | np.ndarray, dim: int | None = None) -> np.ndarray:
    """Validate a unit vector and return it as float64.

    Raises DataError if the norm strays more than 1e-6 from 1 or the
    dimension does not match.
    """
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1:
        raise DataError("vector must be one-dimensional")
    if dim is not None and vec.size != dim:
        raise DataError(f"vector dimension {vec.size} does not match index dimension {dim}")
    norm = float(np.linalg.norm(vec))
    if not np.isfinite(norm) or abs(norm - 1.0) > NORM_TOLERANCE:
        raise DataError(f"vector is not unit-norm (|v| = {norm!r})")
    return vec


class FlatIndex:
    """Immutable exact top-n retriever over unit vectors."""

    def __init__(self, doc_ids: list[str], matrix: np.ndarray, backend: str | None = None):
        self.doc_ids = doc_ids
        self.matrix = matrix
        self._row_by_id = {doc_id: i for i, doc_id in enumerate(doc_ids)}
        # rank of each row in doc_id-ascending order; kernels break score
        # ties by this rank, which is equivalent to breaking them by id
        order = sorted(range(len(doc_ids)), key=lambda i: doc_ids[i])
        tie_rank = np.empty(len(doc_ids), dtype=np.int64)
        for rank, row in enumerate(order):
            tie_rank[row] = rank
        self._tie_rank = tie_rank
        self._kernel = kernels.get_backend(backend)

    @classmethod
    def build(
        cls,
        chunks: Sequence[DocChunk | str],
        vectors: Sequence[Sequence[float] | np.ndarray],
        backend: str | None = None,
    ) -> "FlatIndex":
        """Build an index from parallel chunk and vector sequences."""
        if len(chunks) != len(vectors):
            raise DataError(
                f"chunk/vector length mismatch: {len(chunks)} chunks, {len(vectors)} vectors"
            )
        if len(chunks) == 0:
            raise DataError("cannot build an empty index")
        doc_ids = [c if isinstance(c, str) else c.id for c in chunks]
        if len(set(doc_ids)) != len(doc_ids):
            raise IntegrityError("duplicate doc ids in index build")
        first = np.asarray(vectors[0], dtype=np.float64)
        dim = first.size
        matrix = np.empty((len(vectors), dim), dtype=np.float64)
        for i, vec in enumerate(vectors):
            matrix[i] = as_unit_vector(vec, dim)
        return cls(doc_ids, np.ascontiguousarray(matrix), backend=backend)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._row_by_id

    def vector(self, doc_id: str) -> np.ndarray:
        """Stored vector for a document (needed to score union members)."""
        row = self._row_by_id.get(doc_id)
        if row is None:
            raise IntegrityError(f"doc id {doc_id!r} not in index")
        return self.matrix[row]

    def search(self, probe: Sequence[float] | np.ndarray, n: int) -> list[Hit]:
        """Exact top-n by inner product; returns min(n, len(index)) hits."""
        if n < 1:
            raise ContractError("n must be >= 1")
        vec = np.ascontiguousarray(probe, dtype=np.float64)
        if vec.ndim != 1 or vec.size != self.dim:
            raise DataError(
                f"probe dimension {vec.size} does not match index dimension {self.dim}"
            )
        idx, scores = self._kernel.topk_ip(self.matrix, vec, self._tie_rank, int(n))
        return [Hit(self.doc_ids[i], float(s)) for i, s in zip(idx, scores)]

    def save(self, path: str | Path, embedder_id: str = "") -> None:
        """Write the snapshot: header, doc-id table, LE float32 matrix."""
        path = Path(path)
        ids_blob = b"".join(
            struct.pack("<I", len(enc)) + enc
            for enc in (doc_id.encode("utf-8") for doc_id in self.doc_ids)
        )
        emb = embedder_id.encode("utf-8")
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<HIIH", _VERSION, self.dim, len(self), len(emb)))
            fh.write(emb)
            fh.write(ids_blob)
            fh.write(np.ascontiguousarray(self.matrix, dtype="<f4").tobytes())
        tmp.replace(path)

    @classmethod
    def load(cls, path: str | Path, backend: str | None = None) -> tuple["FlatIndex", str]:
        """Load a snapshot; returns (index, embedder_id)."""
        data = Path(path).read_bytes()
        if data[:4] != _MAGIC:
            raise ParseError(f"{path}: not an index snapshot")
        version, dim, count, emb_len = struct.unpack_from("<HIIH", data, 4)
        if version != _VERSION:
            raise ParseError(f"{path}: unsupported snapshot version {version}")
        offset = 4 + struct.calcsize("<HIIH")
        embedder_id = data[offset : offset + emb_len].decode("utf-8")
        offset += emb_len
        doc_ids = []
        for _ in range(count):
            (id_len,) = struct.unpack_from("<I", data, offset)
            offset += 4
            doc_ids.append(data[offset : offset + id_len].decode("utf-8"))
            offset += id_len
        expected = count * dim * 4
        blob = data[offset : offset + expected]
        if len(blob) != expected:
            raise ParseError(f"{path}: truncated snapshot matrix")
        matrix = np.frombuffer(blob, dtype="<f4").astype(np.float64).reshape(count, dim)
        return cls(doc_ids, np.ascontiguousarray(matrix), backend=backend), embedder_id
