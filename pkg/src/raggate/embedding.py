"""Embedding backends and the persistent embedding cache.

All vectors leaving this module are L2-normalized float32 arrays; whatever
a backend returns is renormalized locally so inner products behave as
cosines downstream. The cache is an append-only binary file of
(sha256 key, dimension, little-endian float32 array) records with an
in-memory index rebuilt on open; keys are content hashes of
embedder-id + 0x00 + exact text bytes, so different embedders never
collide.
"""

from __future__ import annotations

import hashlib
import json
import struct
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .errors import EmbeddingError, ParseError

_RECORD_HEADER = struct.Struct("<32sI")


class EmbedderHandle(Protocol):
    """Anything that can turn a batch of texts into raw vectors."""

    embedder_id: str
    batch_size: int

    def embed(self, texts: list[str]) -> list[list[float]]: ...


def cache_key(embedder_id: str, text: str) -> bytes:
    return hashlib.sha256(embedder_id.encode("utf-8") + b"\x00" + text.encode("utf-8")).digest()


def normalize(raw: Sequence[float] | np.ndarray) -> np.ndarray:
    """L2-normalize to a float32 unit vector (the canonical at-rest form)."""
    vec = np.asarray(raw, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise EmbeddingError("embedder returned a malformed vector")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0 or not np.isfinite(norm):
        raise EmbeddingError("embedder returned a zero or non-finite vector")
    return (vec / norm).astype(np.float32)


class EmbeddingCache:
    """Append-only on-disk vector cache; concurrent readers, one writer."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._index: dict[bytes, np.ndarray] = {}
        if self.path.exists():
            self._load()

    def _load(self) -> None:
        data = self.path.read_bytes()
        offset = 0
        while offset < len(data):
            if offset + _RECORD_HEADER.size > len(data):
                raise ParseError(f"{self.path}: truncated cache record header")
            key, dim = _RECORD_HEADER.unpack_from(data, offset)
            offset += _RECORD_HEADER.size
            end = offset + 4 * dim
            if end > len(data):
                raise ParseError(f"{self.path}: truncated cache record body")
            vec = np.frombuffer(data[offset:end], dtype="<f4").copy()
            self._index[key] = vec
            offset = end

    def __len__(self) -> int:
        return len(self._index)

    def get(self, key: bytes) -> np.ndarray | None:
        vec = self._index.get(key)
        return None if vec is None else vec.copy()

    def put(self, key: bytes, vector: np.ndarray) -> None:
        vec = np.ascontiguousarray(vector, dtype="<f4")
        with self._lock:
            if key in self._index:
                return
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "ab") as fh:
                fh.write(_RECORD_HEADER.pack(key, vec.size))
                fh.write(vec.tobytes())
            self._index[key] = vec


class HashEmbedder:
    """Deterministic offline embedder: text -> pseudo-random unit direction.

    Derived purely from sha256, so it is stable across runs and platforms.
    No semantics — it exists for fully offline pipelines and tests.
    """

    def __init__(self, dim: int = 32, batch_size: int = 64):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self.dim = dim
        self.batch_size = batch_size
        self.embedder_id = f"hash-v1:{dim}"
        self.call_count = 0

    def embed(self, texts: list[str]) -> list[list[float]]:
        self.call_count += 1
        return [self._one(t) for t in texts]

    def _one(self, text: str) -> list[float]:
        raw = text.encode("utf-8")
        values: list[float] = []
        block = 0
        while len(values) < self.dim:
            digest = hashlib.sha256(raw + b"\x00" + struct.pack("<I", block)).digest()
            for i in range(0, len(digest), 4):
                (word,) = struct.unpack_from("<I", digest, i)
                values.append(word / 2147483648.0 - 1.0)
                if len(values) == self.dim:
                    break
            block += 1
        return values


class ScriptedEmbedder:
    """Exact text -> vector mapping, for fully scripted offline runs.

    Unknown text raises EmbeddingError naming the text hash, mirroring the
    scripted generator's miss behaviour.
    """

    def __init__(self, vectors: dict[str, Sequence[float]], batch_size: int = 64):
        self._vectors = {t: list(v) for t, v in vectors.items()}
        digest = hashlib.sha256(
            json.dumps(sorted(self._vectors), ensure_ascii=False).encode("utf-8")
        ).hexdigest()[:16]
        self.embedder_id = f"scripted:{digest}"
        self.batch_size = batch_size
        self.call_count = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedEmbedder":
        vectors: dict[str, Sequence[float]] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    vectors[str(record["text"])] = record["vector"]
                except (json.JSONDecodeError, KeyError) as exc:
                    raise ParseError(f"{path}:{lineno}: malformed embedding script") from exc
        return cls(vectors)

    def embed(self, texts: list[str]) -> list[list[float]]:
        self.call_count += 1
        out = []
        for text in texts:
            if text not in self._vectors:
                digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
                raise EmbeddingError(f"no scripted vector for text sha256={digest}")
            out.append(self._vectors[text])
        return out


class HttpEmbedder:
    """OpenAI-compatible embeddings endpoint client.

    Request shape {model, input: [texts]}, response {data: [{embedding}]}.
    Transient transport failures are retried with backoff.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        batch_size: int = 64,
        retries: int = 3,
        timeout: float = 60.0,
        backoff: float = 0.5,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.batch_size = batch_size
        self.retries = retries
        self.timeout = timeout
        self.backoff = backoff
        self.embedder_id = f"http:{model}"
        self.call_count = 0

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def embed(self, texts: list[str]) -> list[list[float]]:
        import requests

        self.call_count += 1
        payload = {"model": self.model, "input": texts}
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                response = requests.post(
                    f"{self.base_url}/embeddings",
                    json=payload,
                    headers=self._headers(),
                    timeout=self.timeout,
                )
                response.raise_for_status()
                return self.parse_response(response.json(), len(texts))
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff * (2**attempt))
            except requests.HTTPError as exc:
                raise EmbeddingError(f"embedding endpoint error: {exc}") from exc
        raise EmbeddingError(f"embedding endpoint unreachable: {last_error}")

    @staticmethod
    def parse_response(body: dict, expected: int) -> list[list[float]]:
        try:
            data = body["data"]
            vectors = [item["embedding"] for item in data]
        except (KeyError, TypeError) as exc:
            raise EmbeddingError(f"malformed embeddings response: {exc}") from exc
        if len(vectors) != expected:
            raise EmbeddingError(
                f"embeddings response carried {len(vectors)} vectors, expected {expected}"
            )
        return vectors


def embed_texts(
    texts: Sequence[str],
    embedder: EmbedderHandle,
    cache: EmbeddingCache | None = None,
    max_in_flight: int = 1,
) -> list[np.ndarray]:
    """Embed texts with caching and deduplication.

    Identical text + embedder id always yields a bit-identical float32 unit
    vector; cached texts trigger no embedder calls. Batches of uncached
    texts may be issued concurrently up to ``max_in_flight``.
    """
    results: list[np.ndarray | None] = [None] * len(texts)
    pending: dict[str, list[int]] = {}
    for i, text in enumerate(texts):
        key = cache_key(embedder.embedder_id, text)
        cached = cache.get(key) if cache is not None else None
        if cached is not None:
            results[i] = cached
        else:
            pending.setdefault(text, []).append(i)

    if pending:
        unique = list(pending)
        batch_size = max(1, getattr(embedder, "batch_size", 64))
        batches = [unique[i : i + batch_size] for i in range(0, len(unique), batch_size)]

        def run(batch: list[str]) -> list[np.ndarray]:
            try:
                raw = embedder.embed(list(batch))
            except EmbeddingError as exc:
                exc.failed_indices = sorted(i for t in batch for i in pending[t])
                raise
            if len(raw) != len(batch):
                raise EmbeddingError(
                    "embedder returned a batch of the wrong size",
                    failed_indices=sorted(i for t in batch for i in pending[t]),
                )
            return [normalize(v) for v in raw]

        if max_in_flight > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
                batch_vectors = list(pool.map(run, batches))
        else:
            batch_vectors = [run(b) for b in batches]

        for batch, vectors in zip(batches, batch_vectors):
            for text, vec in zip(batch, vectors):
                if cache is not None:
                    cache.put(cache_key(embedder.embedder_id, text), vec)
                for i in pending[text]:
                    results[i] = vec.copy()

    return [r for r in results if r is not None]
