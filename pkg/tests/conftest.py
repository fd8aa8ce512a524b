"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import json

import numpy as np
import pytest

from raggate.corpus import DocChunk
from raggate.embedding import HashEmbedder, embed_texts
from raggate.generator import MockGenerator
from raggate.index import FlatIndex


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


def make_chunks(n, prefix="d"):
    return [
        DocChunk(id=f"{prefix}{i:03d}", text=f"synthetic passage {i} for offline tests")
        for i in range(n)
    ]


def random_unit_vectors(rng, n, dim):
    matrix = rng.standard_normal((n, dim))
    return matrix / np.linalg.norm(matrix, axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def hash_embedder():
    return HashEmbedder(dim=24)


@pytest.fixture
def small_index(rng):
    chunks = make_chunks(12)
    vectors = random_unit_vectors(rng, 12, 16)
    return chunks, vectors, FlatIndex.build(chunks, vectors)


@pytest.fixture
def mock_generator():
    return MockGenerator()


def build_hash_index(chunks, dim=24):
    embedder = HashEmbedder(dim=dim)
    vectors = embed_texts([c.embedding_text for c in chunks], embedder)
    return embedder, vectors, FlatIndex.build(chunks, vectors)
