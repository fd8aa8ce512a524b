"""Flat index: exactness, ordering, determinism, snapshots."""

import numpy as np
import pytest

from raggate import kernels
from raggate.errors import ContractError, DataError, IntegrityError
from raggate.index import FlatIndex, as_unit_vector

from conftest import make_chunks, random_unit_vectors
from oracles import brute_search

BACKENDS = kernels.available_backends()


def test_single_chunk_index():
    index = FlatIndex.build(make_chunks(1), [[1.0, 0.0]])
    assert len(index) == 1
    hits = index.search([1.0, 0.0], 1)
    assert hits[0].doc_id == "d000"
    assert hits[0].score == pytest.approx(1.0, abs=1e-6)


def test_length_mismatch_is_build_error():
    with pytest.raises(DataError, match="mismatch"):
        FlatIndex.build(make_chunks(3), [[1.0, 0.0], [0.0, 1.0]])


def test_dimension_mismatch_is_build_error():
    with pytest.raises(DataError):
        FlatIndex.build(make_chunks(2), [[1.0, 0.0], [0.0, 0.0, 1.0]])


def test_non_unit_vector_rejected():
    with pytest.raises(DataError, match="unit"):
        FlatIndex.build(make_chunks(1), [[3.0, 4.0]])
    assert as_unit_vector([0.6, 0.8]) is not None


def test_empty_build_rejected():
    with pytest.raises(DataError):
        FlatIndex.build([], [])


def test_rebuild_determinism(rng):
    chunks = make_chunks(40)
    vectors = random_unit_vectors(rng, 40, 12)
    probes = random_unit_vectors(rng, 5, 12)
    first = FlatIndex.build(chunks, vectors)
    second = FlatIndex.build(chunks, vectors)
    for probe in probes:
        assert first.search(probe, 7) == second.search(probe, 7)


def test_self_similarity_scores_one(rng):
    chunks = make_chunks(6)
    vectors = random_unit_vectors(rng, 6, 8)
    index = FlatIndex.build(chunks, vectors)
    hits = index.search(vectors[4], 1)
    assert hits[0].doc_id == "d004"
    assert hits[0].score == pytest.approx(1.0, abs=1e-6)


def test_known_inner_products_ordering():
    # three stored vectors with IPs {0.9, 0.1, 0.5} against probe e0
    def tilted(ip):
        return [ip, float(np.sqrt(1.0 - ip * ip))]

    chunks = make_chunks(3)
    vectors = [tilted(0.9), tilted(0.1), tilted(0.5)]
    index = FlatIndex.build(chunks, vectors)
    probe = [1.0, 0.0]
    expected = brute_search([c.id for c in chunks], vectors, probe, 2)
    hits = index.search(probe, 2)
    assert [(h.doc_id, pytest.approx(h.score, abs=1e-9)) for h in hits] == [
        (d, pytest.approx(s, abs=1e-9)) for d, s in expected
    ]
    assert [h.doc_id for h in hits] == ["d000", "d002"]


def test_n_larger_than_corpus_clamps(rng):
    chunks = make_chunks(4)
    index = FlatIndex.build(chunks, random_unit_vectors(rng, 4, 8))
    hits = index.search(random_unit_vectors(rng, 1, 8)[0], 25)
    assert len(hits) == 4


def test_probe_dimension_mismatch():
    index = FlatIndex.build(make_chunks(1), [[1.0, 0.0]])
    with pytest.raises(DataError, match="dimension"):
        index.search([1.0, 0.0, 0.0], 1)
    with pytest.raises(ContractError):
        index.search([1.0, 0.0], 0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_tie_break_ascending_doc_id(backend):
    # identical stored vectors: scores tie exactly, ids decide
    chunks = make_chunks(4)[::-1]  # build order d003, d002, d001, d000
    vec = [0.0, 1.0]
    index = FlatIndex.build(chunks, [vec] * 4, backend=backend)
    hits = index.search([0.0, 1.0], 3)
    assert [h.doc_id for h in hits] == ["d000", "d001", "d002"]


@pytest.mark.parametrize("backend", BACKENDS)
def test_one_hot_exact_ties_match_oracle(backend):
    # exact zero scores for all but one doc: ordering is purely id-driven
    chunks = make_chunks(5)
    vectors = np.eye(5)[[3, 0, 4, 1, 2]]
    index = FlatIndex.build(chunks, vectors, backend=backend)
    probe = np.eye(5)[0]
    expected = brute_search([c.id for c in chunks], vectors, probe, 5)
    assert [h.doc_id for h in index.search(probe, 5)] == [d for d, _ in expected]


@pytest.mark.parametrize("backend", BACKENDS)
def test_oracle_equivalence_random(rng, backend):
    for _ in range(5):
        size = int(rng.integers(1, 120))
        dim = int(rng.integers(4, 24))
        chunks = make_chunks(size)
        vectors = random_unit_vectors(rng, size, dim)
        index = FlatIndex.build(chunks, vectors, backend=backend)
        probe = random_unit_vectors(rng, 1, dim)[0]
        for n in (1, 3, size, size + 10):
            expected = brute_search([c.id for c in chunks], vectors, probe, n)
            hits = index.search(probe, n)
            assert [h.doc_id for h in hits] == [d for d, _ in expected]
            for hit, (_, score) in zip(hits, expected):
                assert hit.score == pytest.approx(score, abs=1e-6)


def test_snapshot_roundtrip(tmp_path, rng):
    chunks = make_chunks(15)
    vectors = random_unit_vectors(rng, 15, 10).astype(np.float32)
    index = FlatIndex.build(chunks, vectors)
    path = tmp_path / "index.flat"
    index.save(path, embedder_id="hash-v1:10")
    loaded, embedder_id = FlatIndex.load(path)
    assert embedder_id == "hash-v1:10"
    assert loaded.doc_ids == index.doc_ids
    assert loaded.dim == 10
    # float32 at rest: vectors built from float32 round-trip bit-exactly
    probe = random_unit_vectors(rng, 1, 10)[0]
    assert loaded.search(probe, 5) == index.search(probe, 5)


def test_vector_lookup():
    chunks = make_chunks(2)
    index = FlatIndex.build(chunks, [[1.0, 0.0], [0.0, 1.0]])
    assert np.array_equal(index.vector("d001"), [0.0, 1.0])
    with pytest.raises(IntegrityError):
        index.vector("nope")
