"""Corpus and query loading: format, ordering, integrity, round-trips."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from raggate.corpus import (
    DocChunk,
    PassthroughChunker,
    QueryItem,
    check_gold_ids,
    load_corpus,
    load_queries,
    save_corpus,
)
from raggate.errors import ContractError, IntegrityError, ParseError

from conftest import write_jsonl


def test_two_line_file_loads_in_order(tmp_path):
    path = write_jsonl(
        tmp_path / "docs.jsonl",
        [{"id": "a", "text": "alpha text"}, {"id": "b", "text": "beta text"}],
    )
    chunks = load_corpus(path)
    assert [c.id for c in chunks] == ["a", "b"]
    assert chunks[0].text == "alpha text"


def test_duplicate_id_rejected(tmp_path):
    path = write_jsonl(
        tmp_path / "docs.jsonl",
        [{"id": "a", "text": "first"}, {"id": "a", "text": "second"}],
    )
    with pytest.raises(IntegrityError, match="'a'"):
        load_corpus(path)


def test_hotpot_style_record_roundtrip(tmp_path):
    # write-then-read equality, title preserved
    original = [
        DocChunk(id="5a8b57f25542995d1e6f1371", title="Scott Derrickson", text="Scott Derrickson is an American director."),
        DocChunk(id="xyz", text="no title here"),
    ]
    path = tmp_path / "docs.jsonl"
    save_corpus(original, path)
    loaded = load_corpus(path)
    assert loaded == original
    # and a second serialize-load cycle is still the identity
    save_corpus(loaded, path)
    assert load_corpus(path) == original


def test_malformed_line_names_line_number(tmp_path):
    path = tmp_path / "docs.jsonl"
    path.write_text('{"id": "a", "text": "ok"}\n{broken\n', encoding="utf-8")
    with pytest.raises(ParseError, match=":2"):
        load_corpus(path)


def test_missing_field_is_parse_error(tmp_path):
    path = write_jsonl(tmp_path / "docs.jsonl", [{"id": "a"}])
    with pytest.raises(ParseError, match="text"):
        load_corpus(path)


def test_empty_text_rejected(tmp_path):
    path = write_jsonl(tmp_path / "docs.jsonl", [{"id": "a", "text": "   "}])
    with pytest.raises(ParseError):
        load_corpus(path)
    with pytest.raises(ContractError):
        DocChunk(id="a", text=" \t ")


def test_query_loading_and_gold_check(tmp_path):
    path = write_jsonl(
        tmp_path / "queries.jsonl",
        [
            {"id": "q1", "question": "Who?", "answers": ["Alice"], "gold_doc_ids": ["a"]},
            {"id": "q2", "question": "What?", "answers": ["thing", "object"]},
        ],
    )
    queries = load_queries(path)
    assert queries[0].gold_doc_ids == ("a",)
    assert queries[1].gold_doc_ids is None
    assert queries[1].gold_answers == ("thing", "object")

    chunks = [DocChunk(id="a", text="alpha")]
    check_gold_ids(queries, chunks)
    bad = [QueryItem(id="q3", question="Huh?", gold_doc_ids=("missing",))]
    with pytest.raises(IntegrityError, match="missing"):
        check_gold_ids(bad, chunks)


def test_duplicate_query_id_rejected(tmp_path):
    path = write_jsonl(
        tmp_path / "queries.jsonl",
        [{"id": "q1", "question": "A?"}, {"id": "q1", "question": "B?"}],
    )
    with pytest.raises(IntegrityError):
        load_queries(path)


def test_passthrough_chunker_identity():
    chunks = PassthroughChunker().chunk("doc1", "Title", "body text")
    assert chunks == [DocChunk(id="doc1", title="Title", text="body text")]


_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\n\r"),
    min_size=1,
).filter(lambda s: s.strip())


@settings(max_examples=50, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(0, 10**6), _text, st.one_of(st.just(""), _text)),
        min_size=1,
        max_size=20,
        unique_by=lambda t: t[0],
    )
)
def test_save_load_identity_property(tmp_path_factory, rows):
    chunks = [DocChunk(id=f"id{n}", text=text, title=title) for n, text, title in rows]
    path = tmp_path_factory.mktemp("corpus") / "docs.jsonl"
    save_corpus(chunks, path)
    assert load_corpus(path) == chunks
