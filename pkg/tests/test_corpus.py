import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grapher.corpus import (
    Corpus,
    DataObject,
    Query,
    atomic_write_text,
    load_corpus,
    load_qrels,
    load_queries,
    save_corpus,
    save_qrels,
    save_queries,
    validate,
)
from grapher.errors import ParseError, ValidationError

ids = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd"), min_codepoint=33),
    min_size=1,
    max_size=12,
)


def objects_strategy():
    return st.builds(
        DataObject,
        id=ids,
        content=st.text(max_size=40),
        entities=st.lists(st.text(min_size=1, max_size=10), max_size=4),
        extra=st.dictionaries(
            st.sampled_from(["source", "score_hint", "lang"]),
            st.one_of(st.integers(), st.text(max_size=8), st.booleans()),
            max_size=2,
        ),
    )


# ---------------------------------------------------------------------------
# DataObject / Corpus construction


def test_object_requires_id():
    with pytest.raises(ValidationError):
        DataObject(id="", content="x")


def test_object_rejects_self_link():
    with pytest.raises(ValidationError, match="itself"):
        DataObject(id="a", content="x", structural_links={"a"})


def test_doc_and_chunk_must_come_together():
    with pytest.raises(ValidationError):
        DataObject(id="a", content="x", doc_id="d")
    with pytest.raises(ValidationError):
        DataObject(id="a", content="x", chunk_id=0)
    with pytest.raises(ValidationError):
        DataObject(id="a", content="x", doc_id="d", chunk_id=-1)
    DataObject(id="a", content="x", doc_id="d", chunk_id=0)  # fine


def test_corpus_rejects_duplicate_id():
    corpus = Corpus([DataObject(id="a", content="x")])
    with pytest.raises(ValidationError, match="duplicate"):
        corpus.add(DataObject(id="a", content="y"))


def test_corpus_preserves_insertion_order():
    corpus = Corpus(DataObject(id=f"o{i}", content="") for i in (3, 1, 2))
    assert corpus.ids() == ["o3", "o1", "o2"]


def test_corpus_getitem_unknown():
    with pytest.raises(ValidationError, match="unknown object"):
        Corpus()["ghost"]


def test_query_requires_id():
    with pytest.raises(ValidationError):
        Query(id="", text="x")


# ---------------------------------------------------------------------------
# file round-trips


def test_corpus_round_trip_keeps_unknown_fields(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text(
        json.dumps({"id": "a", "content": "x", "source": "web", "rank": 3}) + "\n"
    )
    corpus = load_corpus(path)
    assert corpus["a"].extra == {"source": "web", "rank": 3}
    out = tmp_path / "copy.jsonl"
    save_corpus(corpus, out)
    assert json.loads(out.read_text())["source"] == "web"


@settings(max_examples=50)
@given(st.lists(objects_strategy(), max_size=8, unique_by=lambda o: o.id))
def test_corpus_round_trip_property(tmp_path_factory, objects):
    path = tmp_path_factory.mktemp("rt") / "corpus.jsonl"
    save_corpus(Corpus(objects), path)
    loaded = load_corpus(path)
    assert loaded.ids() == [o.id for o in objects]
    for obj in objects:
        got = loaded[obj.id]
        assert got.content == obj.content
        assert got.entities == obj.entities
        assert got.extra == obj.extra


def test_queries_round_trip(tmp_path):
    path = tmp_path / "queries.jsonl"
    save_queries([Query(id="q1", text="a"), Query(id="q2", text="b")], path)
    assert [q.id for q in load_queries(path)] == ["q1", "q2"]


def test_duplicate_query_id_rejected(tmp_path):
    path = tmp_path / "queries.jsonl"
    path.write_text('{"id": "q1", "text": "a"}\n{"id": "q1", "text": "b"}\n')
    with pytest.raises(ValidationError, match="duplicate query"):
        load_queries(path)


def test_qrels_round_trip(tmp_path):
    path = tmp_path / "qrels.tsv"
    save_qrels({"q1": {"b", "a"}, "q2": {"c"}}, path)
    assert path.read_text() == "q1\ta\nq1\tb\nq2\tc\n"
    assert load_qrels(path) == {"q1": {"a", "b"}, "q2": {"c"}}


def test_qrels_bad_column_count(tmp_path):
    path = tmp_path / "qrels.tsv"
    path.write_text("q1\ta\tb\n")
    with pytest.raises(ParseError, match="2 tab-separated"):
        load_qrels(path)


def test_parse_error_names_path_and_line(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('{"id": "a", "content": "x"}\nnot json\n')
    with pytest.raises(ParseError) as err:
        load_corpus(path)
    assert str(path) in str(err.value)
    assert err.value.line_no == 2


def test_non_object_jsonl_line_rejected(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text("[1, 2]\n")
    with pytest.raises(ParseError, match="expected a JSON object"):
        load_corpus(path)


def test_blank_lines_are_skipped(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text('\n{"id": "a", "content": "x"}\n\n')
    assert load_corpus(path).ids() == ["a"]


def test_atomic_write_creates_parents_and_leaves_no_temp(tmp_path):
    target = tmp_path / "deep" / "nested" / "file.txt"
    atomic_write_text(target, "payload")
    assert target.read_text() == "payload"
    assert [p.name for p in target.parent.iterdir()] == ["file.txt"]


# ---------------------------------------------------------------------------
# validation


def test_validate_clean(toy_corpus):
    queries = [Query(id="q1", text="x")]
    findings = validate(toy_corpus, queries, {"q1": {"t1"}})
    kinds = {f.kind for f in findings}
    assert "dangling-link" not in kinds
    assert "unknown-query" not in kinds
    assert "unknown-object" not in kinds


def test_validate_reports_all_kinds(toy_corpus):
    toy_corpus["t1"].structural_links.add("ghost")
    findings = validate(toy_corpus, [], {"q9": {"t1", "nope"}})
    kinds = sorted(f.kind for f in findings)
    assert kinds == ["chunk-gap", "dangling-link", "unknown-object", "unknown-query"]
    gap = next(f for f in findings if f.kind == "chunk-gap")
    assert "chunk_id 2" in gap.message


def test_validate_chunk_gap_only_within_doc():
    corpus = Corpus(
        [
            DataObject(id="a#0", content="", doc_id="a", chunk_id=0),
            DataObject(id="b#0", content="", doc_id="b", chunk_id=0),
            DataObject(id="b#1", content="", doc_id="b", chunk_id=1),
        ]
    )
    assert validate(corpus, [], {}) == []
