import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from hypothesis import given
from hypothesis import strategies as st

from grapher.corpus import Corpus, DataObject
from grapher.enrichment import (
    ENTITY_PROMPT,
    ChunkingConfig,
    EntityExtractor,
    ExtractionError,
    FixtureFileExtractor,
    RemoteLLMExtractor,
    dedup_entities,
    enrich_conceptual,
    enrich_contextual,
    enrich_structural,
    load_links,
    parse_entity_reply,
)
from grapher.errors import ConfigError, ValidationError

from conftest import make_corpus


class ListExtractor(EntityExtractor):
    """Canned per-id entity lists; ids absent from the table raise."""

    def __init__(self, table, normalize=False):
        super().__init__(normalize=normalize)
        self.table = table
        self.calls = []

    def _extract(self, object_id, content):
        self.calls.append(object_id)
        if object_id not in self.table:
            raise ExtractionError(f"no entities for {object_id}")
        return list(self.table[object_id])


# ---------------------------------------------------------------------------
# entity post-processing


def test_dedup_preserves_first_occurrence():
    assert dedup_entities(["b", "a", "b", "A", "a"]) == ["b", "a", "A"]


@given(st.lists(st.text(max_size=6)))
def test_dedup_idempotent(entities):
    once = dedup_entities(entities)
    assert dedup_entities(once) == once
    assert len(set(once)) == len(once)


def test_normalize_hook():
    extractor = ListExtractor({"a": ["Foo  Bar", "foo bar", "BAZ"]}, normalize=True)
    assert extractor.entities_for("a", "") == ["foo bar", "baz"]


# ---------------------------------------------------------------------------
# reply parsing


@pytest.mark.parametrize(
    "body,expected",
    [
        ('["Acme", "Q3"]', ["Acme", "Q3"]),
        ('  ["x"]  ', ["x"]),
        ("[]", []),
        ('Here you go:\n["a", "b"]\nHope that helps!', ["a", "b"]),
        ('["odd ] bracket", "b"]', ["odd ] bracket", "b"]),
        (json.dumps({"choices": [{"message": {"content": '["from envelope"]'}}]}),
         ["from envelope"]),
        (json.dumps({"choices": [{"text": 'Output: ["from text"]'}]}), ["from text"]),
        (json.dumps({"response": '["from response"]'}), ["from response"]),
        ('{"choices": []}', []),  # bracket-scan fallback finds the empty array
    ],
)
def test_parse_entity_reply_accepts(body, expected):
    assert parse_entity_reply(body) == expected


@pytest.mark.parametrize(
    "body",
    ["no list here", "[1, 2, 3]", '["unterminated', ""],
)
def test_parse_entity_reply_rejects(body):
    assert parse_entity_reply(body) is None


def test_prompt_formats_content():
    prompt = ENTITY_PROMPT.format(content="The quick fox.")
    assert prompt.endswith("The quick fox.\nOutput:")
    assert "Barack Obama" in prompt  # few-shot example intact


# ---------------------------------------------------------------------------
# fixture extractor


def test_fixture_extractor(tmp_path):
    path = tmp_path / "entities.jsonl"
    path.write_text(
        json.dumps({"id": "a", "entities": ["X", "X", "Y"]}) + "\n"
        + json.dumps({"id": "b", "entities": []}) + "\n"
    )
    extractor = FixtureFileExtractor(path)
    assert extractor.entities_for("a", "") == ["X", "Y"]
    assert extractor.entities_for("b", "") == []
    assert extractor.entities_for("ghost", "") == []
    assert extractor.misses == ["ghost"]


# ---------------------------------------------------------------------------
# structural pass


def test_enrich_structural_symmetrizes():
    corpus = make_corpus(3)
    enrich_structural(corpus, [("o0", "o1"), ("o1", "o2")])
    assert corpus["o0"].structural_links == {"o1"}
    assert corpus["o1"].structural_links == {"o0", "o2"}
    assert corpus["o2"].structural_links == {"o1"}


def test_enrich_structural_drops_self_pairs():
    corpus = make_corpus(2)
    enrich_structural(corpus, [("o0", "o0")])
    assert corpus["o0"].structural_links == set()


def test_enrich_structural_unknown_id():
    with pytest.raises(ValidationError, match="unknown object id"):
        enrich_structural(make_corpus(1), [("o0", "nope")])


def test_enrich_structural_idempotent():
    corpus = make_corpus(2)
    for _ in range(2):
        enrich_structural(corpus, [("o0", "o1")])
    assert corpus["o0"].structural_links == {"o1"}


def test_load_links(tmp_path):
    path = tmp_path / "links.tsv"
    path.write_text("a\tb\n\nc\td\n")
    assert load_links(path) == [("a", "b"), ("c", "d")]


# ---------------------------------------------------------------------------
# conceptual pass


def test_enrich_conceptual_skips_and_fails():
    corpus = make_corpus(3)
    corpus["o0"].entities = ["seed"]
    extractor = ListExtractor({"o1": ["X"]})
    report = enrich_conceptual(corpus, extractor)
    assert report.skipped == ["o0"]
    assert report.enriched == ["o1"]
    assert report.failed == ["o2"]
    assert corpus["o1"].entities == ["X"]
    assert corpus["o2"].entities == []


def test_enrich_conceptual_idempotent():
    corpus = make_corpus(2)
    extractor = ListExtractor({"o0": ["X"], "o1": ["Y"]})
    enrich_conceptual(corpus, extractor)
    report = enrich_conceptual(corpus, extractor)
    assert report.skipped == ["o0", "o1"]
    assert extractor.calls == ["o0", "o1"]  # second pass extracted nothing


def test_enrich_conceptual_parallel_matches_serial():
    table = {f"o{i}": [f"e{i}", "shared"] for i in range(10)}
    serial, parallel = make_corpus(10), make_corpus(10)
    enrich_conceptual(serial, ListExtractor(table), max_workers=1)
    enrich_conceptual(parallel, ListExtractor(table), max_workers=4)
    for i in range(10):
        assert serial[f"o{i}"].entities == parallel[f"o{i}"].entities


# ---------------------------------------------------------------------------
# remote extractor against a real local HTTP server


class _Handler(BaseHTTPRequestHandler):
    responses: list = []  # (status, body) consumed left to right
    seen: list = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        _Handler.seen.append(
            {
                "payload": json.loads(self.rfile.read(length)),
                "auth": self.headers.get("Authorization"),
            }
        )
        status, body = (
            _Handler.responses.pop(0) if _Handler.responses else (200, "[]")
        )
        data = body.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):  # keep pytest output clean
        pass


@pytest.fixture
def llm_server():
    _Handler.responses = []
    _Handler.seen = []
    server = ThreadingHTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/v1/completions", _Handler
    server.shutdown()
    thread.join()


def test_remote_extractor_happy_path(llm_server):
    endpoint, handler = llm_server
    handler.responses = [(200, '["Acme Corp", "Berlin"]')]
    extractor = RemoteLLMExtractor(endpoint=endpoint, token="sekrit", backoff=0)
    assert extractor.entities_for("a", "Acme Corp opened in Berlin.") == [
        "Acme Corp",
        "Berlin",
    ]
    request = handler.seen[0]
    assert request["auth"] == "Bearer sekrit"
    assert request["payload"]["model"] == "gpt-4o"
    assert "Acme Corp opened in Berlin." in request["payload"]["prompt"]


def test_remote_extractor_retries_then_succeeds(llm_server):
    endpoint, handler = llm_server
    handler.responses = [(500, "oops"), (200, "not a list"), (200, '["ok"]')]
    extractor = RemoteLLMExtractor(endpoint=endpoint, retries=3, backoff=0)
    assert extractor.entities_for("a", "text") == ["ok"]
    assert len(handler.seen) == 3


def test_remote_extractor_exhausts_retries(llm_server):
    endpoint, handler = llm_server
    handler.responses = [(503, "down")] * 2
    extractor = RemoteLLMExtractor(endpoint=endpoint, retries=2, backoff=0)
    with pytest.raises(ExtractionError, match="extraction failed"):
        extractor.entities_for("a", "text")
    assert len(handler.seen) == 2


def test_remote_extractor_needs_endpoint(monkeypatch):
    monkeypatch.delenv("GRAPHER_LLM_ENDPOINT", raising=False)
    with pytest.raises(ConfigError, match="endpoint"):
        RemoteLLMExtractor()


def test_remote_extractor_reads_env(monkeypatch, llm_server):
    endpoint, handler = llm_server
    handler.responses = [(200, '["env"]')]
    monkeypatch.setenv("GRAPHER_LLM_ENDPOINT", endpoint)
    monkeypatch.setenv("GRAPHER_LLM_TOKEN", "envtoken")
    extractor = RemoteLLMExtractor(backoff=0)
    assert extractor.entities_for("a", "x") == ["env"]
    assert handler.seen[0]["auth"] == "Bearer envtoken"


# ---------------------------------------------------------------------------
# contextual pass


def test_chunking_config_validation():
    with pytest.raises(ConfigError):
        ChunkingConfig(window=0)
    with pytest.raises(ConfigError):
        ChunkingConfig(mode="overlap")


def test_split_chunking():
    chunks = enrich_contextual(
        [("doc", " ".join(f"w{i}" for i in range(7)))], ChunkingConfig(window=3)
    )
    assert [c.id for c in chunks] == ["doc#0", "doc#1", "doc#2"]
    assert [c.chunk_id for c in chunks] == [0, 1, 2]
    assert chunks[0].content == "w0 w1 w2"
    assert chunks[2].content == "w6"
    assert all(c.doc_id == "doc" for c in chunks)


def test_split_chunking_restarts_per_document():
    chunks = enrich_contextual(
        [("a", "one two"), ("b", "three four")], ChunkingConfig(window=10)
    )
    assert [(c.doc_id, c.chunk_id) for c in chunks] == [("a", 0), ("b", 0)]


def test_prechunked_passthrough_and_duplicates():
    cfg = ChunkingConfig(mode="pre-chunked")
    chunks = enrich_contextual([("d", 0, "x"), ("d", 1, "y")], cfg)
    assert [c.id for c in chunks] == ["d#0", "d#1"]
    with pytest.raises(ValidationError, match="duplicate chunk"):
        enrich_contextual([("d", 0, "x"), ("d", 0, "y")], cfg)


@given(st.text(alphabet="ab ", max_size=80), st.integers(min_value=1, max_value=9))
def test_split_chunking_covers_every_token(text, window):
    chunks = enrich_contextual([("d", text)], ChunkingConfig(window=window))
    rejoined = " ".join(c.content for c in chunks).split()
    assert rejoined == text.split()
    assert [c.chunk_id for c in chunks] == list(range(len(chunks)))
