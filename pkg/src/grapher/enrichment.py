"""Offline enrichment pass: structural links, named entities, chunk identity.

All three passes are per-object independent (no pairwise work), so a corpus can
be enriched in one linear sweep and the passes are idempotent.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import requests

from .corpus import Corpus, DataObject
from .errors import ConfigError, ParseError, ValidationError

log = logging.getLogger(__name__)

ENTITY_PROMPT = """\
Identify the key entities (people, organizations, locations, dates, etc.) from the following paragraph.
Return the result as a valid Python list of strings, with no explanations, only the list.

Example:
Text:
"Barack Obama was born in Honolulu, Hawaii, and served as the 44th President of the United States."
Output:
["Barack Obama", "Honolulu", "Hawaii", "United States", "44th President"]

Text:
{content}
Output:"""

_WS_RE = re.compile(r"\s+")


def dedup_entities(entities: list[str]) -> list[str]:
    """Case-sensitive dedup preserving first-occurrence order."""
    seen: set[str] = set()
    out: list[str] = []
    for ent in entities:
        if ent not in seen:
            seen.add(ent)
            out.append(ent)
    return out


class ExtractionError(Exception):
    """A single extraction attempt failed (transport, HTTP, or unparseable reply)."""


class EntityExtractor(ABC):
    """Provider of named-entity lists for data objects.

    ``normalize`` lowercases entities and collapses internal whitespace; it is
    off by default because entity matching is exact/case-sensitive.
    """

    def __init__(self, normalize: bool = False):
        self.normalize = normalize

    @abstractmethod
    def _extract(self, object_id: str, content: str) -> list[str]: ...

    def entities_for(self, object_id: str, content: str) -> list[str]:
        entities = self._extract(object_id, content)
        if self.normalize:
            entities = [_WS_RE.sub(" ", e.lower()).strip() for e in entities]
        return dedup_entities(entities)


class FixtureFileExtractor(EntityExtractor):
    """id -> entities mapping from a JSONL fixture; deterministic and offline.

    Unknown ids yield an empty list and are recorded in ``misses``.
    """

    def __init__(self, path, normalize: bool = False):
        super().__init__(normalize=normalize)
        self.misses: list[str] = []
        self._table: dict[str, list[str]] = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(path, line_no, f"malformed JSON ({exc.msg})")
                self._table[raw["id"]] = [str(e) for e in raw.get("entities", [])]

    def _extract(self, object_id: str, content: str) -> list[str]:
        if object_id not in self._table:
            self.misses.append(object_id)
            return []
        return list(self._table[object_id])


class RemoteLLMExtractor(EntityExtractor):
    """Entity extraction through a chat-completion-style HTTP endpoint.

    Wire format: POST {"model": ..., "prompt": ...}; the reply body carries a
    JSON array of entity strings, possibly wrapped in a completion envelope.
    Endpoint and auth token default to GRAPHER_LLM_ENDPOINT / GRAPHER_LLM_TOKEN.
    """

    def __init__(
        self,
        endpoint: str | None = None,
        model: str = "gpt-4o",
        token: str | None = None,
        retries: int = 3,
        backoff: float = 1.0,
        timeout: float = 60.0,
        normalize: bool = False,
    ):
        super().__init__(normalize=normalize)
        self.endpoint = endpoint or os.environ.get("GRAPHER_LLM_ENDPOINT")
        if not self.endpoint:
            raise ConfigError(
                "no LLM endpoint configured (set GRAPHER_LLM_ENDPOINT or pass endpoint=)"
            )
        self.model = model
        self.token = token or os.environ.get("GRAPHER_LLM_TOKEN")
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout

    def _extract(self, object_id: str, content: str) -> list[str]:
        prompt = ENTITY_PROMPT.format(content=content)
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        last_error: Exception | None = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = requests.post(
                    self.endpoint,
                    json={"model": self.model, "prompt": prompt},
                    headers=headers,
                    timeout=self.timeout,
                )
                resp.raise_for_status()
                entities = parse_entity_reply(resp.text)
                if entities is None:
                    raise ExtractionError(f"unparseable reply: {resp.text[:200]!r}")
                return entities
            except (requests.RequestException, ExtractionError) as exc:
                last_error = exc
                log.warning(
                    "extraction attempt %d/%d failed for %s: %s",
                    attempt + 1,
                    self.retries,
                    object_id,
                    exc,
                )
        raise ExtractionError(f"extraction failed for {object_id!r}: {last_error}")


def parse_entity_reply(body: str) -> list[str] | None:
    """Recover the entity array from a completion reply; None if hopeless.

    Tries, in order: the whole body as a JSON array; common completion-envelope
    fields as the carrier string; the first bracketed span in the text.
    """
    candidates = [body]
    try:
        parsed = json.loads(body)
    except json.JSONDecodeError:
        parsed = None
    if isinstance(parsed, dict):
        for carrier in _envelope_strings(parsed):
            candidates.append(carrier)

    for text in candidates:
        entities = _parse_entity_array(text)
        if entities is not None:
            return entities
    return None


def _envelope_strings(reply: dict) -> list[str]:
    out: list[str] = []
    choices = reply.get("choices")
    if isinstance(choices, list) and choices and isinstance(choices[0], dict):
        message = choices[0].get("message")
        if isinstance(message, dict) and isinstance(message.get("content"), str):
            out.append(message["content"])
        if isinstance(choices[0].get("text"), str):
            out.append(choices[0]["text"])
    for key in ("content", "text", "response"):
        if isinstance(reply.get(key), str):
            out.append(reply[key])
    return out


def _parse_entity_array(text: str) -> list[str] | None:
    spans = [text.strip()]
    start = text.find("[")
    if start != -1:
        end = text.find("]", start)
        if end != -1:
            spans.append(text[start : end + 1])  # first non-greedy span
        end = text.rfind("]")
        if end > start:
            spans.append(text[start : end + 1])  # greedy, arrays containing ']'
    for span in spans:
        try:
            parsed = json.loads(span)
        except json.JSONDecodeError:
            continue
        if isinstance(parsed, list) and all(isinstance(e, str) for e in parsed):
            return parsed
    return None


# ---------------------------------------------------------------------------
# enrichment passes


def load_links(path) -> list[tuple[str, str]]:
    """Link table TSV: one ``source_id<TAB>target_id`` pair per line."""
    pairs: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 2:
                raise ParseError(
                    path, line_no, f"expected 2 tab-separated fields, got {len(fields)}"
                )
            pairs.append((fields[0], fields[1]))
    return pairs


def enrich_structural(corpus: Corpus, links: list[tuple[str, str]]) -> Corpus:
    """Populate structural_links from an external pair table.

    Pairs are symmetrized (FK/hyperlink closeness is mutual) and self-pairs
    dropped; a pair naming an unknown id is an error.
    """
    for source, target in links:
        if source not in corpus or target not in corpus:
            raise ValidationError(
                f"link pair ({source!r}, {target!r}) references an unknown object id"
            )
        if source == target:
            continue
        corpus[source].structural_links.add(target)
        corpus[target].structural_links.add(source)
    return corpus


@dataclass
class ConceptualReport:
    """Outcome of one enrich_conceptual pass."""

    enriched: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    failed: list[str] = field(default_factory=list)


def enrich_conceptual(
    corpus: Corpus, extractor: EntityExtractor, max_workers: int = 1
) -> ConceptualReport:
    """Fill the entities field for every object that does not already have one.

    Each object is visited exactly once; objects with pre-populated entities
    are skipped. Extraction failures (after the extractor's own retries) leave
    the object unenriched and are reported, not raised.
    """
    report = ConceptualReport()
    todo: list[DataObject] = []
    for obj in corpus:
        if obj.entities:
            report.skipped.append(obj.id)
        else:
            todo.append(obj)

    def run(obj: DataObject) -> tuple[DataObject, list[str] | None]:
        try:
            return obj, extractor.entities_for(obj.id, obj.content)
        except ExtractionError as exc:
            log.warning("enrichment failed for %s: %s", obj.id, exc)
            return obj, None

    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(run, todo))
    else:
        results = [run(obj) for obj in todo]

    for obj, entities in results:
        if entities is None:
            report.failed.append(obj.id)
        else:
            obj.entities = entities
            report.enriched.append(obj.id)
    return report


@dataclass
class ChunkingConfig:
    window: int = 100
    mode: str = "split"  # "split" | "pre-chunked"

    def __post_init__(self) -> None:
        if self.window < 1:
            raise ConfigError("chunking window must be >= 1")
        if self.mode not in ("split", "pre-chunked"):
            raise ConfigError(f"unknown chunking mode {self.mode!r}")


def enrich_contextual(documents, cfg: ChunkingConfig) -> list[DataObject]:
    """Turn documents into chunk objects carrying (doc_id, chunk_id).

    Split mode takes (doc_id, text) pairs and emits non-overlapping
    whitespace-token windows, chunk_id restarting at 0 per document, with
    object id "<doc_id>#<chunk_id>". Pre-chunked mode takes
    (doc_id, chunk_id, content) triples and passes them through after
    duplicate checks.
    """
    chunks: list[DataObject] = []
    if cfg.mode == "split":
        for doc_id, text in documents:
            tokens = text.split()
            for chunk_id, start in enumerate(range(0, len(tokens), cfg.window)):
                chunks.append(
                    DataObject(
                        id=f"{doc_id}#{chunk_id}",
                        content=" ".join(tokens[start : start + cfg.window]),
                        doc_id=doc_id,
                        chunk_id=chunk_id,
                    )
                )
    else:
        seen: set[tuple[str, int]] = set()
        for doc_id, chunk_id, content in documents:
            if (doc_id, chunk_id) in seen:
                raise ValidationError(
                    f"duplicate chunk ({doc_id!r}, {chunk_id}) in pre-chunked input"
                )
            seen.add((doc_id, chunk_id))
            chunks.append(
                DataObject(
                    id=f"{doc_id}#{chunk_id}",
                    content=content,
                    doc_id=doc_id,
                    chunk_id=chunk_id,
                )
            )
    return chunks
