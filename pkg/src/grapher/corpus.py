"""Data objects, queries and relevance judgments, plus their on-disk formats.

The corpus is JSONL (one object per line), queries are JSONL with ``id`` and
``text``, and qrels are two-column TSV ``query_id<TAB>object_id``. Unknown JSON
fields on corpus lines are preserved on round-trip but ignored by all logic.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .errors import ParseError, ValidationError

# Corpus-line keys owned by the model; everything else rides along in `extra`.
_KNOWN_FIELDS = ("id", "content", "structural_links", "entities", "doc_id", "chunk_id")


@dataclass
class DataObject:
    """One indexable unit: a passage, a serialized table, or a chunk."""

    id: str
    content: str
    structural_links: set[str] = field(default_factory=set)
    entities: list[str] = field(default_factory=list)
    doc_id: str | None = None
    chunk_id: int | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("data object id must be a non-empty string")
        self.structural_links = set(self.structural_links)
        if self.id in self.structural_links:
            raise ValidationError(
                f"object {self.id!r} lists itself in structural_links"
            )
        if (self.doc_id is None) != (self.chunk_id is None):
            raise ValidationError(
                f"object {self.id!r}: doc_id and chunk_id must be set together"
            )
        if self.chunk_id is not None and self.chunk_id < 0:
            raise ValidationError(f"object {self.id!r}: chunk_id must be >= 0")

    @classmethod
    def from_json_dict(cls, raw: dict) -> "DataObject":
        extra = {k: v for k, v in raw.items() if k not in _KNOWN_FIELDS}
        return cls(
            id=raw.get("id", ""),
            content=raw.get("content", ""),
            structural_links=set(raw.get("structural_links", [])),
            entities=list(raw.get("entities", [])),
            doc_id=raw.get("doc_id"),
            chunk_id=raw.get("chunk_id"),
            extra=extra,
        )

    def to_json_dict(self) -> dict:
        out: dict = {"id": self.id, "content": self.content}
        if self.structural_links:
            out["structural_links"] = sorted(self.structural_links)
        if self.entities:
            out["entities"] = list(self.entities)
        if self.doc_id is not None:
            out["doc_id"] = self.doc_id
            out["chunk_id"] = self.chunk_id
        out.update(self.extra)
        return out


@dataclass
class Query:
    id: str
    text: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("query id must be a non-empty string")


# query id -> set of relevant object ids
Qrels = dict[str, set[str]]


class Corpus:
    """Insertion-ordered collection of DataObject with id lookup."""

    def __init__(self, objects: Iterable[DataObject] = ()):
        self._objects: dict[str, DataObject] = {}
        for obj in objects:
            self.add(obj)

    def add(self, obj: DataObject) -> None:
        if obj.id in self._objects:
            raise ValidationError(f"duplicate object id {obj.id!r}")
        self._objects[obj.id] = obj

    def __len__(self) -> int:
        return len(self._objects)

    def __iter__(self) -> Iterator[DataObject]:
        return iter(self._objects.values())

    def __contains__(self, object_id: str) -> bool:
        return object_id in self._objects

    def __getitem__(self, object_id: str) -> DataObject:
        try:
            return self._objects[object_id]
        except KeyError:
            raise ValidationError(f"unknown object id {object_id!r}") from None

    def get(self, object_id: str) -> DataObject | None:
        return self._objects.get(object_id)

    def ids(self) -> list[str]:
        return list(self._objects)


@dataclass
class Finding:
    """One consistency issue surfaced by validate(); data, not a failure."""

    kind: str
    subject: str
    message: str

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"[{self.kind}] {self.subject}: {self.message}"


# ---------------------------------------------------------------------------
# loading / saving


def _iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"malformed JSON ({exc.msg})") from exc
            if not isinstance(raw, dict):
                raise ParseError(path, line_no, "expected a JSON object")
            yield line_no, raw


def load_corpus(path) -> Corpus:
    corpus = Corpus()
    for line_no, raw in _iter_jsonl(path):
        try:
            corpus.add(DataObject.from_json_dict(raw))
        except ValidationError as exc:
            raise ValidationError(f"{path}:{line_no}: {exc}") from exc
    return corpus


def save_corpus(corpus: Corpus, path) -> None:
    lines = (json.dumps(obj.to_json_dict(), ensure_ascii=False) for obj in corpus)
    atomic_write_text(path, "\n".join(lines) + "\n" if len(corpus) else "")


def load_queries(path) -> list[Query]:
    queries: list[Query] = []
    seen: set[str] = set()
    for line_no, raw in _iter_jsonl(path):
        qid = raw.get("id", "")
        if qid in seen:
            raise ValidationError(f"{path}:{line_no}: duplicate query id {qid!r}")
        seen.add(qid)
        queries.append(Query(id=qid, text=raw.get("text", "")))
    return queries


def save_queries(queries: Iterable[Query], path) -> None:
    lines = [
        json.dumps({"id": q.id, "text": q.text}, ensure_ascii=False) for q in queries
    ]
    atomic_write_text(path, "\n".join(lines) + "\n" if lines else "")


def load_qrels(path) -> Qrels:
    qrels: Qrels = {}
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
            qid, oid = fields
            qrels.setdefault(qid, set()).add(oid)
    return qrels


def save_qrels(qrels: Qrels, path) -> None:
    lines = [
        f"{qid}\t{oid}"
        for qid in qrels
        for oid in sorted(qrels[qid])
    ]
    atomic_write_text(path, "\n".join(lines) + "\n" if lines else "")


def atomic_write_text(path, text: str) -> None:
    """Write text to path via a temp file + rename so readers never see partials."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# validation


def validate(corpus: Corpus, queries: list[Query], qrels: Qrels) -> list[Finding]:
    """Cross-check the loaded triple; returns findings, never raises."""
    findings: list[Finding] = []
    query_ids = {q.id for q in queries}

    for obj in corpus:
        for target in sorted(obj.structural_links):
            if target not in corpus:
                findings.append(
                    Finding(
                        "dangling-link",
                        target,
                        f"object {obj.id!r} links to unknown object {target!r}",
                    )
                )

    for qid in qrels:
        if qid not in query_ids:
            findings.append(
                Finding("unknown-query", qid, f"qrels reference unknown query {qid!r}")
            )
        for oid in sorted(qrels[qid]):
            if oid not in corpus:
                findings.append(
                    Finding(
                        "unknown-object",
                        oid,
                        f"qrels for {qid!r} reference unknown object {oid!r}",
                    )
                )

    chunks: dict[str, set[int]] = {}
    for obj in corpus:
        if obj.doc_id is not None and obj.chunk_id is not None:
            chunks.setdefault(obj.doc_id, set()).add(obj.chunk_id)
    for doc_id, seen in sorted(chunks.items()):
        for missing in sorted(set(range(max(seen) + 1)) - seen):
            findings.append(
                Finding(
                    "chunk-gap",
                    doc_id,
                    f"document {doc_id!r} is missing chunk_id {missing}",
                )
            )

    return findings
