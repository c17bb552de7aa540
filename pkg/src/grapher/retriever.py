"""Hybrid base retriever: Okapi BM25 + dense cosine, min-max fused.

Scores both families for every object in the corpus, min-max normalizes each
family per query, and fuses with fixed weights (default 0.3 BM25 / 0.7 dense),
keeping the top-n candidates (n = 200 by default, or the whole corpus if it is
smaller).
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
import requests

from .corpus import Corpus, Query, atomic_write_text
from .errors import ConfigError, ParseError, ValidationError

# Lowercase, split on non-alphanumeric, drop empties. [^\W_] is "word char
# minus underscore", i.e. unicode alphanumerics, with no locale dependence.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass
class RetrieverConfig:
    n: int = 200
    w_bm25: float = 0.3
    w_dense: float = 0.7
    k1: float = 1.2
    b: float = 0.75
    # min-max normalization pool: over the whole corpus (default) or over the
    # union of per-family top-n pools.
    normalize_over: str = "corpus"

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigError("top-n cutoff must be >= 1")
        if abs(self.w_bm25 + self.w_dense - 1.0) > 1e-9:
            raise ConfigError(
                f"fusion weights must sum to 1, got {self.w_bm25} + {self.w_dense}"
            )
        if self.w_bm25 < 0 or self.w_dense < 0:
            raise ConfigError("fusion weights must be non-negative")
        if self.k1 < 0 or not 0 <= self.b <= 1:
            raise ConfigError("BM25 parameters out of range (k1 >= 0, 0 <= b <= 1)")
        if self.normalize_over not in ("corpus", "pool"):
            raise ConfigError(f"unknown normalization pool {self.normalize_over!r}")


# ---------------------------------------------------------------------------
# embedding providers


class EmbeddingProvider(ABC):
    """Maps (key, text) pairs to dense vectors; must be deterministic."""

    @abstractmethod
    def embed(self, keys: list[str], texts: list[str]) -> np.ndarray:
        """Return an array of shape (len(keys), d)."""


class HashToyProvider(EmbeddingProvider):
    """Deterministic hashed bag-of-words unit vector; for tests and demos.

    Identical token multisets map to identical vectors, so cosine is exactly 1
    for them; hashing is stable across processes (no PYTHONHASHSEED exposure).
    """

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ConfigError("HashToy dimension must be >= 1")
        self.dim = dim

    def _bucket(self, token: str) -> int:
        digest = hashlib.md5(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little") % self.dim

    def embed(self, keys: list[str], texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for row, text in enumerate(texts):
            for token in tokenize(text):
                out[row, self._bucket(token)] += 1.0
            norm = np.linalg.norm(out[row])
            if norm > 0:
                out[row] /= norm
        return out


class FileBackedProvider(EmbeddingProvider):
    """Vectors loaded from disk, keyed by id.

    Either JSONL lines {"id": ..., "vector": [...]} or a raw little-endian
    float32 binary next to a JSON manifest {"dim": d, "ids": [...]}.
    """

    def __init__(self, path, manifest=None):
        self._vectors: dict[str, np.ndarray] = {}
        if manifest is not None:
            with open(manifest, encoding="utf-8") as fh:
                meta = json.load(fh)
            dim, ids = int(meta["dim"]), list(meta["ids"])
            flat = np.fromfile(path, dtype="<f4")
            if flat.size != dim * len(ids):
                raise ValidationError(
                    f"binary vector file {path} holds {flat.size} floats, "
                    f"manifest implies {dim * len(ids)}"
                )
            matrix = flat.reshape(len(ids), dim).astype(np.float64)
            for row, vid in enumerate(ids):
                self._vectors[vid] = matrix[row]
        else:
            with open(path, encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        raw = json.loads(line)
                    except json.JSONDecodeError as exc:
                        raise ParseError(path, line_no, f"malformed JSON ({exc.msg})")
                    self._vectors[raw["id"]] = np.asarray(raw["vector"], dtype=np.float64)

    def embed(self, keys: list[str], texts: list[str]) -> np.ndarray:
        rows = []
        for key in keys:
            if key not in self._vectors:
                raise ValidationError(f"no stored vector for id {key!r}")
            rows.append(self._vectors[key])
        dims = {row.shape[0] for row in rows}
        if len(dims) > 1:
            raise ValidationError(f"stored vectors disagree on dimension: {sorted(dims)}")
        return np.vstack(rows) if rows else np.zeros((0, 0))


class RemoteServiceProvider(EmbeddingProvider):
    """HTTP embedding endpoint: POST {"texts": [...]} -> {"vectors": [[...]]}."""

    def __init__(self, endpoint: str | None = None, timeout: float = 60.0):
        self.endpoint = endpoint or os.environ.get("GRAPHER_EMBED_ENDPOINT")
        if not self.endpoint:
            raise ConfigError(
                "no embedding endpoint configured "
                "(set GRAPHER_EMBED_ENDPOINT or pass endpoint=)"
            )
        self.timeout = timeout

    def embed(self, keys: list[str], texts: list[str]) -> np.ndarray:
        resp = requests.post(self.endpoint, json={"texts": texts}, timeout=self.timeout)
        resp.raise_for_status()
        vectors = resp.json()["vectors"]
        if len(vectors) != len(texts):
            raise ValidationError(
                f"embedding service returned {len(vectors)} vectors for "
                f"{len(texts)} texts"
            )
        return np.asarray(vectors, dtype=np.float64)


# ---------------------------------------------------------------------------
# index structures


@dataclass
class InvertedIndex:
    ids: list[str]
    postings: dict[str, dict[int, int]]  # term -> {object ordinal -> tf}
    lengths: np.ndarray  # token count per object
    avg_len: float
    k1: float = 1.2
    b: float = 0.75

    @property
    def size(self) -> int:
        return len(self.ids)

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))


class VectorStore:
    """Dense object vectors plus the provider used for query-time embedding."""

    def __init__(self, ids: list[str], matrix: np.ndarray, provider: EmbeddingProvider):
        if matrix.ndim != 2 or matrix.shape[0] != len(ids):
            raise ValidationError("vector matrix shape does not match id count")
        self.ids = ids
        self.matrix = matrix
        self.provider = provider
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        self._unit = np.divide(matrix, norms, out=np.zeros_like(matrix), where=norms > 0)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def vector(self, ordinal: int) -> np.ndarray:
        return self.matrix[ordinal]

    def query_vector(self, query: Query) -> np.ndarray:
        vec = self.provider.embed([query.id], [query.text])[0]
        if vec.shape[0] != self.dim:
            raise ValidationError(
                f"query vector for {query.id!r} has dimension {vec.shape[0]}, "
                f"store holds {self.dim}"
            )
        return vec

    def cosine_all(self, query_vec: np.ndarray) -> np.ndarray:
        norm = np.linalg.norm(query_vec)
        if norm == 0:
            return np.zeros(len(self.ids))
        return self._unit @ (query_vec / norm)


def build_index(
    corpus: Corpus, provider: EmbeddingProvider, cfg: RetrieverConfig
) -> tuple[InvertedIndex, VectorStore]:
    """Tokenize + post every object and embed it through the provider."""
    if len(corpus) == 0:
        raise ValidationError("cannot index an empty corpus")
    ids: list[str] = []
    postings: dict[str, dict[int, int]] = {}
    lengths = []
    for ordinal, obj in enumerate(corpus):
        ids.append(obj.id)
        tokens = tokenize(obj.content)
        lengths.append(len(tokens))
        for token in tokens:
            postings.setdefault(token, {})
            postings[token][ordinal] = postings[token].get(ordinal, 0) + 1
    lengths_arr = np.asarray(lengths, dtype=np.int64)
    index = InvertedIndex(
        ids=ids,
        postings=postings,
        lengths=lengths_arr,
        avg_len=float(lengths_arr.mean()),
        k1=cfg.k1,
        b=cfg.b,
    )

    try:
        matrix = provider.embed(ids, [corpus[i].content for i in ids])
    except (ValidationError, requests.RequestException) as exc:
        raise ValidationError(f"embedding failed while indexing: {exc}") from exc
    store = VectorStore(ids=ids, matrix=matrix, provider=provider)
    return index, store


# ---------------------------------------------------------------------------
# scoring


def _idf(index: InvertedIndex, term: str) -> float:
    df = index.df(term)
    return math.log(1.0 + (index.size - df + 0.5) / (df + 0.5))


def bm25_score(index: InvertedIndex, query_tokens: list[str], ordinal: int) -> float:
    """Okapi BM25 sum for one object; terms absent from it contribute 0."""
    if not 0 <= ordinal < index.size:
        raise IndexError(f"object ordinal {ordinal} out of range [0, {index.size})")
    score = 0.0
    for term in query_tokens:
        tf = index.postings.get(term, {}).get(ordinal, 0)
        if tf == 0:
            continue
        length_ratio = index.lengths[ordinal] / index.avg_len if index.avg_len else 0.0
        denom = tf + index.k1 * (1.0 - index.b + index.b * length_ratio)
        score += _idf(index, term) * tf * (index.k1 + 1.0) / denom
    return score


def bm25_scores(index: InvertedIndex, query_tokens: list[str]) -> np.ndarray:
    """BM25 for every object at once (posting-list traversal)."""
    scores = np.zeros(index.size)
    if index.avg_len == 0:
        return scores
    norm_len = index.lengths / index.avg_len
    for term in query_tokens:
        posting = index.postings.get(term)
        if not posting:
            continue
        idf = _idf(index, term)
        for ordinal, tf in posting.items():
            denom = tf + index.k1 * (1.0 - index.b + index.b * norm_len[ordinal])
            scores[ordinal] += idf * tf * (index.k1 + 1.0) / denom
    return scores


def min_max_normalize(values: np.ndarray) -> np.ndarray:
    """Scale to [0,1]; a constant family maps to all zeros."""
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


@dataclass
class ScoredCandidate:
    id: str
    score: float
    bm25: float
    dense: float


@dataclass
class ScoredCandidateList:
    query_id: str
    candidates: list[ScoredCandidate] = field(default_factory=list)

    def ids(self) -> list[str]:
        return [c.id for c in self.candidates]


def hybrid_retrieve(
    query: Query, index: InvertedIndex, store: VectorStore, cfg: RetrieverConfig
) -> ScoredCandidateList:
    """Score the whole corpus, fuse the normalized families, keep top-n.

    The stored per-candidate ``bm25``/``dense`` components are the normalized
    family scores, so ``score == w_bm25*bm25 + w_dense*dense`` holds exactly.
    """
    raw_bm25 = bm25_scores(index, tokenize(query.text))
    raw_cos = store.cosine_all(store.query_vector(query))

    if cfg.normalize_over == "corpus":
        pool = np.arange(index.size)
    else:
        per_family = min(cfg.n, index.size)
        order_b = np.lexsort((index.ids, -raw_bm25))[:per_family]
        order_c = np.lexsort((index.ids, -raw_cos))[:per_family]
        pool = np.unique(np.concatenate([order_b, order_c]))

    norm_bm25 = min_max_normalize(raw_bm25[pool])
    norm_cos = min_max_normalize(raw_cos[pool])
    fused = cfg.w_bm25 * norm_bm25 + cfg.w_dense * norm_cos

    ranked = sorted(
        range(len(pool)), key=lambda i: (-fused[i], index.ids[pool[i]])
    )[: cfg.n]
    return ScoredCandidateList(
        query_id=query.id,
        candidates=[
            ScoredCandidate(
                id=index.ids[pool[i]],
                score=float(fused[i]),
                bm25=float(norm_bm25[i]),
                dense=float(norm_cos[i]),
            )
            for i in ranked
        ],
    )


# ---------------------------------------------------------------------------
# run files


def save_search_run(results: list[ScoredCandidateList], path) -> None:
    lines = []
    for res in results:
        lines.append(
            json.dumps(
                {
                    "query_id": res.query_id,
                    "candidates": [
                        {"id": c.id, "score": c.score, "bm25": c.bm25, "dense": c.dense}
                        for c in res.candidates
                    ],
                },
                ensure_ascii=False,
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n" if lines else "")


def load_search_run(path) -> list[ScoredCandidateList]:
    out: list[ScoredCandidateList] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"malformed JSON ({exc.msg})")
            out.append(
                ScoredCandidateList(
                    query_id=raw["query_id"],
                    candidates=[
                        ScoredCandidate(
                            id=c["id"],
                            score=float(c["score"]),
                            bm25=float(c.get("bm25", 0.0)),
                            dense=float(c.get("dense", 0.0)),
                        )
                        for c in raw["candidates"]
                    ],
                )
            )
    return out
