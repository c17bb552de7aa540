"""Deterministic synthetic corpora for desk-scale end-to-end checks.

Two patterns:

- ``fk-triple``: per query, three relevant objects — two semantically close to
  the query and one semantically distant but foreign-key-linked to the closest
  one — plus a band of mid-similarity distractors. Base retrieval drops the
  distant relevant out of the top-5 on the hard queries; graph smoothing pulls
  it back through the FK edge. 40% of queries are easy (the distant object is
  also close), so the base PR@5 is exactly 40 on any seed.

- ``hub``: the star-plus-detached-node instance (hub and 20 leaves at low
  seed, one detached high-seed relevant, one zero-similarity floor object so
  min-max keeps the 18:1 seed ratio intact).

Queries and contents use disjoint token vocabularies, so BM25 is a constant
family (normalizes to zeros) and ranking is controlled entirely by the
generated vectors. Same seed -> byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .corpus import Corpus, DataObject, Query, save_corpus, save_qrels, save_queries
from .corpus import atomic_write_text
from .errors import ConfigError

_VOCAB = (
    "amber basalt cobalt delta ember flint garnet hollow iris jasper "
    "kelp lumen marrow nectar ochre pumice quartz rubble sable talon "
    "umber vellum willow xenon yarrow zephyr arbor brink cinder dune"
).split()

# cosine placements for the fk-triple pattern; see the margin note in
# _fk_triple_cluster for why the distractor band tops out well below the
# smoothed score of the far relevant object.
_COS_ANCHOR = 0.92
_COS_SECOND = 0.88
_COS_FAR_EASY = 0.80
_COS_FAR_HARD = 0.28
_COS_DISTRACTORS = (0.34, 0.36, 0.38, 0.40, 0.42)
_NOISE_OBJECTS = 50


def _words(rng: np.random.Generator, count: int = 4) -> str:
    return " ".join(rng.choice(_VOCAB, size=count))


def _place(direction: np.ndarray, cosine: float, rng: np.random.Generator) -> np.ndarray:
    """Unit vector with an exact cosine to `direction` (a unit vector)."""
    raw = rng.standard_normal(direction.shape[0])
    perp = raw - (raw @ direction) * direction
    perp /= np.linalg.norm(perp)
    return cosine * direction + np.sqrt(1.0 - cosine**2) * perp


def _save_vectors(vectors: dict[str, np.ndarray], path) -> None:
    import json

    lines = [
        json.dumps({"id": vid, "vector": vec.tolist()}, ensure_ascii=False)
        for vid, vec in vectors.items()
    ]
    atomic_write_text(path, "\n".join(lines) + "\n" if lines else "")


def _fk_triple_cluster(i: int, easy: bool, dim: int, rng):
    """One query's objects: anchor a, second b, far c (FK-linked to a), 5 distractors.

    On hard queries the smoothed GCS score of c at alpha=.5 is
    (2/3)s_c + (1/3)s_a; in raw-cosine terms it beats a competitor at cosine x
    whenever (2/3)*0.28 + (1/3)*0.92 = 0.4933 > x, independent of the min-max
    window, so the 0.42-topped distractor band can never outrank it.
    """
    direction = np.zeros(dim)
    direction[i] = 1.0
    tag = f"{i:03d}"
    far_cos = _COS_FAR_EASY if easy else _COS_FAR_HARD
    placements = {
        f"obj{tag}a": _COS_ANCHOR,
        f"obj{tag}b": _COS_SECOND,
        f"obj{tag}c": far_cos,
    }
    for j, cos in enumerate(_COS_DISTRACTORS):
        placements[f"obj{tag}d{j}"] = cos
    vectors = {oid: _place(direction, cos, rng) for oid, cos in placements.items()}
    return direction, vectors


def gen_fk_triple(n_queries: int, seed: int, out_dir) -> dict[str, Path]:
    if n_queries < 1:
        raise ConfigError("need at least one query")
    rng = np.random.default_rng(seed)
    dim = n_queries + 32

    objects: list[DataObject] = []
    queries: list[Query] = []
    qrels: dict[str, set[str]] = {}
    links: list[tuple[str, str]] = []
    vectors: dict[str, np.ndarray] = {}

    for i in range(n_queries):
        tag = f"{i:03d}"
        easy = i % 5 < 2
        direction, cluster = _fk_triple_cluster(i, easy, dim, rng)
        vectors.update(cluster)
        qid = f"q{tag}"
        queries.append(Query(id=qid, text=f"query q{tag}"))
        vectors[qid] = direction
        qrels[qid] = {f"obj{tag}a", f"obj{tag}b", f"obj{tag}c"}
        links.append((f"obj{tag}a", f"obj{tag}c"))
        fk = {f"obj{tag}a": {f"obj{tag}c"}, f"obj{tag}c": {f"obj{tag}a"}}
        for oid in cluster:
            objects.append(
                DataObject(
                    id=oid,
                    content=f"table {_words(rng)}",
                    structural_links=fk.get(oid, set()),
                )
            )

    for j in range(_NOISE_OBJECTS):
        oid = f"noise{j:03d}"
        raw = rng.standard_normal(dim)
        vectors[oid] = raw / np.linalg.norm(raw)
        objects.append(DataObject(id=oid, content=f"filler {_words(rng)}"))

    return _write(objects, queries, qrels, links, vectors, out_dir)


def gen_hub(seed: int, out_dir) -> dict[str, Path]:
    rng = np.random.default_rng(seed)
    dim = 8
    e = np.eye(dim)
    low, high = 0.035, 0.63  # fused seeds keep the 0.05 : 0.9 ratio (1 : 18)

    objects: list[DataObject] = []
    vectors: dict[str, np.ndarray] = {}
    links: list[tuple[str, str]] = []

    vectors["hub"] = low * e[0] + np.sqrt(1 - low**2) * e[1]
    objects.append(DataObject(id="hub", content=f"table {_words(rng)}"))
    for j in range(20):
        leaf = f"leaf{j:02d}"
        vectors[leaf] = low * e[0] + np.sqrt(1 - low**2) * e[1]
        objects.append(
            DataObject(id=leaf, content=f"table {_words(rng)}", structural_links={"hub"})
        )
        objects[0].structural_links.add(leaf)
        links.append(("hub", leaf))
    vectors["detached"] = high * e[0] + np.sqrt(1 - high**2) * e[2]
    objects.append(DataObject(id="detached", content=f"table {_words(rng)}"))
    vectors["floor"] = e[3]  # zero cosine anchor for min-max
    objects.append(DataObject(id="floor", content=f"filler {_words(rng)}"))

    queries = [Query(id="q000", text="query hub")]
    vectors["q000"] = e[0]
    qrels = {"q000": {"detached"}}
    return _write(objects, queries, qrels, links, vectors, out_dir)


def _write(objects, queries, qrels, links, vectors, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "corpus": out / "corpus.jsonl",
        "queries": out / "queries.jsonl",
        "qrels": out / "qrels.tsv",
        "vectors": out / "vectors.jsonl",
        "links": out / "links.tsv",
    }
    save_corpus(Corpus(objects), paths["corpus"])
    save_queries(queries, paths["queries"])
    save_qrels(qrels, paths["qrels"])
    _save_vectors(vectors, paths["vectors"])
    atomic_write_text(
        paths["links"],
        "\n".join(f"{a}\t{b}" for a, b in links) + "\n" if links else "",
    )
    return paths


def gen_synthetic(pattern: str, n_queries: int, seed: int, out_dir) -> dict[str, Path]:
    if pattern == "fk-triple":
        return gen_fk_triple(n_queries, seed, out_dir)
    if pattern == "hub":
        return gen_hub(seed, out_dir)
    raise ConfigError(f"unknown pattern {pattern!r} (expected fk-triple or hub)")
