"""Per-query candidate graphs from enrichment fields.

A CandidateGraph exists only over the retrieved candidates of a single query;
nothing persistent or corpus-global is ever built. Edge-weight schemes:

- structural: A_ij = 1 iff the objects share a foreign-key/hyperlink, symmetric;
- conceptual: A_ij = |entities(i) & entities(j)| / |entities(j)|, asymmetric on
  purpose (the normalization damps entity-heavy objects);
- contextual: A_ij = 1 iff same doc_id and adjacent chunk_ids;
- union: element-wise max of the three (experimental, not a default).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus
from .errors import ConfigError

SCHEMES = ("structural", "conceptual", "contextual", "union")


@dataclass
class CandidateGraph:
    ids: list[str]  # node ordinal -> candidate id
    adjacency: np.ndarray  # (n, n), weights >= 0, zero diagonal
    scheme: str

    @property
    def n(self) -> int:
        return len(self.ids)


def _resolve(candidates: list[str], corpus: Corpus):
    return [corpus[cid] for cid in candidates]  # raises on unknown id


def build_structural(candidates: list[str], corpus: Corpus) -> CandidateGraph:
    objects = _resolve(candidates, corpus)
    ordinal = {cid: i for i, cid in enumerate(candidates)}
    A = np.zeros((len(candidates), len(candidates)))
    for i, obj in enumerate(objects):
        for target in obj.structural_links:
            j = ordinal.get(target)
            if j is not None and j != i:
                A[i, j] = 1.0
                A[j, i] = 1.0
    return CandidateGraph(ids=list(candidates), adjacency=A, scheme="structural")


def build_conceptual(candidates: list[str], corpus: Corpus) -> CandidateGraph:
    objects = _resolve(candidates, corpus)
    n = len(candidates)
    entity_sets = [set(obj.entities) for obj in objects]
    sizes = np.array([len(s) for s in entity_sets], dtype=np.float64)

    # Shared-entity counts via the entity -> holders inverted map; each unique
    # entity contributes once, which is exactly the intersection cardinality.
    holders: dict[str, list[int]] = {}
    for i, ents in enumerate(entity_sets):
        for ent in ents:
            holders.setdefault(ent, []).append(i)
    counts = np.zeros((n, n))
    for members in holders.values():
        if len(members) > 1:
            idx = np.asarray(members)
            counts[np.ix_(idx, idx)] += 1.0

    A = np.divide(
        counts,
        sizes[np.newaxis, :],
        out=np.zeros_like(counts),
        where=sizes[np.newaxis, :] > 0,
    )
    np.fill_diagonal(A, 0.0)
    return CandidateGraph(ids=list(candidates), adjacency=A, scheme="conceptual")


def build_contextual(candidates: list[str], corpus: Corpus) -> CandidateGraph:
    objects = _resolve(candidates, corpus)
    A = np.zeros((len(candidates), len(candidates)))
    by_doc: dict[str, dict[int, int]] = {}
    for i, obj in enumerate(objects):
        if obj.doc_id is not None and obj.chunk_id is not None:
            by_doc.setdefault(obj.doc_id, {})[obj.chunk_id] = i
    for chunk_map in by_doc.values():
        for chunk_id, i in chunk_map.items():
            j = chunk_map.get(chunk_id + 1)
            if j is not None:
                A[i, j] = 1.0
                A[j, i] = 1.0
    return CandidateGraph(ids=list(candidates), adjacency=A, scheme="contextual")


_BUILDERS = {
    "structural": build_structural,
    "conceptual": build_conceptual,
    "contextual": build_contextual,
}


def build(candidates: list[str], corpus: Corpus, scheme: str) -> CandidateGraph:
    if scheme == "union":
        matrices = [b(candidates, corpus).adjacency for b in _BUILDERS.values()]
        A = np.maximum.reduce(matrices)
        return CandidateGraph(ids=list(candidates), adjacency=A, scheme="union")
    if scheme not in _BUILDERS:
        raise ConfigError(f"unknown graph scheme {scheme!r} (expected one of {SCHEMES})")
    return _BUILDERS[scheme](candidates, corpus)


def dump_graph(graph: CandidateGraph) -> dict:
    """Debug/JSON form listing only non-zero entries."""
    rows, cols = np.nonzero(graph.adjacency)
    edges = [
        [int(i), int(j), float(graph.adjacency[i, j])] for i, j in zip(rows, cols)
    ]
    return {"ids": list(graph.ids), "edges": edges}


def graph_from_dump(raw: dict, scheme: str = "structural") -> CandidateGraph:
    ids = list(raw["ids"])
    A = np.zeros((len(ids), len(ids)))
    for i, j, w in raw["edges"]:
        A[int(i), int(j)] = float(w)
    return CandidateGraph(ids=ids, adjacency=A, scheme=scheme)
