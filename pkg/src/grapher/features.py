"""File boundary to the externally trained graph-attention ranker.

export_features writes one JSON line per query holding everything the external
ranker needs: candidate ids, GCS and seed scores, optional relevance labels,
inlined query/object embeddings, and the weighted edge list. The node feature
vector is composed in a fixed order — [gcs score] ++ query embedding ++ object
embedding, dimension 1 + 2d — and both sides of the boundary rely on it.

import_scores closes the loop: a score file (JSONL {"query_id", "scores":
{id: float}}) re-sorts the run's candidates so the external ranking can be
evaluated by the same harness.
"""

from __future__ import annotations

import json

from .corpus import Corpus, Qrels, Query, atomic_write_text
from .errors import ParseError, ValidationError
from .graphs import build, dump_graph
from .rerank import (
    RankedEntry,
    RankedResult,
    RerankRunRecord,
)
from .retriever import VectorStore


def export_features(
    records: list[RerankRunRecord],
    corpus: Corpus,
    queries: list[Query],
    store: VectorStore,
    scheme: str,
    mode: str,
    out_path,
    qrels: Qrels | None = None,
) -> int:
    """Write NodeFeatureRecord JSONL; returns the number of lines written."""
    if mode not in ("train", "infer"):
        raise ValidationError(f"unknown export mode {mode!r}")
    if mode == "train" and qrels is None:
        raise ValidationError("train-mode export needs qrels for labels")
    query_by_id = {q.id: q for q in queries}
    ordinal = {oid: i for i, oid in enumerate(store.ids)}

    lines: list[str] = []
    for rec in records:
        if rec.result.algorithm != "gcs":
            raise ValidationError(
                f"run for query {rec.query_id!r} carries "
                f"{rec.result.algorithm!r} scores; "
                "run the rerank stage with --algo gcs first"
            )
        if rec.query_id not in query_by_id:
            raise ValidationError(f"query {rec.query_id!r} not in the query file")
        ids = [e.id for e in rec.result.entries]
        graph = build(ids, corpus, scheme)
        q_vec = store.query_vector(query_by_id[rec.query_id])
        embeddings = []
        for oid in ids:
            if oid not in ordinal:
                raise ValidationError(f"no stored vector for candidate {oid!r}")
            embeddings.append(store.vector(ordinal[oid]).tolist())

        line: dict = {
            "query_id": rec.query_id,
            "mode": mode,
            "scheme": scheme,
            "dim": store.dim,
            "feature_dim": 1 + 2 * store.dim,
            "ids": ids,
            "gcs": [e.final for e in rec.result.entries],
            "seed": [e.seed for e in rec.result.entries],
            "query_embedding": q_vec.tolist(),
            "embeddings": embeddings,
            "edges": dump_graph(graph)["edges"],
        }
        if mode == "train":
            relevant = qrels.get(rec.query_id)
            if relevant is None:
                raise ValidationError(
                    f"train-mode export: query {rec.query_id!r} has no qrels entry"
                )
            line["labels"] = [int(oid in relevant) for oid in ids]
        lines.append(json.dumps(line, ensure_ascii=False))

    atomic_write_text(out_path, "\n".join(lines) + "\n" if lines else "")
    return len(lines)


def load_scores(path) -> dict[str, dict[str, float]]:
    """Score file JSONL: {"query_id": ..., "scores": {candidate id: float}}."""
    scores: dict[str, dict[str, float]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"malformed JSON ({exc.msg})")
            scores[raw["query_id"]] = {
                oid: float(v) for oid, v in raw["scores"].items()
            }
    return scores


def import_scores(
    scores: dict[str, dict[str, float]],
    run: list[tuple[str, list[tuple[str, float]]]],
) -> list[RerankRunRecord]:
    """Re-sort each query's candidates by imported score.

    ``run`` is (query_id, [(candidate id, seed score), ...]) per query; every
    candidate must be covered by the score file. Ties break by seed descending
    then id ascending, matching the rerankers.
    """
    records: list[RerankRunRecord] = []
    for query_id, candidates in run:
        if query_id not in scores:
            raise ValidationError(f"score file has no entry for query {query_id!r}")
        table = scores[query_id]
        for oid, _ in candidates:
            if oid not in table:
                raise ValidationError(
                    f"score file is missing candidate {oid!r} for query {query_id!r}"
                )
        ordered = sorted(
            candidates, key=lambda pair: (-table[pair[0]], -pair[1], pair[0])
        )
        records.append(
            RerankRunRecord(
                query_id=query_id,
                result=RankedResult(
                    entries=[
                        RankedEntry(id=oid, final=table[oid], seed=seed)
                        for oid, seed in ordered
                    ],
                    iterations=0,
                    converged=True,
                    algorithm="imported",
                ),
            )
        )
    return records
