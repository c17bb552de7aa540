"""Reading the node-feature boundary files and writing score files back.

One JSONL line per query graph. Each line carries candidate ids, their seed
and smoothed retrieval scores, the query embedding, one embedding per
candidate, a directed weighted edge list (``[dst, src, w]`` — the destination
node aggregates from the source, matching the adjacency-row convention of the
exporter), and, in train mode, 0/1 relevance labels.

The per-node input feature vector is the concatenation

    [smoothed score] + query embedding + candidate embedding

giving ``1 + 2 * dim`` features, which must equal the ``feature_dim`` the
exporter recorded.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FeatureFileError

MODES = ("train", "infer")


@dataclass
class FeatureGraph:
    """One query's candidate graph, parsed and validated."""

    query_id: str
    mode: str
    scheme: str
    dim: int
    feature_dim: int
    ids: list[str]
    x: np.ndarray  # (n, feature_dim) float32 node features
    edge_index: np.ndarray  # (2, E) int64, [src_row, dst_row]
    edge_weight: np.ndarray  # (E,) float32
    seed: np.ndarray  # (n,) float64 base-retriever scores
    gcs: np.ndarray  # (n,) float64 smoothed scores (feature column 0)
    labels: np.ndarray | None = field(default=None)  # (n,) int64 or None

    @property
    def n(self) -> int:
        return len(self.ids)


def _as_graph(raw: dict, path, line_no: int) -> FeatureGraph:
    def fail(reason: str):
        raise FeatureFileError(path, line_no, reason)

    for key in ("query_id", "mode", "ids", "dim", "feature_dim",
                "gcs", "seed", "query_embedding", "embeddings", "edges"):
        if key not in raw:
            fail(f"missing key {key!r}")

    mode = raw["mode"]
    if mode not in MODES:
        fail(f"unknown mode {mode!r} (expected one of {MODES})")

    ids = [str(i) for i in raw["ids"]]
    n = len(ids)
    if n == 0:
        fail("empty candidate list")
    if len(set(ids)) != n:
        fail("duplicate candidate ids")

    dim = int(raw["dim"])
    feature_dim = int(raw["feature_dim"])
    if feature_dim != 1 + 2 * dim:
        fail(f"feature_dim {feature_dim} does not equal 1 + 2*dim = {1 + 2 * dim}")

    gcs = np.asarray(raw["gcs"], dtype=np.float64)
    seed = np.asarray(raw["seed"], dtype=np.float64)
    q_vec = np.asarray(raw["query_embedding"], dtype=np.float32)
    emb = np.asarray(raw["embeddings"], dtype=np.float32)
    if gcs.shape != (n,) or seed.shape != (n,):
        fail("gcs/seed length does not match the candidate list")
    if q_vec.shape != (dim,):
        fail(f"query embedding has {q_vec.size} values, expected {dim}")
    if emb.shape != (n, dim):
        fail(f"embeddings shaped {emb.shape}, expected ({n}, {dim})")
    if not (np.isfinite(gcs).all() and np.isfinite(seed).all()
            and np.isfinite(q_vec).all() and np.isfinite(emb).all()):
        fail("non-finite feature values")

    edges = raw["edges"]
    src = np.empty(len(edges), dtype=np.int64)
    dst = np.empty(len(edges), dtype=np.int64)
    weight = np.empty(len(edges), dtype=np.float32)
    for e, entry in enumerate(edges):
        if len(entry) != 3:
            fail(f"edge entry {entry!r} is not [dst, src, weight]")
        i, j, w = int(entry[0]), int(entry[1]), float(entry[2])
        if not (0 <= i < n and 0 <= j < n):
            fail(f"edge entry {entry!r} references a node outside 0..{n - 1}")
        dst[e], src[e], weight[e] = i, j, w

    labels = None
    if mode == "train":
        if "labels" not in raw:
            fail("train-mode record has no labels")
        labels = np.asarray(raw["labels"], dtype=np.int64)
        if labels.shape != (n,):
            fail("labels length does not match the candidate list")
        if not np.isin(labels, (0, 1)).all():
            fail("labels must be 0 or 1")

    x = np.concatenate(
        [gcs.astype(np.float32)[:, None], np.tile(q_vec, (n, 1)), emb], axis=1
    )
    return FeatureGraph(
        query_id=str(raw["query_id"]),
        mode=mode,
        scheme=str(raw.get("scheme", "")),
        dim=dim,
        feature_dim=feature_dim,
        ids=ids,
        x=x,
        edge_index=np.stack([src, dst]),
        edge_weight=weight,
        seed=seed,
        gcs=gcs,
        labels=labels,
    )


def feature_graph_from_dict(raw: dict) -> FeatureGraph:
    """Validate and convert one already-parsed record (tests, generators)."""
    return _as_graph(raw, "<memory>", 0)


def load_feature_file(path, require_labels: bool = False) -> list[FeatureGraph]:
    """Parse a node-feature JSONL file into per-query graphs.

    With ``require_labels`` every record must be train-mode (used by the
    training entry point; prediction accepts either mode).
    """
    path = Path(path)
    graphs: list[FeatureGraph] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FeatureFileError(path, line_no, f"invalid JSON: {exc}") from exc
            graph = _as_graph(raw, path, line_no)
            if require_labels and graph.labels is None:
                raise FeatureFileError(
                    path, line_no,
                    f"record for query {graph.query_id!r} has mode "
                    f"{graph.mode!r}; training needs train-mode records with labels",
                )
            if graph.query_id in seen:
                raise FeatureFileError(
                    path, line_no, f"duplicate record for query {graph.query_id!r}"
                )
            seen.add(graph.query_id)
            graphs.append(graph)
    if not graphs:
        raise FeatureFileError(path, 0, "no records found")
    return graphs


def _atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_scores(path, per_query: list[tuple[str, dict[str, float]]]) -> None:
    """Write a score file in the format the importer consumes.

    One line per query: ``{"query_id": ..., "scores": {candidate id: float}}``.
    """
    lines = [
        json.dumps({"query_id": qid, "scores": scores}, ensure_ascii=False)
        for qid, scores in per_query
    ]
    _atomic_write_text(path, "\n".join(lines) + "\n" if lines else "")
