"""Graph rerankers: Graph Cohesive Smoothing and Personalized PageRank.

GCS iterates p <- alpha*s + (1-alpha)*W_row*p from p = s until the L1 residual
drops below epsilon, then returns the element-wise max of the fixed point and
the seed, so no candidate can fall below its base-retriever score.

PPR runs the column-normalized teleport walk on the L1-normalized seed. Mass
on dangling nodes (zero out-degree under column normalization) is handled by
the configured rule: the default drops it and renormalizes the distribution
each step (power iteration on alpha*s~*1^T + (1-alpha)*W_col); the alternative
redistributes it onto the seed inside the update. Both keep the scores summing
to 1 and coincide whenever the graph has no dangling nodes.

solve_oracle solves the dangling-free fixed point directly as a linear system
and exists purely as a test oracle for the iterative paths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import atomic_write_text
from .errors import ConfigError, ParseError, ValidationError
from .graphs import CandidateGraph


@dataclass
class RerankConfig:
    alpha: float = 0.5
    epsilon: float = 1e-10
    max_iters: int = 1000
    algorithm: str = "gcs"  # "gcs" | "ppr"
    # PPR formulation switches (ablations; defaults are the documented behavior)
    ppr_dangling: str = "renormalize"  # "renormalize" | "seed"
    ppr_apply_floor: bool = False
    ppr_normalize_seed: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0,1), got {self.alpha}")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be > 0")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.algorithm not in ("gcs", "ppr"):
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.ppr_dangling not in ("renormalize", "seed"):
            raise ConfigError(f"unknown dangling rule {self.ppr_dangling!r}")


@dataclass
class RankedEntry:
    id: str
    final: float
    seed: float


@dataclass
class RankedResult:
    entries: list[RankedEntry] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    algorithm: str = "gcs"

    def ids(self) -> list[str]:
        return [e.id for e in self.entries]


def row_normalize(A: np.ndarray) -> np.ndarray:
    """W_ij = A_ij / sum_k A_ik; all-zero rows stay all-zero."""
    sums = A.sum(axis=1, keepdims=True)
    return np.divide(A, sums, out=np.zeros_like(A), where=sums > 0)


def column_normalize(A: np.ndarray) -> np.ndarray:
    """Mirror of row_normalize on columns; zero columns stay zero."""
    sums = A.sum(axis=0, keepdims=True)
    return np.divide(A, sums, out=np.zeros_like(A), where=sums > 0)


def _check_seed(graph: CandidateGraph, seed) -> np.ndarray:
    s = np.asarray(seed, dtype=np.float64)
    if s.ndim != 1 or s.shape[0] != graph.n:
        raise ValidationError(
            f"seed length {s.shape[0] if s.ndim == 1 else s.shape} does not match "
            f"graph size {graph.n}"
        )
    if not np.all(np.isfinite(s)):
        raise ValidationError("seed vector contains non-finite values")
    if np.any(s < 0):
        raise ValidationError("seed values must be >= 0")
    return s


def _ranked(graph, final, seed, iterations, converged, algorithm) -> RankedResult:
    order = sorted(
        range(graph.n), key=lambda i: (-final[i], -seed[i], graph.ids[i])
    )
    return RankedResult(
        entries=[
            RankedEntry(id=graph.ids[i], final=float(final[i]), seed=float(seed[i]))
            for i in order
        ],
        iterations=iterations,
        converged=converged,
        algorithm=algorithm,
    )


# ---------------------------------------------------------------------------
# GCS


def gcs_smooth(
    W: np.ndarray, s: np.ndarray, alpha: float, epsilon: float, max_iters: int
) -> tuple[np.ndarray, int, bool]:
    """Core smoothing iteration; returns the pre-max fixed point."""
    p = s.copy()
    for t in range(1, max_iters + 1):
        p_next = alpha * s + (1.0 - alpha) * (W @ p)
        delta = float(np.abs(p_next - p).sum())
        p = p_next
        if delta < epsilon:
            return p, t, True
    return p, max_iters, False


def gcs_rank(graph: CandidateGraph, seed, cfg: RerankConfig) -> RankedResult:
    s = _check_seed(graph, seed)
    W = row_normalize(graph.adjacency)
    p, iters, converged = gcs_smooth(W, s, cfg.alpha, cfg.epsilon, cfg.max_iters)
    final = np.maximum(p, s)
    return _ranked(graph, final, s, iters, converged, "gcs")


# ---------------------------------------------------------------------------
# PPR


def normalize_seed(s: np.ndarray) -> np.ndarray:
    """L1-normalize; an all-zero seed becomes the uniform distribution."""
    total = s.sum()
    if total <= 0:
        return np.full_like(s, 1.0 / len(s)) if len(s) else s
    return s / total


def ppr_smooth(
    W_col: np.ndarray,
    s_tilde: np.ndarray,
    alpha: float,
    epsilon: float,
    max_iters: int,
    dangling: str = "renormalize",
) -> tuple[np.ndarray, int, bool]:
    dangling_mask = W_col.sum(axis=0) == 0
    p = s_tilde.copy()
    for t in range(1, max_iters + 1):
        if dangling == "seed":
            leaked = float(p[dangling_mask].sum())
            p_next = alpha * s_tilde + (1.0 - alpha) * (W_col @ p + leaked * s_tilde)
        else:
            p_next = alpha * s_tilde + (1.0 - alpha) * (W_col @ p)
            p_next = p_next / p_next.sum()
        delta = float(np.abs(p_next - p).sum())
        p = p_next
        if delta < epsilon:
            return p, t, True
    return p, max_iters, False


def ppr_rank(graph: CandidateGraph, seed, cfg: RerankConfig) -> RankedResult:
    s = _check_seed(graph, seed)
    s_tilde = normalize_seed(s) if cfg.ppr_normalize_seed else s
    W = column_normalize(graph.adjacency)
    p, iters, converged = ppr_smooth(
        W, s_tilde, cfg.alpha, cfg.epsilon, cfg.max_iters, cfg.ppr_dangling
    )
    final = np.maximum(p, s_tilde) if cfg.ppr_apply_floor else p
    return _ranked(graph, final, s_tilde, iters, converged, "ppr")


# ---------------------------------------------------------------------------
# oracle


def solve_oracle(
    graph: CandidateGraph, seed, cfg: RerankConfig, normalization: str = "row"
) -> np.ndarray:
    """Exact fixed point of p = alpha*s + (1-alpha)*W*p by direct dense solve.

    Test oracle only. Column mode mirrors ppr_rank's seed normalization and
    requires a dangling-free graph (otherwise the iterate and the linear
    system solve different problems).
    """
    s = _check_seed(graph, seed)
    if graph.n > 1000:
        raise ValidationError(f"oracle capped at n <= 1000, got {graph.n}")
    if normalization == "row":
        W = row_normalize(graph.adjacency)
    elif normalization == "column":
        if np.any(graph.adjacency.sum(axis=0) == 0):
            raise ValidationError("column-mode oracle requires no dangling nodes")
        W = column_normalize(graph.adjacency)
        s = normalize_seed(s)
    else:
        raise ConfigError(f"unknown normalization {normalization!r}")
    system = np.eye(graph.n) - (1.0 - cfg.alpha) * W
    try:
        return np.linalg.solve(system, cfg.alpha * s)
    except np.linalg.LinAlgError as exc:  # cannot occur for alpha in (0,1)
        raise ArithmeticError(f"oracle system is singular: {exc}") from exc


def final_ranking(result: RankedResult, k: int) -> list[str]:
    """First min(k, n) candidate ids in ranked order."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    return [entry.id for entry in result.entries[:k]]


def rerank(graph: CandidateGraph, seed, cfg: RerankConfig) -> RankedResult:
    """Dispatch on cfg.algorithm."""
    if cfg.algorithm == "ppr":
        return ppr_rank(graph, seed, cfg)
    return gcs_rank(graph, seed, cfg)


# ---------------------------------------------------------------------------
# run files


@dataclass
class RerankRunRecord:
    query_id: str
    result: RankedResult
    scheme: str = "structural"
    alpha: float = 0.5
    latency_seconds: float | None = None


def save_rerank_run(records: list[RerankRunRecord], path) -> None:
    lines = []
    for rec in records:
        line: dict = {
            "query_id": rec.query_id,
            "algorithm": rec.result.algorithm,
            "scheme": rec.scheme,
            "alpha": rec.alpha,
            "candidates": [
                {"id": e.id, "final": e.final, "seed": e.seed}
                for e in rec.result.entries
            ],
            "iterations": rec.result.iterations,
            "converged": rec.result.converged,
        }
        if rec.latency_seconds is not None:
            line["latency_seconds"] = rec.latency_seconds
        lines.append(json.dumps(line, ensure_ascii=False))
    atomic_write_text(path, "\n".join(lines) + "\n" if lines else "")


def load_rerank_run(path) -> list[RerankRunRecord]:
    records: list[RerankRunRecord] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"malformed JSON ({exc.msg})")
            result = RankedResult(
                entries=[
                    RankedEntry(
                        id=c["id"], final=float(c["final"]), seed=float(c["seed"])
                    )
                    for c in raw["candidates"]
                ],
                iterations=int(raw.get("iterations", 0)),
                converged=bool(raw.get("converged", True)),
                algorithm=raw.get("algorithm", "gcs"),
            )
            records.append(
                RerankRunRecord(
                    query_id=raw["query_id"],
                    result=result,
                    scheme=raw.get("scheme", "structural"),
                    alpha=float(raw.get("alpha", 0.5)),
                    latency_seconds=raw.get("latency_seconds"),
                )
            )
    return records
