"""Perfect recall@K evaluation plus rerank latency statistics.

PR@K for one query is 1 iff every relevant object appears in the top-K of the
ranking, else 0. Reports carry the all-queries aggregate and the aggregate
restricted to queries with more than one relevant object (where multi-hop
behavior actually shows), plus latency mean/median/p95 when the run recorded
per-query rerank timings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import Qrels
from .errors import ConfigError

FILTERS = ("all", "multi_relevant")


@dataclass
class EvalConfig:
    ks: tuple[int, ...] = (5, 10)
    filter: str = "all"  # headline filter; reports always carry both

    def __post_init__(self) -> None:
        self.ks = tuple(sorted(set(int(k) for k in self.ks)))
        if not self.ks or any(k < 1 for k in self.ks):
            raise ConfigError("every K must be >= 1")
        if self.filter not in FILTERS:
            raise ConfigError(f"unknown filter {self.filter!r}")


@dataclass
class QueryRanking:
    """One query's ranked candidate ids, with optional rerank latency."""

    query_id: str
    ranked_ids: list[str]
    latency_seconds: float | None = None


@dataclass
class LatencyStats:
    mean: float
    median: float
    p95: float
    count: int


@dataclass
class EvalReport:
    config: EvalConfig
    per_query: dict[str, dict[int, int]]  # query id -> {k -> 0/1}
    aggregates: dict[str, dict[int, float | None]]  # filter -> {k -> percent}
    counts: dict[str, int]  # filter -> query count
    findings: list[str] = field(default_factory=list)
    latency: LatencyStats | None = None


def perfect_recall_at_k(ranked_ids: list[str], relevant: set[str], k: int) -> int:
    """1 iff relevant is a subset of the first k ranked ids."""
    if not relevant:
        raise ValueError("PR@K is undefined for an empty relevant set")
    if k < 1:
        raise ConfigError("k must be >= 1")
    return int(relevant.issubset(set(ranked_ids[:k])))


def evaluate_run(run: list[QueryRanking], qrels: Qrels, cfg: EvalConfig) -> EvalReport:
    findings: list[str] = []
    per_query: dict[str, dict[int, int]] = {}
    multi: set[str] = set()
    latencies: list[float] = []

    for record in run:
        qid = record.query_id
        if qid not in qrels:
            findings.append(f"query {qid!r} has no qrels entry; excluded")
            continue
        relevant = qrels[qid]
        if not relevant:
            findings.append(f"query {qid!r} has an empty relevant set; skipped")
            continue
        per_query[qid] = {
            k: perfect_recall_at_k(record.ranked_ids, relevant, k) for k in cfg.ks
        }
        if len(relevant) > 1:
            multi.add(qid)
        if record.latency_seconds is not None:
            latencies.append(record.latency_seconds)

    subsets = {"all": list(per_query), "multi_relevant": [q for q in per_query if q in multi]}
    aggregates: dict[str, dict[int, float | None]] = {}
    counts: dict[str, int] = {}
    for name, qids in subsets.items():
        counts[name] = len(qids)
        aggregates[name] = {}
        for k in cfg.ks:
            if qids:
                aggregates[name][k] = 100.0 * float(
                    np.mean([per_query[q][k] for q in qids])
                )
            else:
                aggregates[name][k] = None

    latency = None
    if latencies:
        arr = np.asarray(latencies)
        latency = LatencyStats(
            mean=float(arr.mean()),
            median=float(np.median(arr)),
            p95=float(np.percentile(arr, 95)),
            count=len(latencies),
        )
    return EvalReport(
        config=cfg,
        per_query=per_query,
        aggregates=aggregates,
        counts=counts,
        findings=findings,
        latency=latency,
    )


def compare_runs(
    base: EvalReport, reranked: EvalReport
) -> dict[str, dict[int, float | None]]:
    """Reranked minus base, in percentage points, per filter and K."""
    if base.config.ks != reranked.config.ks:
        raise ConfigError(
            f"reports evaluated at different K values: "
            f"{base.config.ks} vs {reranked.config.ks}"
        )
    deltas: dict[str, dict[int, float | None]] = {}
    for name in FILTERS:
        deltas[name] = {}
        for k in base.config.ks:
            b = base.aggregates[name][k]
            r = reranked.aggregates[name][k]
            deltas[name][k] = None if b is None or r is None else r - b
    return deltas


# ---------------------------------------------------------------------------
# rendering


def _fmt(value: float | None) -> str:
    return "N/A" if value is None else f"{value:.1f}"


def report_to_dict(report: EvalReport) -> dict:
    out: dict = {
        "ks": list(report.config.ks),
        "aggregates": {
            name: {str(k): report.aggregates[name][k] for k in report.config.ks}
            for name in FILTERS
        },
        "counts": dict(report.counts),
        "per_query": {
            qid: {str(k): bit for k, bit in bits.items()}
            for qid, bits in report.per_query.items()
        },
        "findings": list(report.findings),
    }
    if report.latency is not None:
        out["latency_seconds"] = {
            "mean": report.latency.mean,
            "median": report.latency.median,
            "p95": report.latency.p95,
            "count": report.latency.count,
        }
    return out


def report_to_json(report: EvalReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, ensure_ascii=False)


def report_to_table(
    report: EvalReport, deltas: dict[str, dict[int, float | None]] | None = None
) -> str:
    """Aligned-column text table, one row per (filter, K)."""
    headers = ["filter", "K", "PR@K %", "queries"]
    if deltas is not None:
        headers.append("delta")
    rows: list[list[str]] = []
    for name in FILTERS:
        for k in report.config.ks:
            row = [
                name,
                str(k),
                _fmt(report.aggregates[name][k]),
                str(report.counts[name]),
            ]
            if deltas is not None:
                value = deltas[name][k]
                row.append("N/A" if value is None else f"{value:+.1f}")
            rows.append(row)
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(r[i].ljust(widths[i]) for i in range(len(headers))) for r in rows]
    if report.latency is not None:
        lines.append(
            f"rerank latency: mean {report.latency.mean * 1000:.2f} ms, "
            f"median {report.latency.median * 1000:.2f} ms, "
            f"p95 {report.latency.p95 * 1000:.2f} ms "
            f"({report.latency.count} queries)"
        )
    return "\n".join(lines)


def report_to_csv(report: EvalReport) -> str:
    """One row per (K, filter)."""
    lines = ["filter,k,pr_at_k,queries"]
    for name in FILTERS:
        for k in report.config.ks:
            value = report.aggregates[name][k]
            lines.append(
                f"{name},{k},{'' if value is None else f'{value:.4f}'},{report.counts[name]}"
            )
    return "\n".join(lines) + "\n"
