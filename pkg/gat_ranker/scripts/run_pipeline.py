#!/usr/bin/env python3
"""End-to-end demo: train the attention ranker on an exported feature file
and compare PR@K against the base retriever and the smoothed ranking.

Every retrieval-side step runs through the `grapher` CLI; this script only
touches the boundary files (features in, scores out).
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import tempfile
from pathlib import Path

from gat_ranker import (
    GatConfig,
    TrainProtocol,
    load_feature_file,
    score_graph,
    train,
    write_scores,
)


def grapher(*args) -> None:
    proc = subprocess.run(
        [sys.executable, "-m", "grapher.cli", *map(str, args)],
        capture_output=True, text=True,
    )
    if proc.returncode != 0:
        sys.exit(f"grapher {' '.join(map(str, args))}\n{proc.stdout}{proc.stderr}")


def pr_table(path: Path) -> dict[str, float]:
    report = json.loads(path.read_text())
    return {k: v for k, v in report["aggregates"]["all"].items()}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--queries", type=int, default=30)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--epochs", type=int, default=150)
    ap.add_argument("--lr", type=float, default=5e-5)
    ap.add_argument("--out-dir", type=Path, help="defaults to a temp dir")
    args = ap.parse_args()

    d = args.out_dir or Path(tempfile.mkdtemp(prefix="gat-pipeline-"))
    d.mkdir(parents=True, exist_ok=True)
    print(f"workdir: {d}")

    grapher("gen-synthetic", "--pattern", "fk-triple",
            "--queries", args.queries, "--seed", args.seed, "--out-dir", d)
    grapher("enrich", "--corpus", d / "corpus.jsonl", "--links", d / "links.tsv",
            "--out", d / "enriched.jsonl")
    grapher("search", "--corpus", d / "enriched.jsonl", "--vectors", d / "vectors.jsonl",
            "--queries", d / "queries.jsonl", "--topn", "20", "--out", d / "search.jsonl")
    grapher("rerank", "--corpus", d / "enriched.jsonl", "--run", d / "search.jsonl",
            "--scheme", "union", "--algo", "gcs", "--alpha", "0.5", "--out", d / "gcs.jsonl")
    grapher("export-features", "--corpus", d / "enriched.jsonl", "--run", d / "gcs.jsonl",
            "--vectors", d / "vectors.jsonl", "--queries", d / "queries.jsonl",
            "--mode", "train", "--qrels", d / "qrels.tsv", "--out", d / "features.jsonl")

    graphs = load_feature_file(d / "features.jsonl", require_labels=True)
    print(f"training on {len(graphs)} graphs "
          f"({graphs[0].n} candidates each, feature dim {graphs[0].feature_dim})")
    result = train(
        graphs,
        GatConfig(input_dim=graphs[0].feature_dim),
        TrainProtocol(learning_rate=args.lr, epochs=args.epochs,
                      val_fraction=0.2, seed=0),
    )
    last = result.log[-1]
    print(f"epoch {last.epoch}: loss {last.loss:.5f}, "
          f"val PR@10 {100 * (last.val_pr10 or 0):.1f}%")

    write_scores(
        d / "gat_scores.jsonl",
        [(g.query_id,
          {oid: float(s) for oid, s in zip(g.ids, score_graph(result.model, g))})
         for g in graphs],
    )
    grapher("import-scores", "--run", d / "search.jsonl",
            "--scores", d / "gat_scores.jsonl", "--out", d / "gat_run.jsonl")

    for name, run in (("base", "search.jsonl"), ("gcs", "gcs.jsonl"),
                      ("gat", "gat_run.jsonl")):
        grapher("eval", "--run", d / run, "--qrels", d / "qrels.tsv",
                "--k", "5", "--k", "10", "--json", d / f"{name}_report.json")

    print(f"\n{'ranker':<8}" + "".join(f"PR@{k:<7}" for k in (5, 10)))
    for name in ("base", "gcs", "gat"):
        row = pr_table(d / f"{name}_report.json")
        print(f"{name:<8}" + "".join(f"{row[str(k)]:<10.1f}" for k in (5, 10)))


if __name__ == "__main__":
    main()
