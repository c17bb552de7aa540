#!/usr/bin/env python3
"""Damping-factor sweep: PR@5 for GCS and PPR as alpha moves across (0,1)."""

import argparse
import tempfile

import numpy as np

from grapher.corpus import load_corpus, load_qrels, load_queries
from grapher.evaluation import EvalConfig, QueryRanking, evaluate_run
from grapher.graphs import build
from grapher.rerank import RerankConfig, rerank
from grapher.retriever import FileBackedProvider, RetrieverConfig, build_index, hybrid_retrieve
from grapher.synthetic import gen_synthetic


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--queries", type=int, default=100)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--scheme", default="structural")
    parser.add_argument("--k", type=int, default=5)
    args = parser.parse_args()

    paths = gen_synthetic(
        "fk-triple", args.queries, args.seed, tempfile.mkdtemp(prefix="sweep_")
    )
    corpus = load_corpus(paths["corpus"])
    queries = load_queries(paths["queries"])
    qrels = load_qrels(paths["qrels"])
    cfg = RetrieverConfig(n=200)
    index, store = build_index(corpus, FileBackedProvider(paths["vectors"]), cfg)

    # retrieve once; the candidate sets do not depend on alpha
    base = []
    for query in queries:
        result = hybrid_retrieve(query, index, store, cfg)
        graph = build(result.ids(), corpus, args.scheme)
        base.append((query.id, graph, np.array([c.score for c in result.candidates])))

    eval_cfg = EvalConfig(ks=(args.k,))
    alphas = [round(0.1 * i, 1) for i in range(1, 10)]
    print(f"alpha  {'gcs PR@' + str(args.k):>10}  {'ppr PR@' + str(args.k):>10}")
    for alpha in alphas:
        row = []
        for algo in ("gcs", "ppr"):
            rerank_cfg = RerankConfig(alpha=alpha, algorithm=algo)
            run = [
                QueryRanking(qid, rerank(graph, seeds, rerank_cfg).ids())
                for qid, graph, seeds in base
            ]
            row.append(evaluate_run(run, qrels, eval_cfg).aggregates["all"][args.k])
        print(f"{alpha:>5}  {row[0]:>10.1f}  {row[1]:>10.1f}")


if __name__ == "__main__":
    main()
