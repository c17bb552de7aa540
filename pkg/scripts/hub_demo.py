#!/usr/bin/env python3
"""Hub pathology demo: PPR promotes the high-degree hub, GCS does not.

Builds the star instance (hub + 20 leaves at low seed score, one detached
high-seed relevant object) and prints the top-5 under both smoothers.
"""

import argparse

import numpy as np

from grapher.graphs import CandidateGraph
from grapher.rerank import RerankConfig, gcs_rank, ppr_rank


def star_instance(leaves: int = 20):
    n = leaves + 2
    A = np.zeros((n, n))
    A[0, 1 : leaves + 1] = 1.0
    A[1 : leaves + 1, 0] = 1.0
    ids = ["hub"] + [f"leaf{i:02d}" for i in range(leaves)] + ["detached"]
    seed = np.full(n, 0.05)
    seed[-1] = 0.9
    graph = CandidateGraph(ids=ids, adjacency=A, scheme="structural")
    return graph, seed


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--alpha", type=float, default=0.5)
    parser.add_argument("--leaves", type=int, default=20)
    args = parser.parse_args()

    graph, seed = star_instance(args.leaves)
    gcs = gcs_rank(graph, seed, RerankConfig(alpha=args.alpha))
    ppr = ppr_rank(graph, seed, RerankConfig(alpha=args.alpha, algorithm="ppr"))

    print(f"star instance: hub + {args.leaves} leaves (seed 0.05), detached (seed 0.9)")
    for name, result in (("gcs", gcs), ("ppr", ppr)):
        print(f"\n{name} top-5 (alpha={args.alpha}):")
        for rank, entry in enumerate(result.entries[:5], start=1):
            print(f"  {rank}. {entry.id:<10} final={entry.final:.6f} seed={entry.seed:.6f}")


if __name__ == "__main__":
    main()
