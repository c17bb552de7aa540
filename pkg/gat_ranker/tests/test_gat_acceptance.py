"""Acceptance checks for the attention ranker.

The overfit test drives the retrieval package exclusively through its command
line and files: synthetic corpus in, node-feature records out, score file
back in, evaluation report out.
"""

import json
import time

import torch

from gat_ranker import (
    GatConfig,
    GatModel,
    TrainProtocol,
    grad_check,
    load_feature_file,
    random_instance,
    save_checkpoint,
    score_graph,
    train,
    write_scores,
)
from gat_helpers import check, make_record, run_gat, run_grapher, write_features

GRAD_CHECK_SEEDS = (0, 1, 2, 3, 4)
DATA_SEED = 20240818


def test_gradient_check_under_1e4_on_tiny_instances_five_seeds():
    for seed in GRAD_CHECK_SEEDS:
        graph = random_instance(seed, n=4, dim=2)
        torch.manual_seed(seed)
        model = GatModel(GatConfig(input_dim=graph.feature_dim, width=4, heads=2))
        err = grad_check(model, graph, step=1e-5)
        assert err < 1e-4, f"seed {seed}: max relative error {err:.3e}"


def test_overfit_sanity_monotone_loss_and_pr10_not_below_gcs(tmp_path):
    started = time.monotonic()
    d = tmp_path

    check(run_grapher("gen-synthetic", "--pattern", "fk-triple", "--queries", "50",
                      "--seed", str(DATA_SEED), "--out-dir", d))
    check(run_grapher("enrich", "--corpus", d / "corpus.jsonl",
                      "--links", d / "links.tsv", "--out", d / "enriched.jsonl"))
    check(run_grapher("search", "--corpus", d / "enriched.jsonl",
                      "--vectors", d / "vectors.jsonl", "--queries", d / "queries.jsonl",
                      "--topn", "20", "--out", d / "search.jsonl"))
    check(run_grapher("rerank", "--corpus", d / "enriched.jsonl",
                      "--run", d / "search.jsonl", "--scheme", "union",
                      "--algo", "gcs", "--alpha", "0.5", "--out", d / "gcs.jsonl"))
    check(run_grapher("export-features", "--corpus", d / "enriched.jsonl",
                      "--run", d / "gcs.jsonl", "--vectors", d / "vectors.jsonl",
                      "--queries", d / "queries.jsonl", "--mode", "train",
                      "--qrels", d / "qrels.tsv", "--out", d / "features.jsonl"))

    graphs = load_feature_file(d / "features.jsonl", require_labels=True)
    assert len(graphs) == 50
    result = train(
        graphs,
        GatConfig(input_dim=graphs[0].feature_dim),
        TrainProtocol(learning_rate=5e-5, epochs=200, val_fraction=0.2, seed=0),
    )

    losses = [entry.loss for entry in result.log]
    for i in range(9):
        assert losses[i + 1] < losses[i], (
            f"training loss not monotone over the first 10 epochs: {losses[:10]}"
        )

    write_scores(
        d / "gat_scores.jsonl",
        [
            (g.query_id,
             {oid: float(s) for oid, s in zip(g.ids, score_graph(result.model, g))})
            for g in graphs
        ],
    )
    check(run_grapher("import-scores", "--run", d / "search.jsonl",
                      "--scores", d / "gat_scores.jsonl", "--out", d / "gat_run.jsonl"))
    check(run_grapher("eval", "--run", d / "gat_run.jsonl", "--qrels", d / "qrels.tsv",
                      "--k", "10", "--json", d / "gat_report.json"))
    check(run_grapher("eval", "--run", d / "gcs.jsonl", "--qrels", d / "qrels.tsv",
                      "--k", "10", "--json", d / "gcs_report.json"))

    gat_pr10 = json.loads((d / "gat_report.json").read_text())["aggregates"]["all"]["10"]
    gcs_pr10 = json.loads((d / "gcs_report.json").read_text())["aggregates"]["all"]["10"]
    assert gat_pr10 >= gcs_pr10, f"GAT PR@10 {gat_pr10} fell below GCS {gcs_pr10}"

    elapsed = time.monotonic() - started
    assert elapsed < 600.0, f"overfit sanity run took {elapsed:.0f}s"


def test_mlp_ablation_scores_bit_identical_with_and_without_edges(tmp_path):
    records = [make_record(f"q{i}", n=6, dim=2, seed=i) for i in range(3)]
    assert any(r["edges"] for r in records)
    with_edges = tmp_path / "with_edges.jsonl"
    without_edges = tmp_path / "without_edges.jsonl"
    write_features(with_edges, records)
    write_features(without_edges, [dict(r, edges=[]) for r in records])

    torch.manual_seed(1)
    model = GatModel(GatConfig(input_dim=5, width=8, heads=2, ablation="mlp"))
    ckpt = tmp_path / "mlp.pt"
    save_checkpoint(model, ckpt)

    out_a, out_b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    check(run_gat("predict", "--model", ckpt, "--features", with_edges, "--out", out_a))
    check(run_gat("predict", "--model", ckpt, "--features", without_edges, "--out", out_b))
    assert out_a.read_bytes() == out_b.read_bytes()
