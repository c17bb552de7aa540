"""Command-line pipeline: enrich -> index -> search -> rerank -> eval.

Every stage writes its documented output file plus a manifest line (stage
name, input digests, config digest) to manifest.jsonl next to the output, so
runs are reproducible byte-for-byte. Exit codes: 2 for missing inputs, 3 for
validation findings under --strict, 1 for other documented errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from . import enrichment, evaluation, features, graphs, rerank, retriever, synthetic
from .errors import ConfigError, GrapherError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MISSING_INPUT = 2
EXIT_STRICT_FINDINGS = 3


# ---------------------------------------------------------------------------
# helpers


def _digest_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()[:16]


def _digest_config(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True).encode("utf-8")
    ).hexdigest()[:16]


def _write_manifest(stage: str, inputs: dict, config: dict, outputs: list) -> None:
    out_dir = Path(outputs[0]).parent if outputs else Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    line = {
        "stage": stage,
        "inputs": {name: _digest_file(p) for name, p in inputs.items()},
        "config": _digest_config(config),
        "outputs": [str(p) for p in outputs],
    }
    with open(out_dir / "manifest.jsonl", "a", encoding="utf-8") as fh:
        fh.write(json.dumps(line) + "\n")


def _missing(paths: dict) -> list[str]:
    return [
        f"{name}: {p}" for name, p in paths.items()
        if p is not None and not Path(p).exists()
    ]


def _require(paths: dict) -> int | None:
    missing = _missing(paths)
    if missing:
        print("missing input(s):\n  " + "\n  ".join(missing), file=sys.stderr)
        return EXIT_MISSING_INPUT
    return None


def _provider(args) -> retriever.EmbeddingProvider:
    if getattr(args, "vectors", None):
        return retriever.FileBackedProvider(
            args.vectors, manifest=getattr(args, "vectors_manifest", None)
        )
    name = getattr(args, "provider", "hash") or "hash"
    if name == "hash":
        return retriever.HashToyProvider(dim=getattr(args, "dim", 64))
    if name == "remote":
        return retriever.RemoteServiceProvider(endpoint=getattr(args, "endpoint", None))
    raise ConfigError(f"unknown embedding provider {name!r}")


def _strict_check(args, corpus) -> int | None:
    """Run validate() when queries/qrels are at hand; exit 3 under --strict."""
    queries = (
        corpus_mod.load_queries(args.queries) if getattr(args, "queries", None) else []
    )
    qrels = corpus_mod.load_qrels(args.qrels) if getattr(args, "qrels", None) else {}
    findings = corpus_mod.validate(corpus, queries, qrels)
    for finding in findings:
        print(f"finding: {finding}", file=sys.stderr)
    if findings and getattr(args, "strict", False):
        print(f"strict mode: {len(findings)} finding(s)", file=sys.stderr)
        return EXIT_STRICT_FINDINGS
    return None


def _load_candidates(path) -> list[tuple[str, list[tuple[str, float]]]]:
    """(query_id, [(candidate id, seed), ...]) from a search or rerank run."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            raw = json.loads(line)
            pairs = []
            for c in raw["candidates"]:
                seed = c["seed"] if "seed" in c else c["score"]
                pairs.append((c["id"], float(seed)))
            out.append((raw["query_id"], pairs))
    return out


def _load_rankings(path) -> list[evaluation.QueryRanking]:
    """Ranked ids (file order) from a search or rerank run, with latency."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            raw = json.loads(line)
            out.append(
                evaluation.QueryRanking(
                    query_id=raw["query_id"],
                    ranked_ids=[c["id"] for c in raw["candidates"]],
                    latency_seconds=raw.get("latency_seconds"),
                )
            )
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_enrich(args) -> int:
    inputs = {"corpus": args.corpus, "links": args.links, "fixture": args.fixture,
              "chunk_docs": args.chunk_docs}
    code = _require({k: v for k, v in inputs.items() if v})
    if code:
        return code
    if not args.corpus and not args.chunk_docs:
        print("need --corpus and/or --chunk-docs", file=sys.stderr)
        return EXIT_MISSING_INPUT

    corpus = corpus_mod.load_corpus(args.corpus) if args.corpus else corpus_mod.Corpus()

    if args.chunk_docs:
        docs = []
        with open(args.chunk_docs, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    raw = json.loads(line)
                    docs.append((raw["doc_id"], raw["text"]))
        cfg = enrichment.ChunkingConfig(window=args.window)
        for chunk in enrichment.enrich_contextual(docs, cfg):
            corpus.add(chunk)
        print(f"chunked {len(docs)} document(s)")

    if args.links:
        enrichment.enrich_structural(corpus, enrichment.load_links(args.links))
        print(f"applied structural links from {args.links}")

    extractor = None
    if args.fixture:
        extractor = enrichment.FixtureFileExtractor(args.fixture)
    elif args.remote:
        extractor = enrichment.RemoteLLMExtractor(model=args.model)
    if extractor is not None:
        report = enrichment.enrich_conceptual(
            corpus, extractor, max_workers=args.workers
        )
        print(
            f"entities: {len(report.enriched)} enriched, "
            f"{len(report.skipped)} skipped, {len(report.failed)} failed"
        )
        if report.failed:
            print("failed ids: " + ", ".join(report.failed), file=sys.stderr)

    code = _strict_check(args, corpus)
    if code:
        return code

    corpus_mod.save_corpus(corpus, args.out)
    _write_manifest(
        "enrich",
        {k: v for k, v in inputs.items() if v},
        {"window": args.window, "model": args.model, "strict": args.strict},
        [args.out],
    )
    print(f"wrote {len(corpus)} object(s) to {args.out}")
    return EXIT_OK


def cmd_index(args) -> int:
    code = _require({"corpus": args.corpus, "vectors": args.vectors})
    if code:
        return code
    corpus = corpus_mod.load_corpus(args.corpus)
    code = _strict_check(args, corpus)
    if code:
        return code

    cfg = retriever.RetrieverConfig(k1=args.k1, b=args.b)
    index, store = retriever.build_index(corpus, _provider(args), cfg)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    vectors_out = out_dir / "vectors.jsonl"
    lines = [
        json.dumps({"id": vid, "vector": store.matrix[i].tolist()})
        for i, vid in enumerate(store.ids)
    ]
    corpus_mod.atomic_write_text(vectors_out, "\n".join(lines) + "\n")
    stats_out = out_dir / "index_stats.json"
    corpus_mod.atomic_write_text(
        stats_out,
        json.dumps(
            {
                "objects": index.size,
                "vocabulary": len(index.postings),
                "avg_len": index.avg_len,
                "dim": store.dim,
            },
            indent=2,
        )
        + "\n",
    )
    _write_manifest(
        "index",
        {"corpus": args.corpus, **({"vectors": args.vectors} if args.vectors else {})},
        {"k1": args.k1, "b": args.b, "provider": args.provider or "file"},
        [vectors_out, stats_out],
    )
    print(f"indexed {index.size} object(s), vocabulary {len(index.postings)}")
    return EXIT_OK


def cmd_search(args) -> int:
    code = _require(
        {"corpus": args.corpus, "queries": args.queries, "vectors": args.vectors}
    )
    if code:
        return code
    corpus = corpus_mod.load_corpus(args.corpus)
    queries = corpus_mod.load_queries(args.queries)
    code = _strict_check(args, corpus)
    if code:
        return code

    cfg = retriever.RetrieverConfig(
        n=args.topn, w_bm25=args.w_bm25, w_dense=1.0 - args.w_bm25,
        k1=args.k1, b=args.b,
    )
    index, store = retriever.build_index(corpus, _provider(args), cfg)
    results = [retriever.hybrid_retrieve(q, index, store, cfg) for q in queries]
    retriever.save_search_run(results, args.out)
    _write_manifest(
        "search",
        {
            "corpus": args.corpus,
            "queries": args.queries,
            **({"vectors": args.vectors} if args.vectors else {}),
        },
        {"n": cfg.n, "w_bm25": cfg.w_bm25, "k1": cfg.k1, "b": cfg.b},
        [args.out],
    )
    print(f"searched {len(queries)} query(ies) -> {args.out}")
    return EXIT_OK


def _alpha_grid(text: str) -> list[float]:
    try:
        lo, hi, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError(f"--sweep-alpha expects lo:hi:step, got {text!r}")
    if step <= 0 or not 0 < lo <= hi < 1:
        raise ConfigError(f"bad sweep grid {text!r}")
    out, a = [], lo
    while a <= hi + 1e-9:
        out.append(round(a, 10))
        a += step
    return out


def _rerank_once(search_run, corpus, cfg: rerank.RerankConfig, scheme: str):
    records = []
    for result in search_run:
        ids = result.ids()
        seeds = np.array([c.score for c in result.candidates])
        t0 = time.perf_counter()
        graph = graphs.build(ids, corpus, scheme)
        ranked = rerank.rerank(graph, seeds, cfg)
        latency = time.perf_counter() - t0
        records.append(
            rerank.RerankRunRecord(
                query_id=result.query_id,
                result=ranked,
                scheme=scheme,
                alpha=cfg.alpha,
                latency_seconds=latency,
            )
        )
    return records


def cmd_rerank(args) -> int:
    code = _require({"corpus": args.corpus, "run": args.run, "qrels": args.qrels})
    if code:
        return code
    corpus = corpus_mod.load_corpus(args.corpus)
    search_run = retriever.load_search_run(args.run)

    def config_for(alpha: float) -> rerank.RerankConfig:
        return rerank.RerankConfig(
            alpha=alpha, epsilon=args.epsilon, algorithm=args.algo
        )

    manifest_cfg = {
        "algo": args.algo, "scheme": args.scheme,
        "alpha": args.alpha, "epsilon": args.epsilon,
    }
    outputs: list = []

    if args.sweep_alpha:
        grid = _alpha_grid(args.sweep_alpha)
        summary = {"algo": args.algo, "scheme": args.scheme, "alphas": [], "pr": {}}
        qrels = corpus_mod.load_qrels(args.qrels) if args.qrels else None
        out_path = Path(args.out)
        for alpha in grid:
            records = _rerank_once(search_run, corpus, config_for(alpha), args.scheme)
            path = out_path.with_name(f"{out_path.stem}.alpha{alpha:g}{out_path.suffix}")
            rerank.save_rerank_run(records, path)
            outputs.append(path)
            summary["alphas"].append(alpha)
            if qrels is not None:
                report = evaluation.evaluate_run(
                    [
                        evaluation.QueryRanking(r.query_id, r.result.ids())
                        for r in records
                    ],
                    qrels,
                    evaluation.EvalConfig(ks=tuple(args.k)),
                )
                summary["pr"][f"{alpha:g}"] = {
                    flt: {str(k): v for k, v in report.aggregates[flt].items()}
                    for flt in evaluation.FILTERS
                }
        if qrels is not None:
            summary_path = out_path.with_name(f"{out_path.stem}.sweep.json")
            corpus_mod.atomic_write_text(
                summary_path, json.dumps(summary, indent=2) + "\n"
            )
            outputs.append(summary_path)
        print(f"swept {len(grid)} alpha value(s) -> {out_path.parent}")
    else:
        records = _rerank_once(search_run, corpus, config_for(args.alpha), args.scheme)
        rerank.save_rerank_run(records, args.out)
        outputs.append(args.out)
        if args.dump_graph:
            lines = []
            for result in search_run:
                graph = graphs.build(result.ids(), corpus, args.scheme)
                dump = graphs.dump_graph(graph)
                dump["query_id"] = result.query_id
                lines.append(json.dumps(dump))
            corpus_mod.atomic_write_text(args.dump_graph, "\n".join(lines) + "\n")
            outputs.append(args.dump_graph)
        print(f"reranked {len(records)} query(ies) -> {args.out}")

    _write_manifest(
        "rerank", {"corpus": args.corpus, "run": args.run}, manifest_cfg, outputs
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    code = _require(
        {"run": args.run, "qrels": args.qrels, "baseline": args.baseline}
    )
    if code:
        return code
    qrels = corpus_mod.load_qrels(args.qrels)
    cfg = evaluation.EvalConfig(ks=tuple(args.k))
    report = evaluation.evaluate_run(_load_rankings(args.run), qrels, cfg)

    deltas = None
    if args.baseline:
        base_report = evaluation.evaluate_run(
            _load_rankings(args.baseline), qrels, cfg
        )
        deltas = evaluation.compare_runs(base_report, report)

    print(evaluation.report_to_table(report, deltas))
    for finding in report.findings:
        print(f"finding: {finding}", file=sys.stderr)

    outputs: list = []
    if args.json:
        corpus_mod.atomic_write_text(args.json, evaluation.report_to_json(report) + "\n")
        outputs.append(args.json)
    if args.csv:
        corpus_mod.atomic_write_text(args.csv, evaluation.report_to_csv(report))
        outputs.append(args.csv)
    if outputs:
        _write_manifest(
            "eval",
            {"run": args.run, "qrels": args.qrels},
            {"ks": list(cfg.ks)},
            outputs,
        )
    return EXIT_OK


def cmd_export_features(args) -> int:
    code = _require(
        {
            "corpus": args.corpus, "queries": args.queries, "run": args.run,
            "vectors": args.vectors, "qrels": args.qrels,
        }
    )
    if code:
        return code
    corpus = corpus_mod.load_corpus(args.corpus)
    queries = corpus_mod.load_queries(args.queries)
    records = rerank.load_rerank_run(args.run)
    provider = _provider(args)
    cfg = retriever.RetrieverConfig()
    _, store = retriever.build_index(corpus, provider, cfg)
    qrels = corpus_mod.load_qrels(args.qrels) if args.qrels else None
    count = features.export_features(
        records, corpus, queries, store, args.scheme, args.mode, args.out, qrels
    )
    _write_manifest(
        "export-features",
        {"corpus": args.corpus, "queries": args.queries, "run": args.run},
        {"scheme": args.scheme, "mode": args.mode},
        [args.out],
    )
    print(f"exported {count} feature record(s) -> {args.out}")
    return EXIT_OK


def cmd_import_scores(args) -> int:
    code = _require({"run": args.run, "scores": args.scores})
    if code:
        return code
    run = _load_candidates(args.run)
    scores = features.load_scores(args.scores)
    records = features.import_scores(scores, run)
    rerank.save_rerank_run(records, args.out)
    _write_manifest(
        "import-scores", {"run": args.run, "scores": args.scores}, {}, [args.out]
    )
    print(f"imported scores for {len(records)} query(ies) -> {args.out}")
    return EXIT_OK


def cmd_gen_synthetic(args) -> int:
    paths = synthetic.gen_synthetic(args.pattern, args.queries, args.seed, args.out_dir)
    _write_manifest(
        "gen-synthetic",
        {},
        {"pattern": args.pattern, "queries": args.queries, "seed": args.seed},
        list(paths.values()),
    )
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_provider_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--vectors", help="FileBacked vectors JSONL (ids cover objects and queries)")
    p.add_argument("--vectors-manifest", help="manifest JSON for a binary vector file")
    p.add_argument("--provider", choices=["hash", "remote"], help="provider when no --vectors")
    p.add_argument("--dim", type=int, default=64, help="HashToy dimension")
    p.add_argument("--endpoint", help="remote embedding endpoint (or GRAPHER_EMBED_ENDPOINT)")


def _add_strict_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--queries", help="queries JSONL (for validation)")
    p.add_argument("--qrels", help="qrels TSV (for validation)")
    p.add_argument("--strict", action="store_true", help="exit 3 on validation findings")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grapher",
        description="link-aware retrieval: hybrid base retrieval + graph reranking",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enrich", help="offline enrichment passes")
    p.add_argument("--corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--links", help="structural link table TSV")
    p.add_argument("--fixture", help="entity fixture JSONL")
    p.add_argument("--remote", action="store_true", help="use the remote LLM extractor")
    p.add_argument("--model", default="gpt-4o")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--chunk-docs", help="documents JSONL {doc_id,text} to chunk")
    p.add_argument("--window", type=int, default=100)
    _add_strict_flags(p)
    p.set_defaults(func=cmd_enrich)

    p = sub.add_parser("index", help="build + persist index artifacts")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    _add_provider_flags(p)
    _add_strict_flags(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="hybrid retrieval over a query file")
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--topn", type=int, default=200)
    p.add_argument("--w-bm25", type=float, default=0.3)
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    _add_provider_flags(p)
    p.add_argument("--qrels", help="qrels TSV (for validation)")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("rerank", help="graph rerank a search run")
    p.add_argument("--corpus", required=True)
    p.add_argument("--run", required=True, help="search run JSONL")
    p.add_argument("--out", required=True)
    p.add_argument("--scheme", default="structural", choices=list(graphs.SCHEMES))
    p.add_argument("--algo", default="gcs", choices=["gcs", "ppr"])
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--epsilon", type=float, default=1e-10)
    p.add_argument("--dump-graph", help="also dump candidate graphs to this JSONL")
    p.add_argument("--sweep-alpha", help="lo:hi:step grid, one run file per alpha")
    p.add_argument("--qrels", help="with --sweep-alpha: also write a PR@K summary")
    p.add_argument("--k", type=int, action="append", default=None)
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("eval", help="perfect recall@K report")
    p.add_argument("--run", required=True)
    p.add_argument("--qrels", required=True)
    p.add_argument("--k", type=int, action="append", default=None)
    p.add_argument("--baseline", help="second run to diff against")
    p.add_argument("--json", help="write the report as JSON here")
    p.add_argument("--csv", help="write one CSV row per (K, filter) here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-features", help="write NodeFeatureRecord JSONL")
    p.add_argument("--corpus", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--run", required=True, help="GCS rerank run JSONL")
    p.add_argument("--scheme", default="structural", choices=list(graphs.SCHEMES))
    p.add_argument("--mode", default="infer", choices=["train", "infer"])
    p.add_argument("--qrels", help="labels source (train mode)")
    p.add_argument("--out", required=True)
    _add_provider_flags(p)
    p.set_defaults(func=cmd_export_features)

    p = sub.add_parser("import-scores", help="re-rank a run by an external score file")
    p.add_argument("--run", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_import_scores)

    p = sub.add_parser("gen-synthetic", help="deterministic synthetic corpora")
    p.add_argument("--pattern", required=True, choices=["fk-triple", "hub"])
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_synthetic)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "k", None) is not None:
        args.k = list(dict.fromkeys(args.k))
    else:
        if hasattr(args, "k"):
            args.k = [5, 10]
    try:
        return args.func(args)
    except GrapherError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
