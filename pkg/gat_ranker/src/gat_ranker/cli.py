"""``gat-ranker``: train / predict / grad-check on node-feature files.

The tool only ever touches the boundary files — node-feature JSONL in, score
JSONL out, plus its own checkpoint (weights + JSON sidecar), tuned
hyper-parameter file, and training log.

Exit codes match the retrieval CLI: 0 success, 1 config/data error,
2 missing input file.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import torch

from .errors import ConfigError, GatRankerError
from .model import GatConfig, GatModel, load_checkpoint, save_checkpoint, score_graph
from .records import load_feature_file, write_scores
from .training import (
    TrainProtocol,
    grad_check,
    load_tuned,
    random_instance,
    run_digest,
    save_tuned,
    train,
    tune,
    write_training_log,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_MISSING_INPUT = 2


def _require(paths: list[Path]) -> None:
    missing = [str(p) for p in paths if not Path(p).exists()]
    if missing:
        print(f"missing input file(s): {', '.join(missing)}", file=sys.stderr)
        raise SystemExit(EXIT_MISSING_INPUT)


def _floats(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part]
    except ValueError as exc:
        raise ConfigError(f"bad float list {text!r}") from exc


def _model_config(args, input_dim: int) -> GatConfig:
    return GatConfig(
        input_dim=input_dim,
        width=args.width,
        heads=args.heads,
        ablation=None if args.ablation == "none" else args.ablation,
        use_edge_weights=args.edge_weights,
    )


def cmd_train(args) -> int:
    _require(args.features)
    graphs = []
    for path in args.features:
        graphs.extend(load_feature_file(path, require_labels=True))
    config = _model_config(args, graphs[0].feature_dim)

    out = Path(args.out)
    tuned_path = Path(args.tuned) if args.tuned else out.with_name(out.name + ".tuned.json")
    log_path = Path(args.log) if args.log else out.with_name(out.name + ".log.jsonl")

    explicit = [
        flag
        for flag, value in (("--lr", args.lr), ("--l2", args.l2), ("--epochs", args.epochs))
        if value is not None
    ]
    if args.stage == "final":
        if explicit:
            raise ConfigError(
                f"{', '.join(explicit)} cannot be set in the final stage; "
                "they are frozen by the tune stage (pass --tuned)"
            )
        _require([tuned_path])
        frozen = load_tuned(tuned_path)
        protocol = TrainProtocol(
            learning_rate=frozen.learning_rate,
            weight_decay=frozen.weight_decay,
            epochs=frozen.epochs,
            val_fraction=0.0,
            stage="final",
            seed=args.seed,
        )
        result = train(graphs, config, protocol)
    else:
        lrs = _floats(args.lr) if args.lr is not None else [1e-2]
        l2s = _floats(args.l2) if args.l2 is not None else [0.0]
        epochs = args.epochs if args.epochs is not None else 200
        frozen, result = tune(
            graphs, config, lrs, l2s, epochs,
            val_fraction=args.val_fraction, seed=args.seed,
        )
        save_tuned(tuned_path, frozen)
        print(
            f"tuned: lr={frozen.learning_rate:g} l2={frozen.weight_decay:g} "
            f"epochs={frozen.epochs} -> {tuned_path}"
        )

    digest = run_digest(config, result.protocol)
    save_checkpoint(result.model, out, config_digest=digest)
    write_training_log(log_path, result, digest)
    last = result.log[-1] if result.log else None
    summary = f"loss={last.loss:.6f}" if last else "no epochs run"
    if last and last.val_pr10 is not None:
        summary += f" val_pr10={100 * last.val_pr10:.1f}%"
    print(
        f"trained on {len(result.train_queries)} graphs "
        f"({len(result.val_queries)} held out): {summary}"
    )
    print(f"checkpoint {out} (digest {digest}), log {log_path}")
    return EXIT_OK


def cmd_predict(args) -> int:
    _require([args.model, args.features])
    model = load_checkpoint(args.model)
    graphs = load_feature_file(args.features)
    per_query = []
    for graph in graphs:
        scores = score_graph(model, graph)
        per_query.append(
            (graph.query_id, {oid: float(s) for oid, s in zip(graph.ids, scores)})
        )
    write_scores(args.out, per_query)
    print(f"wrote scores for {len(per_query)} queries to {args.out}")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    worst = 0.0
    for seed in args.seed:
        graph = random_instance(seed, n=args.nodes, dim=args.dim)
        torch.manual_seed(seed)
        model = GatModel(_model_config(args, graph.feature_dim))
        err = grad_check(model, graph, step=args.step)
        worst = max(worst, err)
        print(f"seed {seed}: max relative error {err:.3e}")
    if args.tol is not None and worst > args.tol:
        print(f"worst error {worst:.3e} exceeds tolerance {args.tol:g}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gat-ranker", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def model_flags(p):
        p.add_argument("--width", type=int, default=64)
        p.add_argument("--heads", type=int, default=4)
        p.add_argument("--ablation", choices=["none", "mlp"], default="none")
        p.add_argument("--edge-weights", action="store_true",
                       help="feed edge weights into the attention logits")

    p = sub.add_parser("train", help="fit a model on train-mode feature files")
    p.add_argument("--features", action="append", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--stage", choices=["tune", "final"], default="tune")
    p.add_argument("--lr", help="learning rate, or comma list to grid (tune stage)")
    p.add_argument("--l2", help="L2 coefficient, or comma list to grid (tune stage)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tuned", type=Path,
                   help="tuned hyper-parameter file (written by tune, read by final)")
    p.add_argument("--log", type=Path, help="training log path")
    model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="score a feature file with a checkpoint")
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--features", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("grad-check",
                       help="compare autograd against central finite differences")
    p.add_argument("--seed", action="append", type=int,
                   help="repeatable; defaults to seed 0")
    p.add_argument("--nodes", type=int, default=4)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tol", type=float,
                   help="exit non-zero if the worst error exceeds this")
    model_flags(p)
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "grad-check" and not args.seed:
        args.seed = [0]
    try:
        return args.func(args)
    except GatRankerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
