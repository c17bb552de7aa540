"""Training, tuning, and the finite-difference gradient oracle.

Training is pointwise: each candidate node is a binary relevance example, the
loss is sigmoid cross-entropy on the model's scalar output with the positive
class weighted by the per-graph negative/positive count ratio, and graphs are
visited one at a time (full batch per graph) in a fixed order so runs are
reproducible bit for bit given the seed. Ranking always uses the raw scalar;
the sigmoid exists only inside the loss.

The tune stage grids over learning rate and L2 coefficient, selects the epoch
count by the best validation PR@10 seen along the way, and freezes all three;
the final stage reuses exactly those frozen values (and trains without a
holdout, on everything).
"""

from __future__ import annotations

import copy
import hashlib
import json
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError
from .model import GatConfig, GatModel, graph_tensors
from .records import FeatureGraph, feature_graph_from_dict

STAGES = ("tune", "final")


@dataclass(frozen=True)
class TrainProtocol:
    learning_rate: float = 1e-2
    weight_decay: float = 0.0
    epochs: int = 200
    val_fraction: float = 0.2
    stage: str = "tune"
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be non-negative")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if not 0 <= self.val_fraction < 1:
            raise ConfigError("val_fraction must be in [0, 1)")
        if self.stage not in STAGES:
            raise ConfigError(f"stage must be one of {STAGES}")


@dataclass(frozen=True)
class TunedHyperparams:
    learning_rate: float
    weight_decay: float
    epochs: int


@dataclass
class EpochStats:
    epoch: int
    loss: float
    val_pr10: float | None


@dataclass
class TrainResult:
    model: GatModel
    config: GatConfig
    protocol: TrainProtocol
    log: list[EpochStats]
    train_queries: list[str]
    val_queries: list[str] = field(default_factory=list)


def run_digest(config: GatConfig, protocol: TrainProtocol) -> str:
    blob = json.dumps(
        {"config": asdict(config), "protocol": asdict(protocol)}, sort_keys=True
    ).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _pos_weight(labels: np.ndarray) -> float:
    positives = int(labels.sum())
    negatives = labels.size - positives
    if positives == 0 or negatives == 0:
        return 1.0
    return negatives / positives


def _check_train_graphs(graphs: list[FeatureGraph], config: GatConfig) -> None:
    for graph in graphs:
        if graph.labels is None:
            raise ConfigError(
                f"query {graph.query_id!r} has no labels; training needs "
                "train-mode feature records"
            )
        if graph.feature_dim != config.input_dim:
            raise ConfigError(
                f"feature dim mismatch for query {graph.query_id!r}: "
                f"model expects {config.input_dim}, file has {graph.feature_dim}"
            )


def split_graphs(
    graphs: list[FeatureGraph], val_fraction: float, seed: int
) -> tuple[list[FeatureGraph], list[FeatureGraph]]:
    """Deterministic holdout split; always leaves at least one training graph."""
    order = list(range(len(graphs)))
    random.Random(seed).shuffle(order)
    n_val = min(int(round(val_fraction * len(graphs))), len(graphs) - 1)
    val_idx = set(order[:n_val])
    train = [g for i, g in enumerate(graphs) if i not in val_idx]
    val = [g for i, g in enumerate(graphs) if i in val_idx]
    return train, val


def ranked_ids(graph: FeatureGraph, scores: np.ndarray) -> list[str]:
    """Candidate ids by score, with the importer's tie rule (seed, then id)."""
    order = sorted(
        range(graph.n),
        key=lambda i: (-float(scores[i]), -float(graph.seed[i]), graph.ids[i]),
    )
    return [graph.ids[i] for i in order]


def pr_at_k(ranked: list[str], relevant: set[str], k: int) -> int:
    if not relevant:
        raise ValueError("relevant set must not be empty")
    return int(relevant.issubset(ranked[:k]))


def _mean_loss(model: GatModel, bundles) -> float:
    """Training loss of the epoch-end weights (a clean pass, not the running
    mean sampled mid-update, so the logged curve reflects one fixed model)."""
    model.eval()
    with torch.no_grad():
        values = [
            torch.nn.functional.binary_cross_entropy_with_logits(
                model(x, edge_index, edge_weight), labels, pos_weight=pos_weight
            ).item()
            for (x, edge_index, edge_weight), labels, pos_weight in bundles
        ]
    return float(np.mean(values))


def _mean_pr10(model: GatModel, graphs: list[FeatureGraph]) -> float | None:
    hits = []
    model.eval()
    with torch.no_grad():
        for graph in graphs:
            relevant = {graph.ids[i] for i in np.flatnonzero(graph.labels)}
            if not relevant:
                continue
            scores = model(*graph_tensors(graph)).numpy()
            hits.append(pr_at_k(ranked_ids(graph, scores), relevant, 10))
    return float(np.mean(hits)) if hits else None


def train(
    graphs: list[FeatureGraph], config: GatConfig, protocol: TrainProtocol
) -> TrainResult:
    """Fit a freshly initialised model; returns it with the per-epoch log.

    Zero epochs is allowed and returns the untouched initialisation.
    """
    if not graphs:
        raise ConfigError("no training graphs")
    _check_train_graphs(graphs, config)

    torch.manual_seed(protocol.seed)
    model = GatModel(config)
    train_graphs, val_graphs = split_graphs(graphs, protocol.val_fraction, protocol.seed)

    bundles = [
        (
            graph_tensors(g),
            torch.from_numpy(g.labels).to(torch.float32),
            torch.tensor(_pos_weight(g.labels), dtype=torch.float32),
        )
        for g in train_graphs
    ]
    optimizer = torch.optim.Adam(
        model.parameters(), lr=protocol.learning_rate,
        weight_decay=protocol.weight_decay,
    )

    log: list[EpochStats] = []
    for epoch in range(1, protocol.epochs + 1):
        model.train()
        for (x, edge_index, edge_weight), labels, pos_weight in bundles:
            optimizer.zero_grad()
            out = model(x, edge_index, edge_weight)
            loss = torch.nn.functional.binary_cross_entropy_with_logits(
                out, labels, pos_weight=pos_weight
            )
            loss.backward()
            optimizer.step()
        log.append(
            EpochStats(
                epoch=epoch,
                loss=_mean_loss(model, bundles),
                val_pr10=_mean_pr10(model, val_graphs) if val_graphs else None,
            )
        )
    model.eval()
    return TrainResult(
        model=model,
        config=config,
        protocol=protocol,
        log=log,
        train_queries=[g.query_id for g in train_graphs],
        val_queries=[g.query_id for g in val_graphs],
    )


def tune(
    graphs: list[FeatureGraph],
    config: GatConfig,
    learning_rates: list[float],
    weight_decays: list[float],
    max_epochs: int,
    val_fraction: float = 0.2,
    seed: int = 0,
) -> tuple[TunedHyperparams, TrainResult]:
    """Grid over lr × L2; freeze the cell and epoch with the best val PR@10.

    A coarse ranking metric over a small holdout saturates early, so ties on
    validation PR@10 are broken by the lower training loss at that epoch
    (then grid order). Returns the frozen hyper-parameters together with the
    winning cell's full-length run.
    """
    if max_epochs < 1:
        raise ConfigError("tuning needs at least one epoch")
    if not val_fraction > 0:
        raise ConfigError("tuning needs a validation split")

    best: tuple[tuple[float, float], TunedHyperparams, TrainResult] | None = None
    for lr in learning_rates:
        for wd in weight_decays:
            protocol = TrainProtocol(
                learning_rate=lr, weight_decay=wd, epochs=max_epochs,
                val_fraction=val_fraction, stage="tune", seed=seed,
            )
            result = train(graphs, config, protocol)
            for entry in result.log:
                score = -1.0 if entry.val_pr10 is None else entry.val_pr10
                key = (score, -entry.loss)
                if best is None or key > best[0]:
                    frozen = TunedHyperparams(lr, wd, entry.epoch)
                    best = (key, frozen, result)
    assert best is not None
    return best[1], best[2]


def save_tuned(path, tuned: TunedHyperparams) -> None:
    Path(path).write_text(json.dumps(asdict(tuned), indent=2) + "\n", encoding="utf-8")


def load_tuned(path) -> TunedHyperparams:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return TunedHyperparams(
            learning_rate=float(raw["learning_rate"]),
            weight_decay=float(raw["weight_decay"]),
            epochs=int(raw["epochs"]),
        )
    except KeyError as exc:
        raise ConfigError(f"tuned hyper-parameter file {path} is missing {exc}") from exc


def write_training_log(path, result: TrainResult, digest: str) -> None:
    """JSONL: one meta line, then one line per epoch."""
    meta = {
        "meta": {
            "stage": result.protocol.stage,
            "learning_rate": result.protocol.learning_rate,
            "weight_decay": result.protocol.weight_decay,
            "epochs": result.protocol.epochs,
            "val_fraction": result.protocol.val_fraction,
            "seed": result.protocol.seed,
            "config_digest": digest,
            "train_queries": len(result.train_queries),
            "val_queries": len(result.val_queries),
        }
    }
    lines = [json.dumps(meta, ensure_ascii=False)]
    lines.extend(
        json.dumps(
            {"epoch": e.epoch, "loss": e.loss, "val_pr10": e.val_pr10},
            ensure_ascii=False,
        )
        for e in result.log
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def random_instance(seed: int, n: int = 4, dim: int = 2) -> FeatureGraph:
    """Small labelled graph for gradient checking and smoke tests."""
    rng = np.random.default_rng(seed)
    ids = [f"n{i}" for i in range(n)]
    edges = []
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < 0.5:
                edges.append([i, j, float(rng.uniform(0.1, 1.0))])
    labels = rng.integers(0, 2, size=n)
    if n >= 2:  # keep both classes present so the loss has signal
        labels[0], labels[1] = 1, 0
    return feature_graph_from_dict(
        {
            "query_id": f"rand{seed}",
            "mode": "train",
            "scheme": "union",
            "dim": dim,
            "feature_dim": 1 + 2 * dim,
            "ids": ids,
            "gcs": rng.uniform(0, 1, size=n).tolist(),
            "seed": rng.uniform(0, 1, size=n).tolist(),
            "query_embedding": rng.normal(0, 1, size=dim).tolist(),
            "embeddings": rng.normal(0, 1, size=(n, dim)).tolist(),
            "edges": edges,
            "labels": labels.tolist(),
        }
    )


def grad_check(model: GatModel, graph: FeatureGraph, step: float = 1e-5) -> float:
    """Max relative disagreement between autograd and central differences.

    Runs in float64 on a copy of the model (the caller's weights are left
    untouched). The relative error for one coordinate is
    ``|fd - analytic| / max(1e-6, |fd| + |analytic|)``, which reports 0 when
    both sides vanish.
    """
    if graph.labels is None:
        raise ConfigError("grad_check needs a labelled graph")
    model = copy.deepcopy(model).double()
    x, edge_index, edge_weight = graph_tensors(graph, dtype=torch.float64)
    labels = torch.from_numpy(graph.labels).to(torch.float64)
    pos_weight = torch.tensor(_pos_weight(graph.labels), dtype=torch.float64)

    def loss_value() -> torch.Tensor:
        out = model(x, edge_index, edge_weight)
        return torch.nn.functional.binary_cross_entropy_with_logits(
            out, labels, pos_weight=pos_weight
        )

    model.zero_grad()
    loss_value().backward()
    analytic = [p.grad.detach().clone().view(-1) for p in model.parameters()]

    worst = 0.0
    with torch.no_grad():
        for param, grads in zip(model.parameters(), analytic):
            flat = param.view(-1)
            for i in range(flat.numel()):
                original = flat[i].item()
                flat[i] = original + step
                upper = loss_value().item()
                flat[i] = original - step
                lower = loss_value().item()
                flat[i] = original
                fd = (upper - lower) / (2 * step)
                an = grads[i].item()
                rel = abs(fd - an) / max(1e-6, abs(fd) + abs(an))
                worst = max(worst, rel)
    return worst
