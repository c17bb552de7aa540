"""The graph-attention ranking model.

Five GATv2-style attention layers followed by two fully connected layers;
one scalar score per node. Per layer and head, the attention logit for a
message from node ``j`` into node ``i`` is

    e_ij = a · leaky_relu(W_src x_j + W_dst x_i)

softmax-normalised over the incoming edges of ``i`` (a self-loop is always
added so isolated nodes score themselves), and the aggregated message is the
attention-weighted sum of the ``W_src x_j``. Heads are averaged, so the
hidden width is constant through the stack. Optionally the supplied edge
weights enter the logit through a learned per-head coefficient
(``use_edge_weights``); the coefficient starts at zero, i.e. a freshly
initialised model is a pure GATv2 regardless of the flag.

With ``ablation="mlp"`` message passing is disabled: each attention layer
degenerates to its source-side linear transform and the network becomes a
per-node MLP. The edge tensors are never read on that path, so scores are
bit-identical whether or not edges are present.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ConfigError
from .records import FeatureGraph

N_GAT_LAYERS = 5
ABLATIONS = (None, "mlp")
_NEGATIVE_SLOPE = 0.2


@dataclass(frozen=True)
class GatConfig:
    input_dim: int
    width: int = 64
    heads: int = 4
    ablation: str | None = None
    use_edge_weights: bool = False

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigError("input_dim must be at least 1")
        if self.width < 1 or self.heads < 1:
            raise ConfigError("width and heads must be at least 1")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def segment_softmax(logits: torch.Tensor, segment: torch.Tensor, n: int) -> torch.Tensor:
    """Softmax of ``logits`` (E, H) grouped by the destination ids in ``segment``."""
    index = segment.unsqueeze(1).expand_as(logits)
    peak = logits.new_full((n, logits.size(1)), -torch.inf)
    # The per-segment max only stabilises the exponentials; softmax is shift
    # invariant, so it is detached from the graph.
    peak = peak.scatter_reduce(0, index, logits.detach(), "amax", include_self=True)
    shifted = (logits - peak[segment]).exp()
    totals = shifted.new_zeros((n, logits.size(1))).index_add(0, segment, shifted)
    return shifted / totals[segment]


class GatLayer(nn.Module):
    def __init__(self, in_dim: int, out_dim: int, heads: int,
                 use_edge_weights: bool = False):
        super().__init__()
        self.heads = heads
        self.out_dim = out_dim
        self.lin_src = nn.Linear(in_dim, heads * out_dim)
        self.lin_dst = nn.Linear(in_dim, heads * out_dim)
        self.att = nn.Parameter(torch.empty(heads, out_dim))
        nn.init.xavier_uniform_(self.att)
        if use_edge_weights:
            self.edge_coef = nn.Parameter(torch.zeros(heads))
        else:
            self.edge_coef = None

    def forward(self, x: torch.Tensor, edge_index: torch.Tensor,
                edge_weight: torch.Tensor, message_passing: bool = True) -> torch.Tensor:
        n = x.size(0)
        h_src = self.lin_src(x).view(n, self.heads, self.out_dim)
        if not message_passing:
            return h_src.mean(dim=1)
        h_dst = self.lin_dst(x).view(n, self.heads, self.out_dim)

        loop = torch.arange(n, device=x.device)
        src = torch.cat([edge_index[0], loop])
        dst = torch.cat([edge_index[1], loop])
        logits = (
            torch.nn.functional.leaky_relu(h_src[src] + h_dst[dst], _NEGATIVE_SLOPE)
            * self.att
        ).sum(-1)
        if self.edge_coef is not None:
            weight = torch.cat([edge_weight, edge_weight.new_ones(n)])
            logits = logits + self.edge_coef * weight.unsqueeze(1)
        alpha = segment_softmax(logits, dst, n)
        messages = alpha.unsqueeze(-1) * h_src[src]
        out = messages.new_zeros((n, self.heads, self.out_dim))
        return out.index_add(0, dst, messages).mean(dim=1)


class GatModel(nn.Module):
    """Node scorer: N_GAT_LAYERS attention layers, then two linear layers."""

    def __init__(self, config: GatConfig):
        super().__init__()
        self.config = config
        dims = [config.input_dim] + [config.width] * N_GAT_LAYERS
        self.gat_layers = nn.ModuleList(
            GatLayer(dims[i], dims[i + 1], config.heads, config.use_edge_weights)
            for i in range(N_GAT_LAYERS)
        )
        self.fc1 = nn.Linear(config.width, config.width)
        self.fc2 = nn.Linear(config.width, 1)

    def forward(self, x: torch.Tensor, edge_index: torch.Tensor,
                edge_weight: torch.Tensor) -> torch.Tensor:
        passing = self.config.ablation != "mlp"
        h = x
        for layer in self.gat_layers:
            h = torch.nn.functional.elu(
                layer(h, edge_index, edge_weight, message_passing=passing)
            )
        h = torch.nn.functional.elu(self.fc1(h))
        return self.fc2(h).squeeze(-1)


def graph_tensors(graph: FeatureGraph, dtype=torch.float32):
    """FeatureGraph arrays as torch tensors ready for the forward pass."""
    return (
        torch.from_numpy(graph.x).to(dtype),
        torch.from_numpy(graph.edge_index),
        torch.from_numpy(graph.edge_weight).to(dtype),
    )


def score_graph(model: GatModel, graph: FeatureGraph) -> np.ndarray:
    """Scores for one graph's candidates, in candidate order."""
    expected = model.config.input_dim
    if graph.feature_dim != expected:
        raise ConfigError(
            f"feature dim mismatch for query {graph.query_id!r}: "
            f"model expects {expected}, file has {graph.feature_dim}"
        )
    model.eval()
    with torch.no_grad():
        x, edge_index, edge_weight = graph_tensors(graph)
        scores = model(x, edge_index, edge_weight)
    return scores.numpy()


def save_checkpoint(model: GatModel, path, config_digest: str | None = None) -> Path:
    """Write weights plus the JSON sidecar describing the architecture.

    ``config_digest`` defaults to the model config's own digest; the training
    entry point passes a digest over config and protocol together.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), path)
    cfg = model.config
    sidecar = {
        "input_dim": cfg.input_dim,
        "width": cfg.width,
        "heads": cfg.heads,
        "ablation": cfg.ablation,
        "edge_weights": cfg.use_edge_weights,
        "config_digest": config_digest or cfg.digest(),
    }
    side_path = path.with_name(path.name + ".json")
    side_path.write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    return side_path


def load_checkpoint(path) -> GatModel:
    path = Path(path)
    side_path = path.with_name(path.name + ".json")
    if not side_path.exists():
        raise ConfigError(f"checkpoint sidecar {side_path} not found")
    sidecar = json.loads(side_path.read_text(encoding="utf-8"))
    config = GatConfig(
        input_dim=int(sidecar["input_dim"]),
        width=int(sidecar["width"]),
        heads=int(sidecar["heads"]),
        ablation=sidecar.get("ablation"),
        use_edge_weights=bool(sidecar.get("edge_weights", False)),
    )
    model = GatModel(config)
    model.load_state_dict(torch.load(path, weights_only=True))
    model.eval()
    return model
