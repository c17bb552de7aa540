"""Graph-attention reranker over exported node-feature files."""

from .errors import ConfigError, FeatureFileError, GatRankerError
from .model import (
    GatConfig,
    GatModel,
    N_GAT_LAYERS,
    graph_tensors,
    load_checkpoint,
    save_checkpoint,
    score_graph,
)
from .records import (
    FeatureGraph,
    feature_graph_from_dict,
    load_feature_file,
    write_scores,
)
from .training import (
    EpochStats,
    TrainProtocol,
    TrainResult,
    TunedHyperparams,
    grad_check,
    load_tuned,
    pr_at_k,
    random_instance,
    ranked_ids,
    run_digest,
    save_tuned,
    split_graphs,
    train,
    tune,
    write_training_log,
)

__all__ = [
    "ConfigError",
    "EpochStats",
    "FeatureFileError",
    "FeatureGraph",
    "GatConfig",
    "GatModel",
    "GatRankerError",
    "N_GAT_LAYERS",
    "TrainProtocol",
    "TrainResult",
    "TunedHyperparams",
    "feature_graph_from_dict",
    "grad_check",
    "graph_tensors",
    "load_checkpoint",
    "load_feature_file",
    "load_tuned",
    "pr_at_k",
    "random_instance",
    "ranked_ids",
    "run_digest",
    "save_checkpoint",
    "save_tuned",
    "score_graph",
    "split_graphs",
    "train",
    "tune",
    "write_scores",
    "write_training_log",
]
