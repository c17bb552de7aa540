"""Link-aware retrieval: hybrid base retrieval plus candidate-graph reranking."""

from .corpus import Corpus, DataObject, Query, load_corpus, load_qrels, load_queries
from .errors import ConfigError, GrapherError, ParseError, ValidationError
from .evaluation import EvalConfig, evaluate_run, perfect_recall_at_k
from .graphs import CandidateGraph, build
from .rerank import RerankConfig, gcs_rank, gcs_smooth, ppr_rank, ppr_smooth
from .retriever import RetrieverConfig, build_index, hybrid_retrieve

__version__ = "0.1.0"

__all__ = [
    "CandidateGraph",
    "ConfigError",
    "Corpus",
    "DataObject",
    "EvalConfig",
    "GrapherError",
    "ParseError",
    "Query",
    "RerankConfig",
    "RetrieverConfig",
    "ValidationError",
    "build",
    "build_index",
    "evaluate_run",
    "gcs_rank",
    "gcs_smooth",
    "hybrid_retrieve",
    "load_corpus",
    "load_qrels",
    "load_queries",
    "perfect_recall_at_k",
    "ppr_rank",
    "ppr_smooth",
]
