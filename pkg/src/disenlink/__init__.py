"""Disentangled multi-channel graph auto-encoders for link prediction."""

from .graphs import (EdgeSplit, Graph, adjacency_features, adjacency_targets,
                     attach_features, identity_features, load_edge_list,
                     make_graph, split_edges)
from .metrics import Metrics, auc_score, average_precision, evaluate_scores
from .training import TrainConfig, TrainedModel, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "EdgeSplit", "Graph", "Metrics", "TrainConfig", "TrainedModel",
    "adjacency_features", "adjacency_targets", "attach_features", "auc_score",
    "average_precision", "evaluate", "evaluate_scores", "identity_features",
    "load_edge_list", "make_graph", "split_edges", "train",
]
