"""Learned binary hashing with dual semantic regression, affinity-graph
similarity preserving and class-structure quantization, plus Hamming-space
retrieval metrics."""

__version__ = "0.1.0"

from .dataio import Dataset, build_batch_graph, build_dual_labels, load_dataset, make_synthetic_clusters
from .encoder import encode_binary
from .estimator import DSAHashing
from .retrieval import CodeDatabase, MetricsReport, evaluate, evaluate_asymmetric, evaluate_symmetric
from .trainer import TrainConfig, TrainState, train

__all__ = [
    "CodeDatabase",
    "DSAHashing",
    "Dataset",
    "MetricsReport",
    "TrainConfig",
    "TrainState",
    "build_batch_graph",
    "build_dual_labels",
    "encode_binary",
    "evaluate",
    "evaluate_asymmetric",
    "evaluate_symmetric",
    "load_dataset",
    "make_synthetic_clusters",
    "train",
]
