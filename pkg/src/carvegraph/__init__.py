"""Graph-based approximate nearest neighbor indexes built without search.

Points are carved into small overlapping leaves, each leaf proposes k-NN
edges from a dense distance matrix, a hash-bucketed reservoir per point keeps
a bounded, direction-diverse candidate set and a final diversity prune
produces the searchable graph.
"""

from ._backend import available as available_backends
from ._backend import name as backend_name
from ._backend import set_backend, use_backend
from .builder import BuildParams, BuildStats, build, build_knn_graph, build_with_stats
from .dataset import Dataset, LoadError, dissimilarity, gen_synthetic, load, save
from .graph import NavGraph, SearchParams, beam_search, brute_force_knn, choose_start, recall_at, search
from .hashprune import Reservoir, ReservoirArena, SketchTable, residual_hash
from .leafbuild import LeafParams, all_pairs, pick_knn
from .partition import LeafSet, PartitionParams, carve, leaders, merge_small
from .pruning import PruneParams, lazy_robust_prune, robust_prune

__version__ = "0.1.0"

__all__ = [
    "BuildParams", "BuildStats", "Dataset", "LeafParams", "LeafSet", "LoadError", "NavGraph",
    "PartitionParams", "PruneParams", "Reservoir", "ReservoirArena", "SearchParams", "SketchTable",
    "all_pairs", "available_backends", "backend_name", "beam_search", "brute_force_knn", "build",
    "build_knn_graph", "build_with_stats", "carve", "choose_start", "dissimilarity", "gen_synthetic",
    "lazy_robust_prune", "leaders", "load", "merge_small", "pick_knn", "recall_at", "residual_hash",
    "robust_prune", "save", "search", "set_backend", "use_backend",
]
