"""Index construction: carve, pick in-leaf neighbors, stream into reservoirs,
final prune."""

from __future__ import annotations

import dataclasses
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from ._fallback import rank_key
from .dataset import MIPS, Dataset, available_threads
from .graph import NavGraph, search
from .hashprune import DEFAULT_BITS, DEFAULT_CAPACITY, MAX_BITS, ReservoirArena, SketchTable, to_bf16
from .leafbuild import LeafParams, all_pairs, pick_knn
from .partition import LeafSet, PartitionParams, carve
from .pruning import PruneParams

log = logging.getLogger(__name__)

_EDGE_BATCH = 1 << 20


@dataclass(frozen=True)
class BuildParams:
    partition: PartitionParams = field(default_factory=PartitionParams)
    leaf: LeafParams = field(default_factory=LeafParams)
    hash_bits: int = DEFAULT_BITS
    reservoir: int = DEFAULT_CAPACITY
    prune: PruneParams = field(default_factory=PruneParams)
    final_prune: bool = True
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.hash_bits <= MAX_BITS:
            raise ValueError(f"hash_bits must be in [1, {MAX_BITS}], got {self.hash_bits}")
        if self.reservoir < 1:
            raise ValueError("reservoir capacity must be >= 1")

    def partition_params(self) -> PartitionParams:
        return dataclasses.replace(self.partition, seed=self.seed)


@dataclass
class BuildStats:
    partition_seconds: float = 0.0
    leaf_build_seconds: float = 0.0
    final_prune_seconds: float = 0.0
    total_seconds: float = 0.0
    leaves: int = 0
    instance_count: int = 0
    max_depth: int = 0
    candidates_streamed: int = 0
    reservoir_rejection_rate: float = 0.0
    reservoir_payload_bytes: int = 0
    average_degree: float = 0.0
    max_degree: int = 0
    backend: str = ""
    threads: int = 1

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def phase_fraction(self) -> float:
        phases = self.partition_seconds + self.leaf_build_seconds + self.final_prune_seconds
        return phases / self.total_seconds if self.total_seconds > 0 else 1.0


def leaf_edges(dataset: Dataset, ids: np.ndarray, leaf: LeafParams):
    """Global ``(src, dst, dist)`` candidate edges picked inside one leaf."""
    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) < 2:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, np.empty(0, dtype=np.float32)
    block = all_pairs(dataset, ids)
    pairs = pick_knn(block, leaf.k, leaf.pick_mode, gids=ids)
    s, d = pairs[:, 0], pairs[:, 1]
    return ids[s], ids[d], block[s, d].astype(np.float32)


def _stream_leaves(dataset, leafset, order, params, sketch, arena, threads):
    def work(i):
        return leaf_edges(dataset, leafset.leaves[i], params.leaf)

    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        results = pool.map(work, order) if pool else map(work, order)
        batch, size = [], 0
        for src, dst, dist in results:
            batch.append((src, dst, dist))
            size += len(src)
            if size >= _EDGE_BATCH:
                _flush(batch, sketch, arena, threads)
                batch, size = [], 0
        _flush(batch, sketch, arena, threads)
    finally:
        if pool:
            pool.shutdown()


def _flush(batch, sketch, arena, threads):
    if not batch:
        return
    src = np.concatenate([b[0] for b in batch]).astype(np.uint32)
    dst = np.concatenate([b[1] for b in batch]).astype(np.uint32)
    dist = np.concatenate([b[2] for b in batch])
    arena.stream(src, dst, sketch.hashes(src, dst), to_bf16(dist), threads)


def _truncated_reservoirs(arena: ReservoirArena, R: int):
    """Reservoir contents sorted by (bf16 dist, id), cut to ``R``."""
    n, cap = arena.slots.shape
    key = (rank_key(arena.slots["dist"]) << np.uint64(32)) | arena.slots["id"].astype(np.uint64)
    key[np.arange(cap)[None, :] >= arena.counts[:, None]] = np.iinfo(np.uint64).max
    order = np.argsort(key, axis=1, kind="stable")[:, :R]
    deg = np.minimum(arena.counts.astype(np.uint32), R)
    adj = np.take_along_axis(arena.slots["id"], order, axis=1).astype(np.uint32)
    if adj.shape[1] < R:
        adj = np.pad(adj, ((0, 0), (0, R - adj.shape[1])))
    adj[np.arange(R)[None, :] >= deg[:, None]] = 0xFFFFFFFF
    return np.ascontiguousarray(adj), deg


def build_with_stats(dataset: Dataset, params: BuildParams | None = None, threads: int | None = None,
                     leaf_order=None) -> tuple[NavGraph, BuildStats]:
    """Build the index and report per-phase timings and counters.

    ``leaf_order`` permutes the order in which leaves are streamed; the
    result does not depend on it.
    """
    params = params or BuildParams()
    threads = threads or available_threads()
    if dataset.n < 2:
        raise ValueError("need at least 2 points to build a graph")
    stats = BuildStats(backend=_backend.name(), threads=threads)
    t_start = time.perf_counter()

    t = time.perf_counter()
    leafset: LeafSet = carve(dataset, params.partition_params(), threads=threads)
    stats.partition_seconds = time.perf_counter() - t
    stats.leaves = len(leafset)
    stats.instance_count = leafset.instance_count
    stats.max_depth = leafset.max_depth
    log.info("partition: %d leaves, %d instances, depth %d (%.2fs)",
             stats.leaves, stats.instance_count, stats.max_depth, stats.partition_seconds)

    t = time.perf_counter()
    sketch = SketchTable.build(dataset, params.hash_bits, params.seed)
    arena = ReservoirArena(dataset.n, params.reservoir)
    order = range(len(leafset)) if leaf_order is None else [int(i) for i in leaf_order]
    _stream_leaves(dataset, leafset, order, params, sketch, arena, threads)
    stats.leaf_build_seconds = time.perf_counter() - t
    stats.candidates_streamed = arena.streamed
    stats.reservoir_rejection_rate = arena.rejection_rate()
    stats.reservoir_payload_bytes = arena.payload_nbytes
    log.info("leaf build: %d candidates streamed (%.2fs)", arena.streamed, stats.leaf_build_seconds)

    t = time.perf_counter()
    R = params.prune.R
    if params.final_prune:
        adj, deg = _backend.kernels.prune_all(
            dataset.f32, int(dataset.measure == MIPS), arena.slots, arena.counts,
            float(params.prune.alpha), bool(np.isfinite(params.prune.alpha)), int(R), int(threads),
        )
    else:
        adj, deg = _truncated_reservoirs(arena, R)
    graph = NavGraph(adj, deg)
    stats.final_prune_seconds = time.perf_counter() - t

    stats.total_seconds = time.perf_counter() - t_start
    stats.average_degree = graph.average_degree()
    stats.max_degree = int(deg.max()) if len(deg) else 0
    log.info("final prune: average degree %.2f (%.2fs)", stats.average_degree, stats.final_prune_seconds)
    return graph, stats


def build(dataset: Dataset, params: BuildParams | None = None, threads: int | None = None) -> NavGraph:
    return build_with_stats(dataset, params, threads)[0]


def build_knn_graph(dataset: Dataset, params: BuildParams | None, k: int, L: int,
                    threads: int | None = None, graph: NavGraph | None = None):
    """Approximate k-NN graph: every point searched on the index, itself excluded.

    Each point's search starts at the point itself, so the result does not
    depend on the graph being connected.

    Returns ``(ids, dists)`` of shape ``(n, k)``; rows are -1 padded when the
    beam held fewer than ``k`` other points.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if L < k:
        raise ValueError(f"beam width L={L} cannot hold k={k} results")
    params = params or BuildParams()
    threads = threads or available_threads()
    if graph is None:
        graph = build(dataset, params, threads)
    res = search(graph, dataset, dataset.f32, L, np.arange(dataset.n), threads)
    own = res.ids == np.arange(dataset.n)[:, None]
    ids = np.full((dataset.n, k), -1, dtype=np.int64)
    dists = np.full((dataset.n, k), np.inf, dtype=np.float32)
    for p in range(dataset.n):
        keep = (~own[p]) & (res.ids[p] >= 0)
        row_i = res.ids[p][keep][:k]
        ids[p, :len(row_i)] = row_i
        dists[p, :len(row_i)] = res.dists[p][keep][:k]
    return ids, dists
