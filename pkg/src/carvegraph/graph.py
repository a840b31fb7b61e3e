"""Bounded-degree navigation graph, beam search and exact-search utilities."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _backend
from .dataset import MIPS, Dataset, LoadError, pairwise_exact

MAGIC = b"PIPG"
VERSION = 1
EMPTY = 0xFFFFFFFF


@dataclass(eq=False)
class NavGraph:
    """Adjacency lists in a fixed-stride arena: row ``p`` holds ``degrees[p]``
    neighbor ids followed by ``0xFFFFFFFF`` padding."""

    adjacency: np.ndarray  # (n, R) uint32
    degrees: np.ndarray  # (n,) uint32

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def R(self) -> int:
        return self.adjacency.shape[1]

    @classmethod
    def from_lists(cls, lists, R: int | None = None) -> "NavGraph":
        lists = [list(map(int, nb)) for nb in lists]
        R = R if R is not None else max((len(nb) for nb in lists), default=0)
        adj = np.full((len(lists), max(R, 1)), EMPTY, dtype=np.uint32)
        deg = np.zeros(len(lists), dtype=np.uint32)
        for p, nb in enumerate(lists):
            if len(nb) > R:
                raise ValueError(f"point {p} has {len(nb)} neighbors > R={R}")
            adj[p, :len(nb)] = nb
            deg[p] = len(nb)
        return cls(adj, deg)

    def neighbors(self, p: int) -> np.ndarray:
        return self.adjacency[p, :self.degrees[p]]

    def edges(self):
        for p in range(self.n):
            for q in self.neighbors(p):
                yield p, int(q)

    @property
    def num_edges(self) -> int:
        return int(self.degrees.sum(dtype=np.int64))

    def average_degree(self) -> float:
        return self.num_edges / self.n if self.n else 0.0

    def validate(self) -> None:
        """Raise ``ValueError`` on self-loops, duplicates, bad ids or padding."""
        if np.any(self.degrees > self.R):
            raise ValueError("out-degree exceeds R")
        for p in range(self.n):
            nb = self.neighbors(p)
            if np.any(nb >= self.n):
                raise ValueError(f"point {p} has a neighbor id >= n")
            if np.any(nb == p):
                raise ValueError(f"point {p} has a self-loop")
            if len(np.unique(nb)) != len(nb):
                raise ValueError(f"point {p} has duplicate neighbors")
            if np.any(self.adjacency[p, self.degrees[p]:] != EMPTY):
                raise ValueError(f"point {p} has non-empty padding")

    def to_bytes(self) -> bytes:
        header = MAGIC + np.array([VERSION, self.n, self.R], dtype="<u4").tobytes()
        rows = np.empty((self.n, self.R + 1), dtype="<u4")
        rows[:, 0] = self.degrees
        rows[:, 1:] = self.adjacency
        return header + rows.tobytes()

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, raw: bytes) -> "NavGraph":
        if len(raw) < 16:
            raise LoadError(f"truncated graph header: {len(raw)} bytes at offset 0, need 16")
        if raw[:4] != MAGIC:
            raise LoadError(f"bad magic {raw[:4]!r} at offset 0")
        version, n, R = (int(v) for v in np.frombuffer(raw, dtype="<u4", count=3, offset=4))
        if version != VERSION:
            raise LoadError(f"unsupported graph version {version} at offset 4")
        expected = 16 + n * (R + 1) * 4
        if len(raw) != expected:
            raise LoadError(f"graph length mismatch: expected {expected} bytes, got {len(raw)}")
        rows = np.frombuffer(raw, dtype="<u4", offset=16).reshape(n, R + 1)
        return cls(np.ascontiguousarray(rows[:, 1:]), rows[:, 0].copy())

    @classmethod
    def load(cls, path) -> "NavGraph":
        return cls.from_bytes(Path(path).read_bytes())


@dataclass(frozen=True)
class SearchParams:
    L: int
    start: int = 0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"beam width must be >= 1, got {self.L}")


@dataclass
class SearchResult:
    ids: np.ndarray  # (nq, L) int64, -1 padded
    dists: np.ndarray  # (nq, L) float32, inf padded
    visited: np.ndarray  # (nq,)
    comparisons: np.ndarray  # (nq,)


def _queries_f32(dataset: Dataset, queries) -> np.ndarray:
    q = np.asarray(queries)
    if q.ndim == 1:
        q = q[None, :]
    if q.shape[1] != dataset.d:
        raise ValueError(f"query dimension {q.shape[1]} != dataset dimension {dataset.d}")
    return np.ascontiguousarray(q, dtype=np.float32)


def search(graph: NavGraph, dataset: Dataset, queries, L: int, start,
           threads: int = 1) -> SearchResult:
    """Beam search every query with beam width ``L``.

    ``start`` is one entry point for all queries or an array with one per query.
    """
    if graph.n != dataset.n:
        raise ValueError(f"graph has {graph.n} points, dataset has {dataset.n}")
    if L < 1:
        raise ValueError("beam width must be >= 1")
    q = _queries_f32(dataset, queries)
    starts = np.broadcast_to(np.asarray(start, dtype=np.int64), (len(q),))
    if len(starts) and (starts.min() < 0 or starts.max() >= graph.n):
        raise ValueError(f"start {start} out of range")
    ids, dists, visited, cmps = _backend.kernels.beam_search_batch(
        np.ascontiguousarray(graph.adjacency, dtype=np.uint32),
        np.ascontiguousarray(graph.degrees, dtype=np.uint32),
        dataset.f32, int(dataset.measure == MIPS), q, int(L),
        np.ascontiguousarray(starts, dtype=np.uint32), int(threads),
    )
    return SearchResult(ids, dists, visited, cmps)


def beam_search(graph: NavGraph, dataset: Dataset, query, params: SearchParams):
    """Single query. Returns ``(ids, dists, visited, comparisons)``."""
    res = search(graph, dataset, query, params.L, params.start)
    keep = res.ids[0] >= 0
    return res.ids[0][keep], res.dists[0][keep], int(res.visited[0]), int(res.comparisons[0])


def choose_start(dataset: Dataset, sample_size: int = 10000, seed: int = 0) -> int:
    """Approximate medoid: the sampled point closest to the sample mean
    (largest inner product with it under MIPS). Ties go to the smaller id."""
    if sample_size < 1:
        raise ValueError("sample_size must be >= 1")
    n = dataset.n
    if sample_size >= n:
        sample = np.arange(n)
    else:
        sample = np.sort(np.random.default_rng([seed, 0x57A27]).choice(n, sample_size, replace=False))
    x = dataset.data[sample].astype(np.float64)
    mean = x.mean(axis=0)
    score = pairwise_exact(x, mean[None, :], dataset.measure)[:, 0]
    return int(sample[np.argmin(score)])


def _exact_rows(x64: np.ndarray, q: np.ndarray, measure: str) -> np.ndarray:
    if measure == MIPS:
        return -(x64 @ q)
    diff = x64 - q
    return np.einsum("ij,ij->i", diff, diff)


def brute_force_knn(dataset: Dataset, queries, k: int, block: int = 256):
    """Exact k nearest by full scan. Returns ``(ids (nq,k) int64, dists (nq,k) float32)``.

    A float64 Gram product shortlists everything within rounding distance of
    the k-th candidate; the shortlist is then rescored by direct differences
    (exact for integer data) and ordered by (dissimilarity, id).
    """
    if not 1 <= k <= dataset.n:
        raise ValueError(f"k must be in [1, n={dataset.n}], got {k}")
    q = np.asarray(queries)
    if q.ndim == 1:
        q = q[None, :]
    if q.shape[1] != dataset.d:
        raise ValueError(f"query dimension {q.shape[1]} != dataset dimension {dataset.d}")
    x64 = dataset.data.astype(np.float64)
    xsq = np.einsum("ij,ij->i", x64, x64)
    out_i = np.empty((len(q), k), dtype=np.int64)
    out_d = np.empty((len(q), k), dtype=np.float32)
    eps = 64 * np.finfo(np.float64).eps
    for s in range(0, len(q), block):
        qb = q[s:s + block].astype(np.float64)
        qsq = np.einsum("ij,ij->i", qb, qb)
        approx = qb @ x64.T
        if dataset.measure == MIPS:
            np.negative(approx, out=approx)
            tol = eps * np.sqrt(qsq * xsq.max()) + eps
        else:
            approx *= -2
            approx += qsq[:, None]
            approx += xsq[None, :]
            tol = eps * (qsq + xsq.max()) + eps
        if k < dataset.n:
            kth = np.partition(approx, k - 1, axis=1)[:, k - 1]
        else:
            kth = approx.max(axis=1)
        for r in range(len(qb)):
            cand = np.flatnonzero(approx[r] <= kth[r] + 2 * tol[r])
            exact = _exact_rows(x64[cand], qb[r], dataset.measure)
            order = np.lexsort((cand, exact))[:k]
            out_i[s + r] = cand[order]
            out_d[s + r] = exact[order]
    return out_i, out_d


def recall_at(results, truth, k: int, k_prime: int | None = None) -> float:
    """Mean over queries of ``|truth[:k] & results[:k_prime]| / k``."""
    k_prime = k if k_prime is None else k_prime
    results = np.asarray(results)
    truth = np.asarray(truth)
    if len(results) != len(truth):
        raise ValueError(f"{len(results)} result rows vs {len(truth)} ground-truth rows")
    if truth.shape[1] < k:
        raise ValueError(f"ground truth has {truth.shape[1]} columns, need k={k}")
    if len(truth) == 0:
        return 0.0
    hits = 0
    for res, tru in zip(results, truth):
        got = set(int(x) for x in res[:k_prime] if x >= 0)
        hits += len(got.intersection(int(x) for x in tru[:k]))
    return hits / (k * len(truth))
