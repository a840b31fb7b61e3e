"""Overlapping partitioning by recursive randomized ball carving.

A subproblem larger than ``cmax`` samples random leaders, sends each point to
its ``fanout[depth]`` nearest leaders, merges undersized groups and recurses.
All randomness of a subproblem is derived from ``(seed, replica, path)``, so
the leaves do not depend on how subproblems are scheduled.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import MIPS, Dataset

log = logging.getLogger(__name__)

MAX_DEPTH = 64
_ROW_CHUNK = 8192


@dataclass(frozen=True)
class PartitionParams:
    cmax: int = 1024
    cmin: int = 100
    sample_frac: float = 0.01
    leader_cap: int = 1000
    fanout: tuple[int, ...] = (10, 3)
    replicas: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "fanout", tuple(int(f) for f in self.fanout))
        if not 1 <= self.cmin < self.cmax:
            raise ValueError(f"need 1 <= cmin < cmax, got cmin={self.cmin}, cmax={self.cmax}")
        if not 0 < self.sample_frac <= 1:
            raise ValueError(f"sample_frac must be in (0, 1], got {self.sample_frac}")
        if self.leader_cap < 2:
            raise ValueError("leader_cap must be >= 2")
        if any(f < 1 for f in self.fanout):
            raise ValueError("fanout factors must be >= 1")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")

    def fanout_at(self, depth: int) -> int:
        return self.fanout[depth] if depth < len(self.fanout) else 1

    @property
    def max_multiplicity(self) -> int:
        return math.prod(self.fanout) * self.replicas


@dataclass
class LeafSet:
    leaves: list[np.ndarray]
    max_depth: int = 0
    fallback_splits: int = 0
    paths: list[tuple] = field(default_factory=list, repr=False)

    @property
    def instance_count(self) -> int:
        return int(sum(len(leaf) for leaf in self.leaves))

    def __len__(self):
        return len(self.leaves)

    def memberships(self, n: int) -> np.ndarray:
        """How many leaves each point belongs to."""
        if not self.leaves:
            return np.zeros(n, dtype=np.int64)
        return np.bincount(np.concatenate(self.leaves), minlength=n)

    def dump(self, path) -> None:
        """Write ``leaf_index: id id ...`` lines."""
        with open(path, "w") as f:
            for i, leaf in enumerate(self.leaves):
                f.write(f"{i}: {' '.join(map(str, leaf.tolist()))}\n")


def _rng(seed: int, replica: int, path: tuple) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, replica, len(path), *path])


def leaders(ids: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` distinct ids drawn uniformly without replacement."""
    ids = np.asarray(ids)
    if not 1 <= count <= len(ids):
        raise ValueError(f"cannot draw {count} leaders from {len(ids)} points")
    return rng.choice(ids, size=count, replace=False)


def merge_small(groups: list[np.ndarray], cmin: int, cmax: int,
                rng: np.random.Generator) -> list[np.ndarray]:
    """Randomly merge groups below ``cmin`` without exceeding ``cmax``.

    Sizes are bounded by the sum of the parts (overlapping groups shrink when
    merged, never grow). A group stays undersized only when every merge
    partner would overflow ``cmax``, or when it is the only group left.
    Undersized partners are preferred.
    """
    groups = [np.asarray(g) for g in groups]
    order = rng.permutation(len(groups))
    pool = [groups[i] for i in order]
    while True:
        small = [i for i, g in enumerate(pool) if len(g) < cmin]
        merged = False
        for i in small:
            gi = len(pool[i])
            partners = [j for j in range(len(pool)) if j != i and gi + len(pool[j]) <= cmax]
            if not partners:
                continue
            small_partners = [j for j in partners if len(pool[j]) < cmin]
            j = (small_partners or partners)[0]
            union = np.union1d(pool[i], pool[j])
            lo, hi = min(i, j), max(i, j)
            pool[lo] = union
            del pool[hi]
            merged = True
            break
        if not merged:
            return pool


def _nearest_leaders(dataset: Dataset, ids: np.ndarray, lead: np.ndarray, f: int) -> np.ndarray:
    """``(len(ids), f)`` indices into ``lead`` (ties to the lower index)."""
    x_lead = dataset.f32[lead]
    out = np.empty((len(ids), f), dtype=np.int64)
    if dataset.measure == MIPS:
        bias = None
    else:
        bias = dataset.sq_norms[lead]
    for s in range(0, len(ids), _ROW_CHUNK):
        rows = ids[s:s + _ROW_CHUNK]
        score = dataset.f32[rows] @ x_lead.T
        if bias is None:
            np.negative(score, out=score)
        else:
            score *= -2
            score += bias
        if f == 1:
            out[s:s + len(rows), 0] = np.argmin(score, axis=1)
            continue
        part = np.argpartition(score, f - 1, axis=1)[:, :f]
        r = np.arange(len(rows))[:, None]
        thr = score[r, part].max(axis=1)
        ties = np.flatnonzero((score <= thr[:, None]).sum(axis=1) > f)
        for t in ties:
            part[t] = np.argsort(score[t], kind="stable")[:f]
        out[s:s + len(rows)] = part
    return out


def _split(dataset: Dataset, params: PartitionParams, replica: int, path: tuple,
           ids: np.ndarray, depth: int):
    """One carving step. Returns ``(children, fell_back)``."""
    rng = _rng(params.seed, replica, path)
    n = len(ids)
    if depth >= MAX_DEPTH:
        log.warning("carving depth limit %d reached on %d points; splitting randomly", MAX_DEPTH, n)
        perm = rng.permutation(ids)
        return [np.sort(perm[i:i + params.cmax]) for i in range(0, n, params.cmax)], True
    count = max(2, min(math.ceil(params.sample_frac * n), params.leader_cap, n))
    lead = np.sort(leaders(ids, count, rng))
    f = min(params.fanout_at(depth), count)
    near = _nearest_leaders(dataset, ids, lead, f)
    owner = near.reshape(-1)
    member = np.repeat(ids, f)
    order = np.argsort(owner, kind="stable")
    owner, member = owner[order], member[order]
    cuts = np.flatnonzero(np.diff(owner)) + 1
    groups = [np.sort(g) for g in np.split(member, cuts)]
    return merge_small(groups, params.cmin, params.cmax, rng), False


def carve(dataset: Dataset, params: PartitionParams | None = None, threads: int = 1) -> LeafSet:
    """Overlapping leaves of at most ``cmax`` ids, unioned over replicas."""
    params = params or PartitionParams()
    n = dataset.n
    done: list[tuple[tuple, np.ndarray]] = []
    max_depth = 0
    fallbacks = 0
    frontier = [((r,), np.arange(n, dtype=np.int64), 0) for r in range(params.replicas)]
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    try:
        while frontier:
            todo = []
            for path, ids, depth in frontier:
                max_depth = max(max_depth, depth)
                if len(ids) <= params.cmax:
                    done.append((path, ids))
                else:
                    todo.append((path, ids, depth))
            work = [(dataset, params, p[0], p[1:], ids, depth) for p, ids, depth in todo]
            results = pool.map(lambda a: _split(*a), work) if pool else (_split(*a) for a in work)
            frontier = []
            for (path, _, depth), (children, fell_back) in zip(todo, results):
                fallbacks += fell_back
                frontier.extend((path + (i,), child, depth + 1) for i, child in enumerate(children))
    finally:
        if pool:
            pool.shutdown()
    done.sort(key=lambda t: t[0])
    return LeafSet(
        leaves=[ids for _, ids in done],
        max_depth=max_depth,
        fallback_splits=fallbacks,
        paths=[p for p, _ in done],
    )
