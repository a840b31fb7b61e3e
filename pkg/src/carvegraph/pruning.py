"""Diversity pruning of a point's candidate list (eager and lazy forms).

The alpha test runs on raw dissimilarities. For squared-L2 data an alpha on
squared distances is roughly alpha**2 on Euclidean distances. With MIPS the
same test is applied to negative inner products, which is a heuristic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dataset import Dataset

DEFAULT_ALPHA = 1.2
DEFAULT_DEGREE = 64


@dataclass(frozen=True)
class PruneParams:
    alpha: float = DEFAULT_ALPHA
    R: int = DEFAULT_DEGREE

    def __post_init__(self):
        if not self.alpha >= 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")
        if self.R < 1:
            raise ValueError(f"R must be >= 1, got {self.R}")


def _pair_fn(space) -> Callable[[int, int], float]:
    if isinstance(space, Dataset):
        x = space.f32
        if space.measure == "mips":
            return lambda y, z: -float(np.dot(x[y], x[z]))

        def sq(y, z):
            diff = x[y] - x[z]
            return float(np.dot(diff, diff))

        return sq
    return space


def _covers(alpha: float, d_yz: float, d_pz: float) -> bool:
    if math.isinf(alpha):
        return False
    return alpha * d_yz < d_pz


def robust_prune(p: int, candidates: Sequence[tuple[int, float]], params: PruneParams,
                 space) -> list[int]:
    """Greedy diverse selection: take the nearest, drop what it covers, repeat.

    ``space`` is a Dataset or a callable ``(y, z) -> dissimilarity``.
    """
    dist = _pair_fn(space)
    pool = sorted(((float(d), int(c)) for c, d in candidates if c != p), key=lambda t: (t[0], t[1]))
    out: list[int] = []
    while pool and len(out) < params.R:
        d_py, y = pool.pop(0)
        out.append(y)
        pool = [(d_pz, z) for d_pz, z in pool if not _covers(params.alpha, dist(y, z), d_pz)]
    return out


def lazy_robust_prune(p: int, candidates: Sequence[tuple[int, float]], params: PruneParams,
                      space) -> list[int]:
    """Same output as :func:`robust_prune`, checking each candidate only against
    already-admitted neighbors."""
    dist = _pair_fn(space)
    ordered = sorted(((float(d), int(c)) for c, d in candidates if c != p), key=lambda t: (t[0], t[1]))
    out: list[int] = []
    for d_pc, c in ordered:
        if len(out) >= params.R:
            break
        if any(_covers(params.alpha, dist(y, c), d_pc) for y in out):
            continue
        out.append(c)
    return out
