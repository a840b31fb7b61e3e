"""Per-leaf distance matrices and k-nearest-neighbor candidate edges."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .dataset import MIPS, Dataset

PICK_MODES = ("directed", "inverted", "bidirected")
BLOCK = 64


@dataclass(frozen=True)
class LeafParams:
    k: int = 2
    pick_mode: str = "bidirected"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.pick_mode not in PICK_MODES:
            raise ValueError(f"pick_mode must be one of {PICK_MODES}, got {self.pick_mode!r}")


def gram_blocked(x: np.ndarray, block: int = BLOCK) -> np.ndarray:
    """``x @ x.T`` from upper-triangular ``block x block`` tiles, mirrored.

    The result is exactly symmetric.
    """
    m = x.shape[0]
    g = np.empty((m, m), dtype=x.dtype)
    for i in range(0, m, block):
        b = min(block, m - i)
        # one product per tile row covers all tiles at or right of the diagonal
        t = x[i:i + b] @ x[i:].T
        g[i:i + b, i:] = t
        g[i + b:, i:i + b] = t[:, b:].T
        lo = np.tril_indices(b, -1)
        g[i + lo[0], i + lo[1]] = t[lo[1], lo[0]]
    return g


def all_pairs(dataset: Dataset, leaf_ids, block: int = BLOCK) -> np.ndarray:
    """Pairwise dissimilarities within a leaf.

    Squared-L2 goes through ``|x|^2 + |y|^2 - 2<x,y>`` with negatives clamped
    to zero and an exact zero diagonal. float32 data gives a float32 block;
    uint8/int8 data is computed in float64, which is exact for these inputs.
    """
    ids = np.asarray(leaf_ids, dtype=np.int64)
    if dataset.is_integer:
        x = dataset.data[ids].astype(np.float64)
        norms = np.einsum("ij,ij->i", x, x)
    else:
        x = dataset.f32[ids]
        norms = dataset.sq_norms[ids]
    g = gram_blocked(x, block)
    if dataset.measure == MIPS:
        np.negative(g, out=g)
        return g
    g *= -2
    # one commutative sum per entry keeps the block exactly symmetric
    g += norms[:, None] + norms[None, :]
    np.maximum(g, 0, out=g)
    np.fill_diagonal(g, 0)
    return g


def nearest_in_leaf(block: np.ndarray, k: int, gids=None) -> np.ndarray:
    """``(m, min(k, m-1))`` leaf positions of each row's nearest co-members,
    ordered by distance and then by global id."""
    m = block.shape[0]
    if gids is None:
        gids = np.arange(m, dtype=np.uint32)
    block = np.ascontiguousarray(block)
    if block.dtype not in (np.float32, np.float64):
        block = block.astype(np.float64)
    return _backend.kernels.pick_knn(block, np.ascontiguousarray(gids, dtype=np.uint32), int(k))


def pick_knn(block: np.ndarray, k: int, mode: str = "bidirected", gids=None) -> np.ndarray:
    """Candidate edges ``(src, dst)`` in leaf positions, shape ``(E, 2)``.

    ``directed`` links each point to its k nearest, ``inverted`` reverses
    those links and ``bidirected`` is their deduplicated union.
    """
    if mode not in PICK_MODES:
        raise ValueError(f"unknown pick mode {mode!r}")
    m = block.shape[0]
    nbr = nearest_in_leaf(block, k, gids)
    kk = nbr.shape[1]
    src = np.repeat(np.arange(m, dtype=np.int64), kk)
    dst = nbr.reshape(-1).astype(np.int64)
    if mode == "directed":
        pairs = (src, dst)
    elif mode == "inverted":
        pairs = (dst, src)
    else:
        code = np.unique(np.concatenate([src * m + dst, dst * m + src]))
        pairs = (code // m, code % m)
    return np.stack(pairs, axis=1)
