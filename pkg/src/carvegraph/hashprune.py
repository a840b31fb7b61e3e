"""Residual hyperplane hashing and the bounded per-point candidate reservoir.

Each point ``p`` keeps at most ``capacity`` candidates, at most one per
residual-hash bucket ``h_p(c)``. A colliding candidate replaces the bucket
occupant only if it is closer; a new bucket in a full reservoir evicts the
furthest occupant only if the newcomer is closer. Comparisons use the
bf16-rounded dissimilarity and then the candidate id, which makes the final
contents independent of insertion order.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from . import _backend
from .dataset import Dataset

SLOT_DTYPE = np.dtype([("id", "<u4"), ("hash", "<u2"), ("dist", "<u2")])
MAX_BITS = 16
DEFAULT_BITS = 12
DEFAULT_CAPACITY = 64


# -- bf16 ---------------------------------------------------------------------


def to_bf16(x) -> np.ndarray:
    """Round float32 values to bf16 bit patterns (round to nearest even).

    Negative zero is folded into positive zero so equal values compare equal.
    """
    bits = np.asarray(x, dtype=np.float32).view(np.uint32)
    rounded = (bits + np.uint32(0x7FFF) + ((bits >> 16) & np.uint32(1))) >> 16
    out = rounded.astype(np.uint16)
    return np.where(out == 0x8000, np.uint16(0), out)


def from_bf16(bits) -> np.ndarray:
    return (np.asarray(bits, dtype=np.uint16).astype(np.uint32) << 16).view(np.float32)


def bf16_round(x) -> np.ndarray:
    """Value of ``x`` after a round trip through bf16."""
    return from_bf16(to_bf16(x))


# -- sketches -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SketchTable:
    """Projections of every point onto ``m`` shared Gaussian hyperplanes."""

    hyperplanes: np.ndarray  # (m, d) float32
    sketches: np.ndarray  # (n, m) float32

    @property
    def m(self) -> int:
        return self.hyperplanes.shape[0]

    @classmethod
    def build(cls, dataset: Dataset, m: int = DEFAULT_BITS, seed: int = 0) -> "SketchTable":
        if not 1 <= m <= MAX_BITS:
            raise ValueError(f"number of hyperplanes must be in [1, {MAX_BITS}], got {m}")
        rng = np.random.default_rng([seed, 0x5EED])
        planes = rng.standard_normal((m, dataset.d)).astype(np.float32)
        sketches = np.ascontiguousarray(dataset.f32 @ planes.T, dtype=np.float32)
        return cls(planes, sketches)

    def hashes(self, src, dst) -> np.ndarray:
        """``h_src(dst)`` for each edge."""
        src = np.ascontiguousarray(src, dtype=np.uint32)
        dst = np.ascontiguousarray(dst, dtype=np.uint32)
        return _backend.kernels.residual_hashes(self.sketches, src, dst)


def residual_hash(sketch_p, sketch_c) -> int:
    """Bits of ``sketch_c - sketch_p >= 0``, first hyperplane most significant."""
    sketch_p = np.asarray(sketch_p, dtype=np.float32)
    sketch_c = np.asarray(sketch_c, dtype=np.float32)
    h = 0
    for bit in sketch_c >= sketch_p:
        h = (h << 1) | int(bit)
    return h


# -- single reservoir ---------------------------------------------------------


def _bf16_value(dist) -> float:
    return float(from_bf16(to_bf16(np.float32(dist)))[()])


class Reservoir:
    """The reservoir of one point, kept sorted by hash.

    ``insert`` takes the raw dissimilarity and stores it rounded to bf16.
    """

    SLOT_BYTES = SLOT_DTYPE.itemsize

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._hashes: list[int] = []
        self._ids: list[int] = []
        self._dists: list[float] = []
        self._furthest: int | None = None
        self.scans = 0  # linear scans for the furthest occupant

    def __len__(self):
        return len(self._hashes)

    @property
    def nbytes(self) -> int:
        return self.capacity * self.SLOT_BYTES

    def insert(self, cid: int, h: int, dist) -> bool:
        """Offer candidate ``cid`` with hash ``h``; returns True if the contents changed."""
        d = _bf16_value(dist)
        key = (d, cid)
        i = bisect.bisect_left(self._hashes, h)
        if i < len(self._hashes) and self._hashes[i] == h:
            if key < (self._dists[i], self._ids[i]):
                self._ids[i] = cid
                self._dists[i] = d
                self._furthest = None
                return True
            return False
        if len(self._hashes) < self.capacity:
            self._put(i, h, cid, d)
            return True
        f = self.furthest()
        if key < (self._dists[f], self._ids[f]):
            del self._hashes[f], self._ids[f], self._dists[f]
            if i > f:
                i -= 1
            self._put(i, h, cid, d)
            return True
        return False

    def _put(self, i, h, cid, d):
        self._hashes.insert(i, h)
        self._ids.insert(i, cid)
        self._dists.insert(i, d)
        self._furthest = None

    def furthest(self) -> int:
        if self._furthest is None:
            self.scans += 1
            self._furthest = max(range(len(self._ids)), key=lambda j: (self._dists[j], self._ids[j]))
        return self._furthest

    def slots(self) -> list[tuple[int, int, float]]:
        """``(hash, id, dist)`` triples in hash order."""
        return list(zip(self._hashes, self._ids, self._dists))

    def finalize(self) -> list[tuple[int, float]]:
        """Occupants as ``(id, dist)`` sorted by distance, then id."""
        return sorted(zip(self._ids, self._dists), key=lambda t: (t[1], t[0]))


# -- all reservoirs -----------------------------------------------------------


class ReservoirArena:
    """One fixed-size reservoir per point, in a single contiguous allocation.

    The payload is exactly ``n * capacity * 8`` bytes; ``counts`` and the
    cached-furthest index are bookkeeping on top of that.
    """

    def __init__(self, n: int, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1 or capacity > 0x7FFF:
            raise ValueError(f"capacity must be in [1, 32767], got {capacity}")
        need = n * capacity * SLOT_DTYPE.itemsize
        try:
            self.slots = np.zeros((n, capacity), dtype=SLOT_DTYPE)
            self.counts = np.zeros(n, dtype=np.uint16)
            self.furthest = np.full(n, -1, dtype=np.int16)
        except MemoryError as exc:
            raise MemoryError(
                f"reservoir arena needs {need} payload bytes "
                f"(+{n * 4} bytes bookkeeping) for n={n}, capacity={capacity}"
            ) from exc
        self.n = n
        self.capacity = capacity
        self.streamed = 0

    @property
    def payload_nbytes(self) -> int:
        return self.slots.nbytes

    @property
    def overhead_nbytes(self) -> int:
        return self.counts.nbytes + self.furthest.nbytes

    def stream(self, src, dst, hashes, dist_bits, threads: int = 1) -> np.ndarray:
        """Insert edges ``src -> dst``; returns the kernel's operation counts."""
        src = np.ascontiguousarray(src, dtype=np.uint32)
        if src.size and (int(src.max()) >= self.n):
            raise IndexError("edge source out of range")
        self.streamed += int(src.size)
        return _backend.kernels.stream_edges(
            self.slots, self.counts, self.furthest, src,
            np.ascontiguousarray(dst, dtype=np.uint32),
            np.ascontiguousarray(hashes, dtype=np.uint16),
            np.ascontiguousarray(dist_bits, dtype=np.uint16),
            int(threads),
        )

    def insert(self, p: int, cid: int, h: int, dist) -> None:
        self.stream([p], [cid], [h], to_bf16(np.float32(dist)).reshape(1))

    def finalize(self, p: int) -> list[tuple[int, float]]:
        cnt = int(self.counts[p])
        row = self.slots[p, :cnt]
        dists = from_bf16(row["dist"])
        return sorted(zip(row["id"].tolist(), dists.tolist()), key=lambda t: (t[1], t[0]))

    def occupancy(self) -> int:
        return int(self.counts.sum(dtype=np.int64))

    def rejection_rate(self) -> float:
        """Fraction of streamed candidates not present at the end.

        Depends only on the multiset of streamed candidates, not their order.
        """
        if self.streamed == 0:
            return 0.0
        return 1.0 - self.occupancy() / self.streamed
