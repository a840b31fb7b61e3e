"""Vector storage, dissimilarity measures and benchmark file formats.

Supported on-disk formats (all little-endian):

* ``bin`` family: ``u32 n, u32 d`` then ``n*d`` elements row-major. The
  suffix picks the element type: ``.fbin`` float32, ``.u8bin`` uint8,
  ``.i8bin`` int8.
* ``fvecs`` / ``bvecs``: each vector is prefixed by its own ``i32 d``.
* ground truth: ``u32 nq, u32 k``, then ``nq*k`` u32 ids, then ``nq*k``
  float32 distances.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

L2 = "l2"
MIPS = "mips"
MEASURES = (L2, MIPS)

ELEM_TYPES = {
    "float32": np.dtype("<f4"),
    "uint8": np.dtype("u1"),
    "int8": np.dtype("i1"),
}

BIN_SUFFIXES = {".fbin": "float32", ".u8bin": "uint8", ".i8bin": "int8"}
VEC_SUFFIXES = {".fvecs": "float32", ".bvecs": "uint8"}


class LoadError(ValueError):
    """Raised when a dataset or ground-truth file is malformed."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable ``n x d`` row-major vector store.

    ``measure`` is ``"l2"`` (squared Euclidean) or ``"mips"`` (negative inner
    product, so that smaller is always more similar).
    """

    data: np.ndarray
    measure: str = L2
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise ValueError(f"dataset must be 2-D, got shape {data.shape}")
        n, d = data.shape
        if n < 1 or d < 1:
            raise ValueError(f"dataset must have n >= 1 and d >= 1, got {data.shape}")
        elem = _elem_name(data.dtype)
        if self.measure not in MEASURES:
            raise ValueError(f"unknown measure {self.measure!r}")
        if self.measure == MIPS and elem != "float32":
            raise ValueError("MIPS is only supported for float32 data")
        data = np.ascontiguousarray(data, dtype=ELEM_TYPES[elem])
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def elem_type(self) -> str:
        return _elem_name(self.data.dtype)

    @property
    def is_integer(self) -> bool:
        return self.elem_type != "float32"

    @cached_property
    def f32(self) -> np.ndarray:
        """Rows as contiguous float32 (a view for float32 data)."""
        if self.data.dtype == np.float32:
            return self.data
        out = self.data.astype(np.float32)
        out.setflags(write=False)
        return out

    @cached_property
    def sq_norms(self) -> np.ndarray:
        """Per-row squared Euclidean norms (the norm cache), float32."""
        if self.is_integer:
            wide = self.data.astype(np.int64)
            return np.einsum("ij,ij->i", wide, wide).astype(np.float32)
        x = self.f32
        return np.einsum("ij,ij->i", x, x, dtype=np.float32)

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"Dataset(n={self.n}, d={self.d}, elem_type={self.elem_type}, measure={self.measure})"


def _elem_name(dtype) -> str:
    dtype = np.dtype(dtype)
    for name, dt in ELEM_TYPES.items():
        if dtype.kind == dt.kind and dtype.itemsize == dt.itemsize:
            return name
    if dtype.kind == "f":
        return "float32"
    raise ValueError(f"unsupported element type {dtype}")


def dissimilarity(a, b, measure: str = L2):
    """Dissimilarity between two vectors; smaller means more similar.

    Integer inputs are widened before arithmetic, so squared-L2 on uint8/int8
    is exact.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if a.dtype.kind in "iu" and b.dtype.kind in "iu":
        a = a.astype(np.int64)
        b = b.astype(np.int64)
        if measure == L2:
            diff = a - b
            return int(diff @ diff)
        if measure == MIPS:
            return -int(a @ b)
    else:
        a = a.astype(np.float64)
        b = b.astype(np.float64)
        if measure == L2:
            diff = a - b
            return float(diff @ diff)
        if measure == MIPS:
            return -float(a @ b)
    raise ValueError(f"unknown measure {measure!r}")


def pairwise_exact(x: np.ndarray, y: np.ndarray, measure: str = L2) -> np.ndarray:
    """All dissimilarities between rows of ``x`` and rows of ``y`` in float64.

    Integer inputs go through float64 products, which is exact as long as the
    sums stay below 2**53.
    """
    x64 = np.asarray(x, dtype=np.float64)
    y64 = np.asarray(y, dtype=np.float64)
    gram = x64 @ y64.T
    if measure == MIPS:
        return -gram
    out = np.einsum("ij,ij->i", x64, x64)[:, None] + np.einsum("ij,ij->i", y64, y64)[None, :]
    out -= 2.0 * gram
    np.maximum(out, 0.0, out=out)
    return out


# -- synthetic data -----------------------------------------------------------


def gen_synthetic(n: int, d: int, num_clusters: int, spread: float, seed: int = 0,
                  *, return_labels: bool = False):
    """Gaussian blobs around centers drawn uniformly in the unit cube.

    Point ``i`` belongs to cluster ``i % num_clusters``, so cluster sizes differ
    by at most one. ``spread`` is the per-coordinate standard deviation.
    """
    if n < 1 or d < 1 or num_clusters < 1:
        raise ValueError("n, d and num_clusters must be >= 1")
    if spread < 0:
        raise ValueError("spread must be non-negative")
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.0, 1.0, size=(num_clusters, d))
    labels = np.arange(n) % num_clusters
    noise = rng.standard_normal((n, d)) * spread
    data = (centers[labels] + noise).astype(np.float32)
    ds = Dataset(data)
    if return_labels:
        return ds, labels
    return ds


# -- bin / vecs formats -------------------------------------------------------


def _infer_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix in BIN_SUFFIXES or suffix in VEC_SUFFIXES:
        return suffix[1:]
    raise LoadError(f"cannot infer format from suffix {suffix!r} of {path}")


def load(path, fmt: str | None = None, measure: str = L2) -> Dataset:
    """Read a dataset file. ``fmt`` defaults to the file suffix."""
    fmt = (fmt or _infer_format(path)).lstrip(".").lower()
    raw = Path(path).read_bytes()
    if "." + fmt in BIN_SUFFIXES:
        data = _parse_bin(raw, ELEM_TYPES[BIN_SUFFIXES["." + fmt]])
    elif "." + fmt in VEC_SUFFIXES:
        data = _parse_vecs(raw, ELEM_TYPES[VEC_SUFFIXES["." + fmt]])
    else:
        raise LoadError(f"unsupported format {fmt!r}")
    return Dataset(data, measure=measure)


def _parse_bin(raw: bytes, dtype: np.dtype) -> np.ndarray:
    if len(raw) < 8:
        raise LoadError(f"truncated header: {len(raw)} bytes at offset 0, need 8")
    n, d = (int(v) for v in np.frombuffer(raw, dtype="<u4", count=2))
    if n == 0:
        raise LoadError("empty dataset (n=0 at offset 0)")
    if d == 0:
        raise LoadError("zero dimension at offset 4")
    expected = n * d * dtype.itemsize
    body = len(raw) - 8
    if body < expected:
        raise LoadError(f"truncated payload: expected {expected} bytes after offset 8, "
                        f"file ends at offset {len(raw)}")
    if body > expected:
        raise LoadError(f"trailing bytes: payload should end at offset {8 + expected}, "
                        f"file is {len(raw)} bytes")
    return np.frombuffer(raw, dtype=dtype, count=n * d, offset=8).reshape(n, d).copy()


def _parse_vecs(raw: bytes, dtype: np.dtype) -> np.ndarray:
    if len(raw) == 0:
        raise LoadError("empty dataset (no vectors at offset 0)")
    if len(raw) < 4:
        raise LoadError(f"truncated dimension field at offset 0")
    d = int(np.frombuffer(raw, dtype="<i4", count=1)[0])
    if d <= 0:
        raise LoadError(f"invalid dimension {d} at offset 0")
    stride = 4 + d * dtype.itemsize
    if len(raw) % stride:
        n_full = len(raw) // stride
        raise LoadError(f"truncated vector at offset {n_full * stride}")
    n = len(raw) // stride
    rec = np.frombuffer(raw, dtype=np.dtype([("dim", "<i4"), ("v", dtype, (d,))]), count=n)
    bad = np.flatnonzero(rec["dim"] != d)
    if bad.size:
        raise LoadError(f"dimension mismatch at offset {int(bad[0]) * stride}: "
                        f"{int(rec['dim'][bad[0]])} != {d}")
    return np.ascontiguousarray(rec["v"])


def save(dataset: Dataset | np.ndarray, path, fmt: str | None = None) -> None:
    data = dataset.data if isinstance(dataset, Dataset) else np.asarray(dataset)
    fmt = (fmt or _infer_format(path)).lstrip(".").lower()
    if "." + fmt in BIN_SUFFIXES:
        dtype = ELEM_TYPES[BIN_SUFFIXES["." + fmt]]
        _check_dtype(data, dtype, fmt)
        n, d = data.shape
        with open(path, "wb") as f:
            f.write(np.array([n, d], dtype="<u4").tobytes())
            f.write(np.ascontiguousarray(data, dtype=dtype).tobytes())
    elif "." + fmt in VEC_SUFFIXES:
        dtype = ELEM_TYPES[VEC_SUFFIXES["." + fmt]]
        _check_dtype(data, dtype, fmt)
        n, d = data.shape
        rec = np.empty(n, dtype=np.dtype([("dim", "<i4"), ("v", dtype, (d,))]))
        rec["dim"] = d
        rec["v"] = data
        with open(path, "wb") as f:
            f.write(rec.tobytes())
    else:
        raise ValueError(f"unsupported format {fmt!r}")


def _check_dtype(data, dtype, fmt):
    if data.dtype != dtype:
        raise ValueError(f"format {fmt!r} stores {dtype}, got {data.dtype}")


# -- ground truth -------------------------------------------------------------


def save_groundtruth(path, ids: np.ndarray, dists: np.ndarray) -> None:
    ids = np.asarray(ids)
    nq, k = ids.shape
    with open(path, "wb") as f:
        f.write(np.array([nq, k], dtype="<u4").tobytes())
        f.write(np.ascontiguousarray(ids, dtype="<u4").tobytes())
        f.write(np.ascontiguousarray(dists, dtype="<f4").tobytes())


def load_groundtruth(path) -> tuple[np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise LoadError(f"truncated header: {len(raw)} bytes at offset 0, need 8")
    nq, k = (int(v) for v in np.frombuffer(raw, dtype="<u4", count=2))
    expected = 8 + nq * k * 8
    if len(raw) != expected:
        raise LoadError(f"ground truth length mismatch: expected {expected} bytes, "
                        f"got {len(raw)} (offset {min(len(raw), expected)})")
    ids = np.frombuffer(raw, dtype="<u4", count=nq * k, offset=8).reshape(nq, k)
    dists = np.frombuffer(raw, dtype="<f4", count=nq * k, offset=8 + nq * k * 4).reshape(nq, k)
    return ids.astype(np.int64), dists.copy()


def file_checksum(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def available_threads() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
