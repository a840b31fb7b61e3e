"""The compiled kernels and the numpy fallback must agree bit for bit."""

import numpy as np
import pytest

import carvegraph as cg
from carvegraph import _fallback
from carvegraph.hashprune import SLOT_DTYPE, ReservoirArena, to_bf16

compiled = pytest.importorskip("carvegraph._kernels")
BACKENDS = [compiled, _fallback]


def test_backend_switching():
    assert "python" in cg.available_backends()
    with cg.use_backend("python"):
        assert cg.backend_name() == "python"
    with pytest.raises(ValueError):
        cg.set_backend("fortran")


@pytest.mark.parametrize("d", [1, 7, 8, 9, 64, 100])
@pytest.mark.parametrize("mips", [0, 1])
def test_distances(d, mips):
    rng = np.random.default_rng(d)
    X = rng.standard_normal((300, d)).astype(np.float32)
    q = rng.standard_normal(d).astype(np.float32)
    ids = rng.integers(0, 300, 100).astype(np.int64)
    a, b = (k.distances_to(X, q, ids, mips) for k in BACKENDS)
    assert np.array_equal(a, b)
    ref = -(X[ids].astype(np.float64) @ q) if mips else ((X[ids] - q).astype(np.float64) ** 2).sum(1)
    np.testing.assert_allclose(a, ref, rtol=1e-4, atol=1e-4)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_pick(dtype):
    rng = np.random.default_rng(1)
    for m in (1, 2, 3, 50, 257):
        D = rng.integers(0, 5, size=(m, m)).astype(dtype)
        gids = rng.permutation(10 * m)[:m].astype(np.uint32)
        for k in (1, 2, 5):
            a, b = (kern.pick_knn(D, gids, k) for kern in BACKENDS)
            assert a.shape == b.shape == (m, max(min(k, m - 1), 0))
            assert np.array_equal(a, b)


def test_residual_hashes():
    rng = np.random.default_rng(2)
    for m in (1, 12, 16):
        sk = rng.standard_normal((100, m)).astype(np.float32)
        src = rng.integers(0, 100, 1000).astype(np.uint32)
        dst = rng.integers(0, 100, 1000).astype(np.uint32)
        a, b = (k.residual_hashes(sk, src, dst) for k in BACKENDS)
        assert np.array_equal(a, b)


def _streamed(kern, src, dst, h, bits, n, cap, threads):
    slots = np.zeros((n, cap), dtype=SLOT_DTYPE)
    counts = np.zeros(n, dtype=np.uint16)
    furthest = np.full(n, -1, dtype=np.int16)
    for part in np.array_split(np.arange(len(src)), 5):
        kern.stream_edges(slots, counts, furthest, src[part], dst[part], h[part], bits[part], threads)
    # compare the used prefix only
    return [slots[p, :counts[p]].tobytes() for p in range(n)]


@pytest.mark.parametrize("threads", [1, 3])
def test_stream(threads):
    rng = np.random.default_rng(3)
    n, cap, E = 50, 6, 4000
    src = rng.integers(0, n, E).astype(np.uint32)
    dst = rng.integers(0, 500, E).astype(np.uint32)
    h = rng.integers(0, 40, E).astype(np.uint16)
    bits = to_bf16(rng.standard_normal(E).astype(np.float32) * 3)
    a, b = (_streamed(k, src, dst, h, bits, n, cap, threads) for k in BACKENDS)
    assert a == b


@pytest.mark.parametrize("mips", [0, 1])
@pytest.mark.parametrize("alpha,use_alpha", [(1.2, True), (1.0, True), (2.0, True), (1.0, False)])
def test_prune(mips, alpha, use_alpha):
    rng = np.random.default_rng(4)
    n, d, cap = 300, 10, 20
    X = rng.standard_normal((n, d)).astype(np.float32)
    arena = ReservoirArena(n, cap)
    src = rng.integers(0, n, 6000)
    dst = rng.integers(0, n, 6000)
    keep = src != dst
    src, dst = src[keep], dst[keep]
    h = rng.integers(0, 64, len(src))
    arena.stream(src, dst, h, to_bf16(rng.random(len(src)).astype(np.float32)))
    outs = [k.prune_all(X, mips, arena.slots, arena.counts, alpha, use_alpha, 8, 2) for k in BACKENDS]
    assert np.array_equal(outs[0][0], outs[1][0])
    assert np.array_equal(outs[0][1], outs[1][1])
    assert outs[0][1].max() <= 8


@pytest.mark.parametrize("mips", [0, 1])
def test_beam_search(mips):
    data = cg.gen_synthetic(1500, 12, 10, 0.2, seed=5)
    if mips:
        data = cg.Dataset(data.data, measure="mips")
    g = cg.build(data, cg.BuildParams(partition=cg.PartitionParams(cmax=250, cmin=25)))
    Q = np.random.default_rng(6).standard_normal((40, 12)).astype(np.float32)
    starts = np.random.default_rng(7).integers(0, 1500, 40).astype(np.uint32)
    for L in (1, 7, 30):
        outs = [k.beam_search_batch(g.adjacency, g.degrees, data.f32, mips, Q, L, starts, 2) for k in BACKENDS]
        for x, y in zip(*outs):
            assert np.array_equal(x, y)
