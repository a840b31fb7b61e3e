import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from carvegraph import Dataset, LeafParams, all_pairs, pick_knn
from carvegraph.leafbuild import gram_blocked, nearest_in_leaf

from oracles import knn_full_sort, naive_all_pairs


def test_params():
    assert LeafParams() == LeafParams(k=2, pick_mode="bidirected")
    with pytest.raises(ValueError):
        LeafParams(k=0)
    with pytest.raises(ValueError):
        LeafParams(pick_mode="mutual")


def test_single_point_block():
    d = Dataset(np.array([[1.0, 2.0]], dtype=np.float32))
    assert all_pairs(d, [0]).tolist() == [[0.0]]


def test_three_four_five():
    d = Dataset(np.array([[0, 0], [3, 4]], dtype=np.float32))
    assert all_pairs(d, [0, 1]).tolist() == [[0, 25], [25, 0]]


@pytest.mark.parametrize("block", [1, 7, 64, 200])
def test_gram_blocked_symmetric_and_close(block):
    x = np.random.default_rng(0).standard_normal((150, 33)).astype(np.float32)
    g = gram_blocked(x, block)
    assert np.array_equal(g, g.T)
    np.testing.assert_allclose(g, x.astype(np.float64) @ x.T.astype(np.float64), rtol=1e-4, atol=1e-3)


def test_random_leaf_against_double_loop():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((200, 32)).astype(np.float32)
    d = Dataset(x)
    ids = np.arange(200)
    got = all_pairs(d, ids).astype(np.float64)
    ref = naive_all_pairs(x)
    rel = np.abs(got - ref) / np.maximum(np.abs(ref), 1e-6)
    off = ~np.eye(200, dtype=bool)
    assert rel[off].max() <= 1e-3
    assert np.all(np.diag(got) == 0)
    assert np.array_equal(got, got.T)


def test_uint8_path_exact():
    rng = np.random.default_rng(2)
    x = rng.integers(0, 256, size=(90, 128), dtype=np.uint8)
    d = Dataset(x)
    ids = rng.permutation(90)[:60]
    got = all_pairs(d, ids)
    assert np.array_equal(got, naive_all_pairs(x[ids]))


def test_int8_path_exact():
    rng = np.random.default_rng(3)
    x = rng.integers(-128, 128, size=(40, 64), dtype=np.int8)
    assert np.array_equal(all_pairs(Dataset(x), np.arange(40)), naive_all_pairs(x))


def test_mips_block():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((50, 12)).astype(np.float32)
    got = all_pairs(Dataset(x, measure="mips"), np.arange(50)).astype(np.float64)
    np.testing.assert_allclose(got, naive_all_pairs(x, "mips"), rtol=1e-4, atol=1e-4)


def test_clamps_negative_cancellation():
    # two nearly identical points far from the origin
    x = np.array([[1e4, 1e4], [1e4, 1e4 + 1e-3]], dtype=np.float32)
    block = all_pairs(Dataset(x), [0, 1])
    assert np.all(block >= 0)


def test_collinear_bidirected(backend):
    block = np.array([[0, 1, 9], [1, 0, 4], [9, 4, 0]], dtype=np.float32)
    edges = {tuple(e) for e in pick_knn(block, 1, "bidirected").tolist()}
    assert edges == {(0, 1), (1, 0), (2, 1), (1, 2)}


def test_modes_relation(backend):
    rng = np.random.default_rng(5)
    x = rng.standard_normal((80, 6)).astype(np.float32)
    block = all_pairs(Dataset(x), np.arange(80))
    directed = {tuple(e) for e in pick_knn(block, 3, "directed").tolist()}
    inverted = {tuple(e) for e in pick_knn(block, 3, "inverted").tolist()}
    bi = pick_knn(block, 3, "bidirected")
    bi_set = {tuple(e) for e in bi.tolist()}
    assert len(bi_set) == len(bi)
    assert inverted == {(b, a) for a, b in directed}
    assert bi_set == directed | inverted
    assert bi_set == {(b, a) for a, b in bi_set}
    out_deg = np.bincount(pick_knn(block, 3, "directed")[:, 0], minlength=80)
    assert np.all(out_deg == 3)
    with pytest.raises(ValueError):
        pick_knn(block, 3, "mutual")


def test_k_clamped_to_leaf_size(backend):
    block = np.array([[0, 2], [2, 0]], dtype=np.float32)
    assert nearest_in_leaf(block, 5).tolist() == [[1], [0]]
    assert nearest_in_leaf(np.zeros((1, 1), dtype=np.float32), 2).shape == (1, 0)


def test_pick_matches_full_sort(backend):
    rng = np.random.default_rng(6)
    x = rng.standard_normal((500, 10)).astype(np.float32)
    gids = rng.permutation(10_000)[:500].astype(np.uint32)
    block = all_pairs(Dataset(x), np.arange(500))
    got = nearest_in_leaf(block, 2, gids)
    for i in range(500):
        assert got[i].tolist() == knn_full_sort(block[i], i, gids, 2)


@given(st.integers(2, 40), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_ties_broken_by_global_id(m, k, seed):
    rng = np.random.default_rng(seed)
    # few distinct values, so ties are everywhere
    vals = rng.integers(0, 3, size=(m, m)).astype(np.float32)
    block = np.minimum(vals, vals.T)
    np.fill_diagonal(block, 0)
    gids = rng.permutation(m * 3)[:m].astype(np.uint32)
    import carvegraph as cg
    for be in cg.available_backends():
        with cg.use_backend(be):
            got = nearest_in_leaf(block, k, gids)
        for i in range(m):
            assert got[i].tolist() == knn_full_sort(block[i], i, gids, min(k, m - 1))


def test_float64_block_accepted(backend):
    block = np.array([[0, 1, 2], [1, 0, 3], [2, 3, 0]], dtype=np.float64)
    assert nearest_in_leaf(block, 1).tolist() == [[1], [0], [0]]
