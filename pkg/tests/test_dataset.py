import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from carvegraph import dataset as ds
from carvegraph.dataset import Dataset, LoadError, dissimilarity

from oracles import quadratic_knn


def test_dissimilarity_examples():
    assert dissimilarity([1, 2], [1, 2]) == 0
    assert dissimilarity([0, 0], [3, 4]) == 25
    assert dissimilarity([1, 0], [2, 5], "mips") == -2


def test_dissimilarity_dimension_mismatch():
    with pytest.raises(ValueError):
        dissimilarity([1, 2, 3], [1, 2])


def test_uint8_accumulation_is_exact():
    a = np.full(65536, 255, dtype=np.uint8)
    b = np.zeros(65536, dtype=np.uint8)
    assert dissimilarity(a, b) == 255 * 255 * 65536


@given(hnp.arrays(np.float32, st.integers(1, 40),
                  elements=st.floats(-1e3, 1e3, width=32, allow_nan=False)))
def test_self_dissimilarity_zero(a):
    assert dissimilarity(a, a) == 0


@given(st.integers(1, 40).flatmap(
    lambda d: st.tuples(*[hnp.arrays(np.float32, d, elements=st.floats(-1e3, 1e3, width=32))] * 2)))
def test_l2_symmetric(pair):
    a, b = pair
    assert dissimilarity(a, b) == dissimilarity(b, a)


@given(hnp.arrays(np.int8, st.integers(1, 64)), hnp.arrays(np.int8, st.integers(1, 64)))
def test_int8_matches_python_ints(a, b):
    if len(a) != len(b):
        return
    expected = sum((int(x) - int(y)) ** 2 for x, y in zip(a, b))
    assert dissimilarity(a, b) == expected


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 3), dtype=np.float32))
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 0), dtype=np.float32))
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2), dtype=np.uint8), measure="mips")
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2), dtype=np.complex64))
    assert Dataset(np.zeros((3, 2), dtype=np.float64)).elem_type == "float32"
    d = Dataset(np.ones((4, 3), dtype=np.uint8))
    assert (d.n, d.d, d.elem_type) == (4, 3, "uint8")
    assert d.data.size == d.n * d.d


def test_sq_norms_cache():
    x = np.random.default_rng(0).standard_normal((50, 9)).astype(np.float32)
    d = Dataset(x)
    np.testing.assert_allclose(d.sq_norms, (x.astype(np.float64) ** 2).sum(1), rtol=1e-5)
    assert d.sq_norms.dtype == np.float32


def test_gen_zero_spread():
    d = ds.gen_synthetic(100, 4, 1, 0.0, seed=3)
    assert np.all(d.data == d.data[0])


def test_gen_deterministic():
    a = ds.gen_synthetic(300, 8, 5, 0.2, seed=7)
    b = ds.gen_synthetic(300, 8, 5, 0.2, seed=7)
    assert a.data.tobytes() == b.data.tobytes()


def test_gen_even_clusters():
    _, labels = ds.gen_synthetic(103, 4, 10, 0.1, seed=1, return_labels=True)
    sizes = np.bincount(labels)
    assert sizes.max() - sizes.min() <= 1


def test_gen_nearest_neighbor_in_own_cluster():
    data, labels = ds.gen_synthetic(1000, 16, 10, 0.01, seed=2, return_labels=True)
    # nearest other point by brute force, with a huge self-distance
    x = data.data.astype(np.float64)
    sq = (x ** 2).sum(1)
    dist = sq[:, None] + sq[None, :] - 2 * x @ x.T
    np.fill_diagonal(dist, np.inf)
    nn = dist.argmin(1)
    assert np.mean(labels[nn] == labels) >= 0.99


# -- files ----------------------------------------------------------------------


def test_fbin_header_arithmetic(tmp_path):
    p = tmp_path / "a.fbin"
    p.write_bytes(np.array([2, 3], "<u4").tobytes() + np.arange(6, dtype="<f4").tobytes())
    d = ds.load(p)
    assert (d.n, d.d, d.elem_type) == (2, 3, "float32")
    np.testing.assert_array_equal(d.data.ravel(), np.arange(6))


def test_fbin_truncated(tmp_path):
    p = tmp_path / "a.fbin"
    p.write_bytes(np.array([2, 3], "<u4").tobytes() + b"\0" * 20)
    with pytest.raises(LoadError, match="offset"):
        ds.load(p)


def test_empty_dataset(tmp_path):
    p = tmp_path / "a.fbin"
    p.write_bytes(np.array([0, 3], "<u4").tobytes())
    with pytest.raises(LoadError, match="empty dataset"):
        ds.load(p)


def test_trailing_bytes(tmp_path):
    p = tmp_path / "a.u8bin"
    p.write_bytes(np.array([1, 2], "<u4").tobytes() + b"\1\2\3")
    with pytest.raises(LoadError, match="offset"):
        ds.load(p)


def test_vecs_dimension_mismatch(tmp_path):
    p = tmp_path / "a.fvecs"
    rec = np.array([2], "<i4").tobytes() + np.zeros(2, "<f4").tobytes()
    bad = np.array([3], "<i4").tobytes() + np.zeros(1, "<f4").tobytes()
    p.write_bytes(rec + bad)
    with pytest.raises(LoadError, match="offset 12"):
        ds.load(p)


@pytest.mark.parametrize("suffix,dtype", [
    (".fbin", np.float32), (".u8bin", np.uint8), (".i8bin", np.int8),
    (".fvecs", np.float32), (".bvecs", np.uint8),
])
def test_roundtrip(tmp_path, suffix, dtype):
    rng = np.random.default_rng(1)
    if dtype == np.float32:
        x = rng.standard_normal((17, 5)).astype(dtype)
    else:
        info = np.iinfo(dtype)
        x = rng.integers(info.min, info.max, size=(17, 5), endpoint=True).astype(dtype)
    p = tmp_path / ("x" + suffix)
    ds.save(Dataset(x), p)
    y = ds.load(p)
    assert y.data.dtype == dtype
    assert y.data.tobytes() == x.tobytes()


def test_groundtruth_roundtrip(tmp_path):
    ids = np.arange(12).reshape(3, 4)
    dists = np.linspace(0, 1, 12, dtype=np.float32).reshape(3, 4)
    p = tmp_path / "gt.bin"
    ds.save_groundtruth(p, ids, dists)
    raw = p.read_bytes()
    assert np.frombuffer(raw[:8], "<u4").tolist() == [3, 4]
    i2, d2 = ds.load_groundtruth(p)
    np.testing.assert_array_equal(i2, ids)
    np.testing.assert_array_equal(d2, dists)


def test_pairwise_exact_matches_quadratic_scan():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((60, 7))
    q = rng.standard_normal((5, 7))
    d = ds.pairwise_exact(q, x)
    np.testing.assert_array_equal(np.argsort(d, axis=1, kind="stable")[:, :5], quadratic_knn(x, q, 5))
