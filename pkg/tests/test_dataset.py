import numpy as np
import pytest

from rvescope.dataset import extract_dataset, neighbor_offsets
from rvescope.micrograph import Micrograph


def test_single_interior_pixel():
    grid = np.arange(9).reshape(3, 3) % 2
    ds = extract_dataset(Micrograph(grid), 3)
    assert ds.n == 1 and ds.n_features == 8
    assert ds.y.tolist() == [grid[1, 1]]
    np.testing.assert_array_equal(ds.rows([0])[0], np.delete(grid.ravel(), 4))


def test_full_scale_counts():
    ds = extract_dataset(Micrograph(np.zeros((2000, 2000), dtype=np.uint8)), 21)
    assert ds.n == 1980**2 == 3_920_400
    assert ds.n_features == 440


def test_constant_field():
    ds = extract_dataset(Micrograph(np.ones((5, 5))), 3)
    X, y = ds.to_arrays()
    assert X.shape == (9, 8)
    assert np.all(X == 1) and np.all(y == 1)


def test_rejects_bad_ls():
    m = Micrograph(np.zeros((5, 5)))
    for ls in (2, 4, 1, 7):
        with pytest.raises(ValueError):
            extract_dataset(m, ls)


@pytest.mark.parametrize("ls", [3, 5, 7])
def test_features_match_exhaustive_loop(rng, ls):
    grid = (rng.random((17, 23)) < 0.4).astype(np.uint8)
    ds = extract_dataset(Micrograph(grid), ls)
    h, w = grid.shape
    assert ds.n == (h - ls + 1) * (w - ls + 1)
    X, y = ds.to_arrays()
    offs = neighbor_offsets(ls)
    i = 0
    for r in range(ds.margin, h - ds.margin):
        for c in range(ds.margin, w - ds.margin):
            assert ds.location(i) == (r, c)
            assert y[i] == grid[r, c]
            for k, (dr, dc) in enumerate(offs):
                assert X[i, k] == grid[r + dr, c + dc]
            i += 1
    assert i == ds.n


def test_reconstruction_and_boundary_count(rng):
    grid = (rng.random((12, 15)) < 0.3).astype(np.uint8)
    ds = extract_dataset(Micrograph(grid), 5)
    rebuilt = np.full(grid.shape, 255, dtype=np.uint8)
    r0, c0 = ds.interior_origin
    hi, wi = ds.interior_shape
    rebuilt[r0 : r0 + hi, c0 : c0 + wi] = ds.y.reshape(hi, wi)
    np.testing.assert_array_equal(rebuilt[2:-2, 2:-2], grid[2:-2, 2:-2])
    assert ds.n + np.count_nonzero(rebuilt == 255) == grid.size


def test_blocks_and_subsets_agree(rng):
    grid = (rng.random((20, 20)) < 0.5).astype(np.uint8)
    ds = extract_dataset(Micrograph(grid), 3)
    X, y = ds.to_arrays()
    stacked = np.vstack([b for _, _, b in ds.blocks(size=37)])
    np.testing.assert_array_equal(stacked, X)
    idx = np.array([5, 0, 100, 323])
    sub = ds.subset(idx)
    np.testing.assert_array_equal(sub.block(0, 4), X[idx])
    np.testing.assert_array_equal(sub.y, y[idx])
    np.testing.assert_array_equal(ds.block(19, 61), X[19:61])
