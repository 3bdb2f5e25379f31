"""Backend equivalence and semantics of the tree kernels."""

import numpy as np
import pytest

from edubart._kernels import _fallback
from edubart.bart.trees import Tree

try:
    from edubart._kernels import _core
except ImportError:
    _core = None

BACKENDS = [_fallback] + ([_core] if _core is not None else [])


def _demo_tree():
    t = Tree()
    l, r = t.grow(0, 0, threshold=0.5, missing_left=True)
    t.grow(r, 1, subset=np.array([2.0, 5.0]), missing_left=False)
    t.leaf_value[t.leaves()] = [1.0, 2.0, 3.0]
    return t


def _demo_X(rng, n=200):
    X = rng.normal(size=(n, 3))
    X[:, 1] = rng.choice([1.0, 2.0, 5.0, 7.0], size=n)
    X[rng.random(n) < 0.15, 0] = np.nan
    X[rng.random(n) < 0.15, 1] = np.nan
    return np.ascontiguousarray(X)


@pytest.mark.parametrize("impl", BACKENDS)
def test_route_semantics(impl):
    t = _demo_tree()
    X = np.ascontiguousarray(
        [
            [0.2, 9.0, 0.0],  # left of root
            [0.9, 2.0, 0.0],  # right, code in subset -> left child
            [0.9, 7.0, 0.0],  # right, code outside subset -> right child
            [np.nan, 7.0, 0.0],  # missing at root goes left
            [0.9, np.nan, 0.0],  # missing at subset node goes right
        ]
    )
    rows = np.arange(5, dtype=np.int64)
    leaves = impl.route_rows(X, rows, *t.packed(), start=0)
    values = t.leaf_value[leaves]
    assert values.tolist() == [1.0, 2.0, 3.0, 1.0, 3.0]


def test_backends_agree_bitwise(rng):
    if _core is None:
        pytest.skip("compiled backend not built")
    t = _demo_tree()
    X = _demo_X(rng)
    rows = np.arange(X.shape[0], dtype=np.int64)
    a = _fallback.route_rows(X, rows, *t.packed(), start=0)
    b = _core.route_rows(X, rows, *t.packed(), start=0)
    assert np.array_equal(a, b)

    vals = rng.normal(size=X.shape[0])
    ca, sa = _fallback.leaf_sums(a, vals, t.n_slots)
    cb, sb = _core.leaf_sums(b, vals, t.n_slots)
    assert np.array_equal(ca, cb)
    assert np.array_equal(sa, sb)  # bitwise: same accumulation order

    y = (rng.random(X.shape[0]) < 0.4).astype(np.int64)
    for j in range(3):
        fa = _fallback.gini_best_split(X[:, j], y, 2)
        fb = _core.gini_best_split(X[:, j], y, 2)
        assert fa[0] == fb[0]
        if fa[0]:
            assert fa[1] == fb[1] and fa[2] == fb[2]


def test_leaf_sums_row_order(rng):
    leaf_idx = rng.integers(0, 4, size=100).astype(np.int32)
    vals = rng.normal(size=100)
    counts, sums = _fallback.leaf_sums(leaf_idx, vals, 4)
    for node in range(4):
        assert counts[node] == (leaf_idx == node).sum()
        assert sums[node] == pytest.approx(vals[leaf_idx == node].sum(), rel=1e-12)


@pytest.mark.parametrize("impl", BACKENDS)
def test_gini_best_split_known_case(impl):
    # perfect separation at 2.5
    x = np.array([1.0, 2.0, 3.0, 4.0])
    y = np.array([0, 0, 1, 1], dtype=np.int64)
    found, thr, score = impl.gini_best_split(x, y, 2)
    assert found
    assert thr == 2.5
    assert score == 0.0


@pytest.mark.parametrize("impl", BACKENDS)
def test_gini_no_candidates(impl):
    found, _, _ = impl.gini_best_split(
        np.array([1.0, 1.0, 1.0]), np.array([0, 1, 0], dtype=np.int64), 2
    )
    assert not found
    found, _, _ = impl.gini_best_split(
        np.array([np.nan, np.nan, 2.0]), np.array([0, 1, 0], dtype=np.int64), 2
    )
    assert not found


@pytest.mark.parametrize("impl", BACKENDS)
def test_gini_missing_routes_left(impl):
    # NaN rows count into the left child at every candidate
    x = np.array([np.nan, np.nan, 1.0, 2.0])
    y = np.array([0, 0, 0, 1], dtype=np.int64)
    found, thr, score = impl.gini_best_split(x, y, 2)
    assert found and thr == 1.5
    assert score == 0.0  # both children pure with the NaNs on the left


@pytest.mark.parametrize("impl", BACKENDS)
def test_forest_fit_sums_trees(impl, rng):
    t = _demo_tree()
    X = _demo_X(rng, n=50)
    rows = np.arange(50, dtype=np.int64)
    feature, threshold, missing_left, left, right, cat_start, cat_len, cat_codes = (
        t.packed()
    )
    n = t.n_slots
    # two copies of the same tree back to back
    tree_start = np.array([0, n, 2 * n], dtype=np.int64)
    double = impl.forest_fit(
        X,
        np.concatenate([feature, feature]),
        np.concatenate([threshold, threshold]),
        np.concatenate([missing_left, missing_left]),
        np.concatenate([left, left + n]).astype(np.int32),
        np.concatenate([right, right + n]).astype(np.int32),
        np.concatenate([cat_start, np.where(cat_start >= 0, cat_start + cat_codes.shape[0], -1)]),
        np.concatenate([cat_len, cat_len]),
        np.concatenate([cat_codes, cat_codes]),
        np.concatenate([t.leaf_value, t.leaf_value]),
        tree_start,
        0,
        2,
    )
    single = t.leaf_value[impl.route_rows(X, rows, *t.packed(), start=0)]
    assert np.allclose(double, 2 * single)
