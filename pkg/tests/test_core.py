import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netrecon.core import (
    ConvergenceTrace,
    DiagonalWriteError,
    DistanceCache,
    RecursionTrace,
    SampleMatrix,
    ShapeError,
    SparseWeights,
    make_rng,
    set_edge,
)
from oracles import dense_sums


def _bound(n=5, m=7, seed=0):
    X = SampleMatrix(make_rng(seed).standard_normal((n, m)))
    return SparseWeights(n, m), X


def test_zero_write_on_empty_state_stores_nothing():
    state, X = _bound()
    set_edge(state, 1, 2, 0.0, X)
    assert len(state) == 0
    assert np.all(state.sums == 0)


def test_write_then_erase_restores_sums():
    state, X = _bound()
    before = state.sums.copy()
    set_edge(state, 1, 2, 1.0, X)
    assert state.get(2, 1) == 1.0
    set_edge(state, 1, 2, 0.0, X)
    assert len(state) == 0
    np.testing.assert_allclose(state.sums, before, atol=1e-12, rtol=0)


def test_random_updates_match_dense_recomputation():
    rng = make_rng(7)
    n, m = 10, 13
    X = SampleMatrix(rng.standard_normal((n, m)))
    state = SparseWeights(n, m)
    W = np.zeros((n, n))
    for _ in range(100):
        i, j = rng.choice(n, 2, replace=False)
        w = 0.0 if rng.random() < 0.2 else rng.normal(0, 3)
        set_edge(state, int(i), int(j), w, X)
        W[i, j] = W[j, i] = w
    ref = dense_sums(W, X.values)
    np.testing.assert_allclose(state.sums, ref, rtol=1e-9, atol=1e-12)
    assert len(state) == np.count_nonzero(np.triu(W, 1))
    np.testing.assert_array_equal(state.dense(), W)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.sampled_from([0.0, 1.5, -2.0, 1e-300])),
                max_size=40))
def test_edge_map_invariants(ops):
    state, X = _bound(6, 4)
    ref = {}
    for i, j, w in ops:
        if i == j:
            with pytest.raises(DiagonalWriteError):
                set_edge(state, i, j, w, X)
            continue
        set_edge(state, i, j, w, X)
        key = (min(i, j), max(i, j))
        if w == 0.0:
            ref.pop(key, None)
        else:
            ref[key] = w
    assert {(i, j): w for i, j, w in state.edges()} == ref
    ii, jj, ww = state.arrays()
    assert np.all(ii < jj) and np.all(ww != 0)
    fresh = SparseWeights.from_edges(6, ii, jj, ww, X=X)
    np.testing.assert_allclose(state.sums, fresh.sums, rtol=1e-9, atol=1e-12)


def test_errors():
    state, X = _bound()
    with pytest.raises(DiagonalWriteError):
        set_edge(state, 3, 3, 1.0, X)
    with pytest.raises(ShapeError):
        set_edge(state, 0, 1, 1.0, SampleMatrix(np.ones((5, 2))))
    with pytest.raises(ShapeError):
        SparseWeights(3, theta=[1.0, 2.0])
    with pytest.raises(ValueError):
        SampleMatrix([[1.0, 0.5]], ising=True)
    with pytest.raises(ValueError):
        SampleMatrix([[1.0, np.nan]])
    with pytest.raises(ShapeError):
        SampleMatrix(np.ones(4))


def test_copy_is_independent():
    state, X = _bound()
    set_edge(state, 0, 1, 2.0, X)
    dup = state.copy()
    set_edge(dup, 0, 1, 5.0, X)
    assert state.get(0, 1) == 2.0 and dup.get(0, 1) == 5.0
    assert not np.shares_memory(state.sums, dup.sums)


def test_recursion_trace_halving():
    tr = RecursionTrace()
    tr.add(0, 100, 4, False)
    tr.add(1, 50, 8, False)
    tr.add(2, 20, 0, True)
    assert tr.halving_holds()
    assert tr.to_tsv().splitlines()[0] == "0\t100\t4\t0"
    tr.add(3, 11, 0, True)
    assert not tr.halving_holds()


def test_convergence_trace_rejects_negative_delta():
    tr = ConvergenceTrace()
    tr.add(1, 0.5, 0.1, 10)
    with pytest.raises(ValueError):
        tr.add(2, -1e-3, 0.2, 10)
    assert tr.n_iter == 1


def test_distance_cache_memoizes_and_canonicalizes():
    calls = []

    def oracle(ii, jj):
        calls.append(len(ii))
        return (ii * 10 + jj).astype(float)

    cache = DistanceCache()
    d = cache.wrap(oracle, 10)
    first = d(np.array([3, 1, 1]), np.array([1, 3, 4]))
    # (3,1) and (1,3) are one unordered pair, evaluated once
    assert calls == [2]
    np.testing.assert_array_equal(first, [13.0, 13.0, 14.0])
    again = d(np.array([4]), np.array([1]))
    assert calls == [2] and again[0] == 14.0
    assert cache.misses == 2 and cache.hits == 2
    cache.clear()
    d(np.array([4]), np.array([1]))
    assert calls == [2, 1] and cache.generation == 1


def test_distance_cache_rejects_non_finite():
    d = DistanceCache().wrap(lambda ii, jj: np.full(len(ii), np.inf), 4)
    with pytest.raises(FloatingPointError):
        d(np.array([0]), np.array([1]))


def test_rng_is_deterministic():
    a = make_rng(123).standard_normal(5)
    b = make_rng(123).standard_normal(5)
    np.testing.assert_array_equal(a, b)


def test_distance_cache_grows_and_clear_keeps_the_table():
    cache = DistanceCache(capacity=16)
    d = cache.wrap(lambda ii, jj: (ii * 1000 + jj).astype(float), 1000)
    rng = make_rng(2)
    ii = rng.integers(0, 1000, 5000)
    jj = (ii + 1 + rng.integers(0, 998, 5000)) % 1000
    got = d(ii, jj)
    lo, hi = np.minimum(ii, jj), np.maximum(ii, jj)
    np.testing.assert_array_equal(got, lo * 1000.0 + hi)
    assert len(cache) == len(set(zip(lo.tolist(), hi.tolist())))
    tab = cache._tab
    cache.clear()
    assert len(cache) == 0 and cache._tab is tab
    misses = cache.misses
    np.testing.assert_array_equal(d(ii[:10], jj[:10]), got[:10])
    assert cache.misses > misses
