"""Compiled kernels against the numpy/scipy fallback and dense oracles."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from ungsl import _backend, _pykernels
from ungsl.graph import WeightedAdjacency

ck = pytest.importorskip("ungsl._ckernels")


def random_adj(rng, n, density=0.3):
    dense = rng.random((n, n)) * (rng.random((n, n)) < density)
    return WeightedAdjacency.from_dense(dense)


@st.composite
def kernel_case(draw):
    n = draw(st.integers(1, 12))
    rng = np.random.default_rng(draw(st.integers(0, 2**31 - 1)))
    adj = random_adj(rng, n, draw(st.floats(0.0, 1.0)))
    return adj, rng


class TestEquivalence:
    @given(kernel_case())
    @settings(max_examples=60, deadline=None)
    def test_products_agree(self, case):
        adj, rng = case
        n = adj.shape[0]
        X = rng.standard_normal((n, 3))
        Y = rng.standard_normal((n, 3))
        args = (adj.indptr, adj.indices, adj.data)
        assert_allclose(ck.spmm(*args, X), _pykernels.spmm(*args, X), rtol=1e-13, atol=1e-13)
        assert_allclose(ck.spmm_t(*args, X, n), _pykernels.spmm_t(*args, X, n), rtol=1e-13, atol=1e-13)
        assert_allclose(ck.sddmm(adj.indptr, adj.indices, X, Y),
                        _pykernels.sddmm(adj.indptr, adj.indices, X, Y), rtol=1e-13, atol=1e-13)

    @given(kernel_case(), st.floats(0.1, 5.0), st.floats(0.0, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_reweight_agrees(self, case, tau, beta):
        adj, rng = case
        n = adj.shape[0]
        c = rng.random(n)
        eps = rng.random(n)
        a = ck.reweight(adj.indptr, adj.indices, adj.data, c, eps, tau, beta)
        b = _pykernels.reweight(adj.indptr, adj.indices, adj.data, c, eps, tau, beta)
        for x, y in zip(a[:3], b[:3]):
            assert_allclose(x, y, rtol=1e-14, atol=1e-15)
        assert a[3] == b[3]

    @given(st.integers(2, 10), st.integers(1, 4), st.integers(0, 2**31 - 1), st.booleans())
    @settings(max_examples=60, deadline=None)
    def test_row_topk_agrees_with_ties(self, n, k, seed, skip):
        k = min(k, n - 1)
        rng = np.random.default_rng(seed)
        scores = rng.integers(0, 3, (n, n)).astype(float)  # many ties
        assert_array_equal(ck.row_topk(scores, k, skip), _pykernels.row_topk(scores, k, skip))


class TestRowTopk:
    def test_ties_break_by_lowest_column(self):
        scores = np.array([[0.0, 1.0, 1.0, 1.0], [2.0, 2.0, 0.0, 2.0]])
        out = _pykernels.row_topk(scores, 2, False)
        assert_array_equal(out, [[1, 2], [0, 1]])

    def test_diagonal_skipped(self):
        scores = np.array([[9.0, 1.0, 2.0], [0.0, 9.0, 1.0], [3.0, 1.0, 9.0]])
        out = _pykernels.row_topk(scores, 1, True)
        assert_array_equal(out[:, 0], [2, 2, 0])

    def test_sorted_descending(self):
        rng = np.random.default_rng(1)
        s = rng.standard_normal((5, 8))
        out = _pykernels.row_topk(s, 4, False)
        vals = np.take_along_axis(s, out, axis=1)
        assert np.all(np.diff(vals, axis=1) <= 0)
        assert_array_equal(vals[:, 0], s.max(axis=1))


class TestSelection:
    def test_use_switches_and_rejects_unknown(self):
        previous = _backend.NAME
        try:
            _backend.use("python")
            assert _backend.kernels is _pykernels
            with pytest.raises(ValueError):
                _backend.use("fortran")
        finally:
            _backend.use(previous)
