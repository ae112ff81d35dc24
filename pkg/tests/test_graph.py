import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from ungsl.graph import (
    Graph, SparseMatrix, SplitMasks, WeightedAdjacency, asymmetric_pairs, from_undirected,
    is_symmetric, normalize, normalize_backward, normalize_with_cache, read_edges, read_graph,
    sddmm, sparse_sum, spmm, spmm_t, symmetrize, symmetrize_backward, symmetrize_with_map,
    with_self_loops, write_edges, write_graph,
)

from conftest import path_graph, small_graph


def random_sparse(rng, n, density=0.3, nonneg=True):
    dense = rng.random((n, n)) * (rng.random((n, n)) < density)
    if not nonneg:
        dense *= rng.choice([-1.0, 1.0], size=(n, n))
    return dense


@st.composite
def dense_adjacency(draw, max_n=9):
    n = draw(st.integers(1, max_n))
    seed = draw(st.integers(0, 2**31 - 1))
    rng = np.random.default_rng(seed)
    return random_sparse(rng, n, density=draw(st.floats(0.0, 1.0)))


class TestSparseMatrix:
    def test_from_coo_sorts_and_sums_duplicates(self):
        m = SparseMatrix.from_coo([1, 0, 1, 1], [2, 1, 0, 2], [1.0, 2.0, 3.0, 4.0], (2, 3))
        assert_array_equal(m.indptr, [0, 1, 3])
        assert_array_equal(m.indices, [1, 0, 2])
        assert_array_equal(m.data, [2.0, 3.0, 5.0])

    def test_dense_roundtrip(self):
        rng = np.random.default_rng(1)
        dense = random_sparse(rng, 7, nonneg=False)
        assert_array_equal(SparseMatrix.from_dense(dense).to_dense(), dense)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            SparseMatrix.from_coo([0], [3], [1.0], (2, 3))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            SparseMatrix.from_coo([0], [0], [np.nan], (1, 1))

    def test_arrays_are_read_only(self):
        m = SparseMatrix.identity(3)
        with pytest.raises(ValueError):
            m.data[0] = 2.0

    def test_transpose_perm(self):
        rng = np.random.default_rng(2)
        m = SparseMatrix.from_dense(random_sparse(rng, 6))
        t, perm = m.transpose_with_perm()
        assert_array_equal(t.to_dense(), m.to_dense().T)
        assert_array_equal(t.data, m.data[perm])


class TestWeightedAdjacency:
    def test_rejects_negative_weights(self):
        with pytest.raises(ValueError):
            WeightedAdjacency.from_coo([0], [1], [-1.0], (2, 2))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            WeightedAdjacency.from_coo([0], [1], [1.0], (2, 3))

    def test_offdiag_count(self):
        adj = WeightedAdjacency.from_coo([0, 0, 1], [0, 1, 0], [1.0, 2.0, 3.0], (2, 2))
        assert adj.num_offdiag() == 2

    def test_from_undirected_is_symmetric(self):
        adj = from_undirected(4, [0, 1], [1, 3], [2.0, 5.0])
        assert is_symmetric(adj)
        assert adj.symmetric_hint
        assert asymmetric_pairs(adj) == 0

    def test_asymmetric_pairs_counts_both_kinds(self):
        # (0,1)/(1,0) differ in weight; (2,0) has no mirror
        adj = WeightedAdjacency.from_coo([0, 1, 2], [1, 0, 0], [1.0, 2.0, 1.0], (3, 3))
        assert asymmetric_pairs(adj) == 3


class TestGraph:
    def test_feature_row_count_checked(self):
        with pytest.raises(ValueError):
            Graph(path_graph(3), np.zeros((2, 1)))

    def test_masks_must_be_disjoint(self):
        with pytest.raises(ValueError):
            SplitMasks.from_indices(4, [0, 1], [1], [2])

    def test_n_classes_inferred(self):
        g = Graph(path_graph(3), np.zeros((3, 1)), labels=[0, 2, 1])
        assert g.n_classes == 3


class TestProducts:
    def test_spmm_matches_dense(self, backend):
        rng = np.random.default_rng(3)
        dense = random_sparse(rng, 8)
        X = rng.standard_normal((8, 4))
        adj = WeightedAdjacency.from_dense(dense)
        assert_allclose(spmm(adj, X), dense @ X, rtol=1e-12, atol=1e-12)
        assert_allclose(spmm_t(adj, X), dense.T @ X, rtol=1e-12, atol=1e-12)

    def test_sddmm_samples_product(self, backend):
        rng = np.random.default_rng(4)
        adj = WeightedAdjacency.from_dense(random_sparse(rng, 6))
        L, R = rng.standard_normal((6, 3)), rng.standard_normal((6, 3))
        full = L @ R.T
        assert_allclose(sddmm(adj, L, R), full[adj.rows, adj.indices], rtol=1e-12)

    def test_spmm_shape_mismatch(self):
        with pytest.raises(ValueError):
            spmm(path_graph(3), np.zeros((4, 2)))


class TestSparseSum:
    def test_union_of_supports(self):
        a = WeightedAdjacency.from_coo([0], [1], [1.0], (3, 3))
        b = WeightedAdjacency.from_coo([0, 2], [1, 0], [2.0, 4.0], (3, 3))
        s, (pa, pb) = sparse_sum([(0.5, a), (2.0, b)], 3)
        assert_array_equal(s.to_dense(), 0.5 * a.to_dense() + 2.0 * b.to_dense())
        assert_array_equal(s.data[pa], [4.5])
        assert_array_equal(pb, [0, 1])

    def test_zero_coefficient_adds_no_entries(self):
        a = path_graph(4)
        b = WeightedAdjacency.from_coo([0], [3], [1.0], (4, 4))
        s, pos = sparse_sum([(1.0, a), (0.0, b)], 4)
        assert s.nnz == a.nnz
        assert pos[1] is None


class TestSymmetrize:
    def test_mean_of_transpose(self):
        rng = np.random.default_rng(5)
        dense = random_sparse(rng, 7)
        out = symmetrize(WeightedAdjacency.from_dense(dense))
        assert_allclose(out.to_dense(), 0.5 * (dense + dense.T))
        assert asymmetric_pairs(out) == 0

    def test_backward_is_adjoint(self):
        rng = np.random.default_rng(6)
        adj = WeightedAdjacency.from_dense(random_sparse(rng, 6))
        out, pa, pm = symmetrize_with_map(adj)
        g = rng.standard_normal(out.nnz)
        v = rng.random(adj.nnz)
        forward = adj.with_data(v)
        lhs = g @ symmetrize_with_map(forward)[0].data
        rhs = symmetrize_backward(g, pa, pm) @ v
        assert_allclose(lhs, rhs, rtol=1e-12)

    @given(dense_adjacency())
    @settings(max_examples=40, deadline=None)
    def test_idempotent(self, dense):
        once = symmetrize(WeightedAdjacency.from_dense(dense))
        twice = symmetrize(WeightedAdjacency.from_dense(once.to_dense()))
        assert_allclose(once.to_dense(), twice.to_dense(), atol=1e-15)


class TestNormalize:
    def test_row_normalized_rows_sum_to_one(self):
        adj = small_graph().adjacency
        a = normalize(adj, "row")
        assert_allclose(a.row_sums(), 1.0, atol=1e-15)

    def test_symmetric_matches_dense_formula(self):
        adj = path_graph(5)
        dense = adj.to_dense() + np.eye(5)
        d = dense.sum(1) ** -0.5
        assert_allclose(normalize(adj, "symmetric").to_dense(), d[:, None] * dense * d[None, :])

    def test_isolated_node_keeps_self_weight_one(self):
        adj = WeightedAdjacency.from_coo([0, 1], [1, 0], [1.0, 1.0], (3, 3))
        a = normalize(adj, "row").to_dense()
        assert a[2, 2] == 1.0

    def test_zero_row_without_self_loops_raises(self):
        adj = WeightedAdjacency.from_coo([0, 1], [1, 0], [1.0, 1.0], (3, 3))
        with pytest.raises(ZeroDivisionError):
            normalize(adj, "row", add_self_loops=False)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            normalize(path_graph(3), "column")

    def test_self_loops_added_once(self):
        out, pos = with_self_loops(path_graph(4))
        assert_array_equal(np.diag(out.to_dense()), np.ones(4))
        assert len(pos) == path_graph(4).nnz

    def test_row_backward_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        adj = WeightedAdjacency.from_dense(random_sparse(rng, 6, 0.5))
        G = rng.standard_normal(normalize(adj, "row").nnz)

        def f(data):
            return G @ normalize(adj.with_data(data), "row").data

        out, cache = normalize_with_cache(adj, "row")
        grad = normalize_backward(cache, out, G)
        h = 1e-6
        num = np.empty(adj.nnz)
        for e in range(adj.nnz):
            up, down = adj.data.copy(), adj.data.copy()
            up[e] += h
            down[e] -= h
            num[e] = (f(up) - f(down)) / (2 * h)
        assert_allclose(grad, num, rtol=1e-6, atol=1e-9)

    @given(dense_adjacency())
    @settings(max_examples=50, deadline=None)
    def test_row_stochastic_property(self, dense):
        a = normalize(WeightedAdjacency.from_dense(dense), "row")
        assert np.all(a.data >= 0)
        assert_allclose(a.row_sums(), 1.0, atol=1e-12)


class TestEdgeIO:
    def test_direction_convention(self, tmp_path):
        p = tmp_path / "g.edges"
        p.write_text("0 1 2.5\n")
        adj = read_edges(p, n=2)
        assert adj.to_dense()[1, 0] == 2.5
        assert adj.to_dense()[0, 1] == 0.0

    def test_undirected_mirrors_missing_reverse(self, tmp_path):
        p = tmp_path / "g.edges"
        p.write_text("# comment\n0 1\n2 1 3.0\n1 2 3.0\n")
        adj = read_edges(p, undirected=True)
        assert is_symmetric(adj)
        assert adj.nnz == 4

    def test_bad_line(self, tmp_path):
        p = tmp_path / "g.edges"
        p.write_text("0 1 2 3\n")
        with pytest.raises(ValueError):
            read_edges(p)

    def test_write_read_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        adj = WeightedAdjacency.from_dense(random_sparse(rng, 9))
        write_edges(tmp_path / "s.edges", adj)
        back = read_edges(tmp_path / "s.edges", n=9)
        assert_array_equal(back.indptr, adj.indptr)
        assert_array_equal(back.indices, adj.indices)
        assert_array_equal(back.data, adj.data)

    def test_graph_directory_roundtrip(self, tmp_path):
        g = small_graph()
        write_graph(g, tmp_path)
        back = read_graph(tmp_path)
        assert_array_equal(back.adjacency.to_dense(), g.adjacency.to_dense())
        assert_array_equal(back.features, g.features)
        assert_array_equal(back.labels, g.labels)
        assert_array_equal(back.masks.test, g.masks.test)
