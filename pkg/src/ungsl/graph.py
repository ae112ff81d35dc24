"""Graph representation, CSR adjacency storage and normalizations.

Edge direction convention: a stored entry ``S[i, j] > 0`` is an edge from
``v_j`` into ``v_i``'s aggregation, so row ``i`` lists the in-neighbors of
node ``i``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _backend


def _frozen(a, dtype):
    view = np.ascontiguousarray(a, dtype=dtype).view()
    view.setflags(write=False)
    return view


class SparseMatrix:
    """Immutable CSR matrix with columns strictly increasing within each row.

    Parameters
    ----------
    indptr, indices, data : array_like
        Standard CSR arrays. They are copied to contiguous int64/float64
        arrays and frozen.
    shape : tuple of int
        ``(n_rows, n_cols)``.
    """

    __slots__ = ("indptr", "indices", "data", "shape", "_rows")

    def __init__(self, indptr, indices, data, shape, *, check=True):
        # read-only views, so the caller's own buffers stay writable
        self.indptr = _frozen(indptr, np.int64)
        self.indices = _frozen(indices, np.int64)
        self.data = _frozen(data, np.float64)
        self.shape = (int(shape[0]), int(shape[1]))
        self._rows = None
        if check:
            self._validate()

    def _validate(self):
        n, m = self.shape
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0:
            raise ValueError("indptr has wrong length or does not start at 0")
        if self.indptr[-1] != len(self.indices) or len(self.indices) != len(self.data):
            raise ValueError("indptr, indices and data lengths disagree")
        if np.any(np.diff(self.indptr) < 0):
            raise ValueError("indptr must be nondecreasing")
        if len(self.indices):
            if self.indices.min() < 0 or self.indices.max() >= m:
                raise ValueError("column index out of range")
            step = np.diff(self.indices)
            row_start = np.zeros(len(self.indices), dtype=bool)
            row_start[self.indptr[:-1][np.diff(self.indptr) > 0]] = True
            if np.any((step <= 0) & ~row_start[1:]):
                raise ValueError("column indices must be strictly increasing within a row")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("stored weights must be finite")

    # construction -------------------------------------------------------
    @classmethod
    def from_coo(cls, rows, cols, vals, shape, **kwargs):
        """Build from coordinate triples; duplicate coordinates are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        n, m = int(shape[0]), int(shape[1])
        if len(rows) and (rows.min() < 0 or rows.max() >= n or cols.min() < 0 or cols.max() >= m):
            raise ValueError("coordinate out of range")
        keys = rows * m + cols
        order = np.argsort(keys, kind="stable")
        keys = keys[order]
        uniq, start = np.unique(keys, return_index=True)
        if len(uniq) == len(keys):
            data = vals[order]
        else:
            # sequential sum in input order for each duplicate group
            data = np.add.reduceat(vals[order], start) if len(keys) else vals[:0]
        urows, ucols = np.divmod(uniq, m) if m else (uniq, uniq)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, urows + 1, 1)
        return cls(np.cumsum(indptr), ucols, data, (n, m), **kwargs)

    @classmethod
    def from_dense(cls, dense, **kwargs):
        dense = np.asarray(dense, dtype=np.float64)
        rows, cols = np.nonzero(dense)
        return cls.from_coo(rows, cols, dense[rows, cols], dense.shape, **kwargs)

    @classmethod
    def identity(cls, n, **kwargs):
        return cls(np.arange(n + 1), np.arange(n), np.ones(n), (n, n), **kwargs)

    def with_data(self, data):
        """Same sparsity pattern, new weights."""
        out = type(self).__new__(type(self))
        SparseMatrix.__init__(out, self.indptr, self.indices, data, self.shape, check=False)
        out._rows = self._rows
        self._copy_extra(out)
        if not np.all(np.isfinite(out.data)):
            raise ValueError("stored weights must be finite")
        return out

    def _copy_extra(self, out):
        pass

    # views --------------------------------------------------------------
    @property
    def nnz(self):
        return len(self.indices)

    @property
    def rows(self):
        """Row id of every stored entry."""
        if self._rows is None:
            r = np.repeat(np.arange(self.shape[0], dtype=np.int64), np.diff(self.indptr))
            r.setflags(write=False)
            self._rows = r
        return self._rows

    def row_degrees(self):
        return np.diff(self.indptr)

    def row_sums(self):
        return np.bincount(self.rows, weights=self.data, minlength=self.shape[0])

    def to_dense(self):
        out = np.zeros(self.shape)
        out[self.rows, self.indices] = self.data
        return out

    def to_scipy(self):
        import scipy.sparse as sp

        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape)

    def keys(self):
        """Linear index ``row * n_cols + col`` of each stored entry (ascending)."""
        return self.rows * self.shape[1] + self.indices

    def positions_of(self, rows, cols):
        """Storage positions of coordinates known to be present."""
        keys = np.asarray(rows, dtype=np.int64) * self.shape[1] + np.asarray(cols, dtype=np.int64)
        pos = np.searchsorted(self.keys(), keys)
        return pos

    def transpose_with_perm(self):
        """Return ``(T, perm)`` with ``T.data == self.data[perm]``."""
        n, m = self.shape
        keys = self.indices * n + self.rows
        perm = np.argsort(keys, kind="stable")
        indptr = np.zeros(m + 1, dtype=np.int64)
        np.add.at(indptr, self.indices + 1, 1)
        t = SparseMatrix(np.cumsum(indptr), self.rows[perm], self.data[perm], (m, n), check=False)
        return t, perm

    @property
    def T(self):
        return self.transpose_with_perm()[0]

    def offdiag_mask(self):
        return self.indices != self.rows

    def support(self):
        """Set of stored (row, col) pairs."""
        return set(zip(self.rows.tolist(), self.indices.tolist()))

    def __repr__(self):
        return f"{type(self).__name__}(shape={self.shape}, nnz={self.nnz})"


class WeightedAdjacency(SparseMatrix):
    """Square, nonnegative sparse adjacency.

    ``symmetric_hint`` asserts that the support and weights are symmetric
    (within 1e-12); it is checked at construction.
    """

    __slots__ = ("symmetric_hint",)

    def __init__(self, indptr, indices, data, shape, *, symmetric_hint=False, check=True):
        super().__init__(indptr, indices, data, shape, check=check)
        self.symmetric_hint = bool(symmetric_hint)
        if self.shape[0] != self.shape[1]:
            raise ValueError(f"adjacency must be square, got {self.shape}")
        if check:
            if np.any(self.data < 0):
                raise ValueError("adjacency weights must be nonnegative")
            if self.symmetric_hint and not is_symmetric(self, 1e-12):
                raise ValueError("symmetric_hint set on an asymmetric matrix")

    def _copy_extra(self, out):
        out.symmetric_hint = False

    def with_data(self, data, symmetric_hint=False):
        out = super().with_data(data)
        if np.any(out.data < 0):
            raise ValueError("adjacency weights must be nonnegative")
        out.symmetric_hint = symmetric_hint
        return out

    @classmethod
    def from_sparse(cls, mat, symmetric_hint=False, check=True):
        return cls(mat.indptr, mat.indices, mat.data, mat.shape,
                   symmetric_hint=symmetric_hint, check=check)

    @property
    def n(self):
        return self.shape[0]

    def num_offdiag(self):
        return int(np.count_nonzero(self.offdiag_mask()))


def is_symmetric(mat, atol=1e-12):
    t, _ = mat.transpose_with_perm()
    if not np.array_equal(t.indptr, mat.indptr) or not np.array_equal(t.indices, mat.indices):
        return False
    return bool(np.all(np.abs(t.data - mat.data) <= atol))


def asymmetric_pairs(mat, atol=0.0):
    """Number of stored (i, j) whose mirror (j, i) is absent or differs by more than atol."""
    keys = mat.keys()
    mirror = mat.indices * mat.shape[1] + mat.rows
    pos = np.minimum(np.searchsorted(keys, mirror), max(len(keys) - 1, 0))
    found = keys[pos] == mirror if len(keys) else np.zeros(0, dtype=bool)
    differs = ~found | (np.abs(mat.data[pos] - mat.data) > atol)
    return int(np.count_nonzero(differs))


@dataclass(frozen=True)
class SplitMasks:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            arr = _frozen(getattr(self, name), bool)
            object.__setattr__(self, name, arr)
        if not (len(self.train) == len(self.val) == len(self.test)):
            raise ValueError("masks must share one length")
        if np.any(self.train & self.val) or np.any(self.train & self.test) or np.any(self.val & self.test):
            raise ValueError("train/val/test masks must be disjoint")

    @classmethod
    def from_indices(cls, n, train, val, test):
        masks = []
        for ids in (train, val, test):
            m = np.zeros(n, dtype=bool)
            m[np.asarray(ids, dtype=np.int64)] = True
            masks.append(m)
        return cls(*masks)


@dataclass(frozen=True)
class Graph:
    """Node set with adjacency, dense features, optional labels and splits."""

    adjacency: WeightedAdjacency
    features: np.ndarray
    labels: np.ndarray | None = None
    masks: SplitMasks | None = None
    n_classes: int | None = field(default=None)

    def __post_init__(self):
        x = _frozen(self.features, np.float64)
        object.__setattr__(self, "features", x)
        n = self.adjacency.n
        if x.ndim != 2 or x.shape[0] != n:
            raise ValueError(f"features must have {n} rows, got shape {x.shape}")
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.int64).copy()
            y.setflags(write=False)
            if y.shape != (n,):
                raise ValueError("labels must have one entry per node")
            object.__setattr__(self, "labels", y)
            if self.n_classes is None:
                object.__setattr__(self, "n_classes", int(y.max()) + 1 if np.any(y >= 0) else 0)
        if self.masks is not None and len(self.masks.train) != n:
            raise ValueError("mask length differs from node count")
        if self.labels is not None and self.masks is not None:
            used = self.masks.train | self.masks.val | self.masks.test
            if np.any(self.labels[used] < 0):
                raise ValueError("split nodes must carry labels")

    @property
    def n(self):
        return self.adjacency.n

    def replace(self, **changes):
        kw = dict(adjacency=self.adjacency, features=self.features, labels=self.labels,
                  masks=self.masks, n_classes=self.n_classes)
        kw.update(changes)
        return Graph(**kw)


# ---------------------------------------------------------------- operations

def spmm(adj, dense):
    """Sparse-dense product with ascending-column summation per row."""
    dense = np.ascontiguousarray(dense, dtype=np.float64)
    if dense.ndim != 2 or adj.shape[1] != dense.shape[0]:
        raise ValueError(f"dimension mismatch: {adj.shape} @ {dense.shape}")
    return _backend.kernels.spmm(adj.indptr, adj.indices, adj.data, dense)


def spmm_t(adj, dense):
    """``adj.T @ dense`` without materializing the transpose."""
    dense = np.ascontiguousarray(dense, dtype=np.float64)
    if dense.ndim != 2 or adj.shape[0] != dense.shape[0]:
        raise ValueError(f"dimension mismatch: {adj.shape}.T @ {dense.shape}")
    return _backend.kernels.spmm_t(adj.indptr, adj.indices, adj.data, dense, adj.shape[1])


def sddmm(adj, left, right):
    """``dot(left[i], right[j])`` for every stored entry (i, j)."""
    left = np.ascontiguousarray(left, dtype=np.float64)
    right = np.ascontiguousarray(right, dtype=np.float64)
    return _backend.kernels.sddmm(adj.indptr, adj.indices, left, right)


def sparse_sum(terms, n):
    """Weighted sum of square sparse matrices over the union of supports.

    Parameters
    ----------
    terms : list of (float, SparseMatrix)
        Terms with coefficient 0 are skipped entirely so they add no
        stored zeros.

    Returns
    -------
    WeightedAdjacency, list of ndarray
        The sum and, per term, the output position of each of its entries
        (``None`` for skipped terms).
    """
    live = [(c, m) for c, m in terms if c != 0]
    if not live:
        empty = WeightedAdjacency(np.zeros(n + 1), [], [], (n, n))
        return empty, [None] * len(terms)
    rows = np.concatenate([m.rows for _, m in live])
    cols = np.concatenate([m.indices for _, m in live])
    vals = np.concatenate([m.data if c == 1 else c * m.data for c, m in live])
    out = WeightedAdjacency.from_sparse(SparseMatrix.from_coo(rows, cols, vals, (n, n)), check=False)
    keys = out.keys()
    positions = []
    for c, m in terms:
        positions.append(None if c == 0 else np.searchsorted(keys, m.keys()))
    return out, positions


def symmetrize_with_map(adj):
    """Mean symmetrization plus the output positions of (i, j) and (j, i)."""
    t, perm = adj.transpose_with_perm()
    n = adj.n
    out, (pos_a, pos_t) = sparse_sum([(0.5, adj), (0.5, t)], n)
    # entry e of adj lands at pos_a[e] and, mirrored, at pos_t[inverse(perm)[e]]
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    return out, pos_a, pos_t[inv]


def symmetrize(adj):
    """``(S + S^T) / 2`` over the union of supports."""
    if adj.symmetric_hint:
        return adj
    out, _, _ = symmetrize_with_map(adj)
    return WeightedAdjacency.from_sparse(out, symmetric_hint=True, check=False)


def symmetrize_backward(grad_out, pos_a, pos_mirror):
    return 0.5 * (grad_out[pos_a] + grad_out[pos_mirror])


def with_self_loops(adj):
    """Return ``(A + I, positions of A's entries in the result)``."""
    n = adj.n
    out, (pos, _) = sparse_sum([(1.0, adj), (1.0, SparseMatrix.identity(n, check=False))], n)
    return out, pos


def normalize(adj, mode="symmetric", add_self_loops=True):
    """Degree normalization.

    ``row``: ``D^-1 (A + I)``; ``symmetric``: ``D^-1/2 (A + I) D^-1/2`` with
    ``D_ii = 1 + sum_j A_ij`` when self-loops are added.
    """
    return normalize_with_cache(adj, mode, add_self_loops)[0]


def normalize_with_cache(adj, mode="symmetric", add_self_loops=True):
    if adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency must be square")
    if np.any(adj.data < 0):
        raise ValueError("adjacency must be nonnegative")
    if add_self_loops:
        base, pos = with_self_loops(adj)
    else:
        base, pos = adj, np.arange(adj.nnz)
    deg = base.row_sums()
    if np.any(deg <= 0):
        raise ZeroDivisionError("zero-degree row cannot be normalized")
    if mode == "row":
        data = base.data / deg[base.rows]
    elif mode == "symmetric":
        inv_sqrt = 1.0 / np.sqrt(deg)
        data = base.data * inv_sqrt[base.rows] * inv_sqrt[base.indices]
    else:
        raise ValueError(f"unknown normalization mode {mode!r}")
    out = base.with_data(data)
    return out, (mode, base, deg, pos)


def normalize_backward(cache, out, grad_out):
    """Gradient of a row normalization with respect to the input weights.

    ``grad_out`` is aligned with ``out.data``; the result is aligned with
    the input adjacency's stored entries (added self-loops are constants).
    """
    mode, base, deg, pos = cache
    if mode != "row":
        raise NotImplementedError("backward is only defined for row normalization")
    rows = base.rows
    inner = np.bincount(rows, weights=grad_out * out.data, minlength=base.n)
    grad_base = (grad_out - inner[rows]) / deg[rows]
    return grad_base[pos]


# ------------------------------------------------------------------------ IO

def write_edges(path, adj):
    """Write ``src<TAB>dst<TAB>weight`` lines; ``S[i, j]`` becomes ``j i w``."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, j, w in zip(adj.rows.tolist(), adj.indices.tolist(), adj.data.tolist()):
            fh.write(f"{j}\t{i}\t{w!r}\n")


def read_edges(path, n=None, undirected=False):
    """Parse an edge file into a WeightedAdjacency.

    Duplicate lines are merged by summing. With ``undirected`` the reverse
    of every edge that lacks one is added with the same weight.
    """
    src, dst, w = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected 'src dst [weight]'")
            src.append(int(parts[0]))
            dst.append(int(parts[1]))
            w.append(float(parts[2]) if len(parts) == 3 else 1.0)
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if n is None:
        n = int(max(src.max(initial=-1), dst.max(initial=-1))) + 1
    mat = SparseMatrix.from_coo(dst, src, w, (n, n))
    if undirected:
        t = mat.T
        have = set(mat.keys().tolist())
        extra = np.array([k not in have for k in t.keys().tolist()], dtype=bool)
        mat = SparseMatrix.from_coo(
            np.concatenate([mat.rows, t.rows[extra]]),
            np.concatenate([mat.indices, t.indices[extra]]),
            np.concatenate([mat.data, t.data[extra]]), (n, n))
    adj = WeightedAdjacency.from_sparse(mat)
    if undirected and is_symmetric(adj):
        adj = WeightedAdjacency.from_sparse(adj, symmetric_hint=True)
    return adj


def undirected_edges(adj):
    """Upper-triangle (i < j) coordinate pairs of a symmetric adjacency."""
    keep = adj.rows < adj.indices
    return adj.rows[keep], adj.indices[keep]


def from_undirected(n, i, j, w=None):
    """Symmetric adjacency from an undirected edge list (no self-loops)."""
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    w = np.ones(len(i)) if w is None else np.asarray(w, dtype=np.float64)
    mat = SparseMatrix.from_coo(np.concatenate([i, j]), np.concatenate([j, i]),
                                np.concatenate([w, w]), (n, n))
    return WeightedAdjacency.from_sparse(mat, symmetric_hint=True)


def read_graph(directory, prefix="graph"):
    """Load ``<prefix>.edges/.features/.labels/.masks`` from a directory."""
    d = Path(directory)
    features = np.loadtxt(d / f"{prefix}.features", delimiter=",", ndmin=2)
    n = features.shape[0]
    adj = read_edges(d / f"{prefix}.edges", n=n, undirected=True)
    labels = None
    if (d / f"{prefix}.labels").exists():
        labels = np.loadtxt(d / f"{prefix}.labels", dtype=np.int64, ndmin=1)
    masks = None
    if (d / f"{prefix}.masks").exists():
        with open(d / f"{prefix}.masks", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if len(lines) < 3:
            raise ValueError("mask file needs three lines (train, val, test)")
        ids = [[int(t) for t in line.split()] for line in lines[:3]]
        masks = SplitMasks.from_indices(n, *ids)
    return Graph(adj, features, labels, masks)


def write_graph(graph, directory, prefix="graph"):
    d = Path(directory)
    os.makedirs(d, exist_ok=True)
    write_edges(d / f"{prefix}.edges", graph.adjacency)
    np.savetxt(d / f"{prefix}.features", graph.features, delimiter=",", fmt="%.17g")
    if graph.labels is not None:
        np.savetxt(d / f"{prefix}.labels", graph.labels, fmt="%d")
    if graph.masks is not None:
        with open(d / f"{prefix}.masks", "w", encoding="utf-8") as fh:
            for m in (graph.masks.train, graph.masks.val, graph.masks.test):
                fh.write(" ".join(map(str, np.flatnonzero(m).tolist())) + "\n")
