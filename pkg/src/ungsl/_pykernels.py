"""Reference implementations of the compiled kernels (numpy/scipy).

Used when the extension is unavailable or ``UNGSL_PURE_PYTHON=1``.
"""
import numpy as np
import scipy.sparse as sp


def _csr(indptr, indices, data, n_cols):
    n = len(indptr) - 1
    return sp.csr_matrix((data, indices, indptr), shape=(n, n_cols))


def spmm(indptr, indices, data, dense):
    # scipy's csr kernel accumulates row by row in stored (ascending column) order
    dense = np.ascontiguousarray(dense, dtype=np.float64)
    return np.asarray(_csr(indptr, indices, data, dense.shape[0]) @ dense)


def spmm_t(indptr, indices, data, dense, n_cols):
    dense = np.ascontiguousarray(dense, dtype=np.float64)
    return np.asarray(_csr(indptr, indices, data, n_cols).T @ dense)


def sddmm(indptr, indices, left, right):
    rows = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
    return np.einsum("ij,ij->i", left[rows], right[indices])


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    z = np.exp(x[~pos])
    out[~pos] = z / (1.0 + z)
    return out


def reweight(indptr, indices, data, confidence, eps, tau, beta):
    rows = np.repeat(np.arange(len(indptr) - 1), np.diff(indptr))
    offdiag = indices != rows
    x = confidence[indices] - eps[rows]
    smooth = offdiag & (x >= 0)
    s = _sigmoid(x[smooth])
    mult = np.where(offdiag, beta, 1.0)
    mult[smooth] = tau * s
    slope = np.zeros(len(indices))
    slope[smooth] = tau * s * (1.0 - s)
    return data * mult, mult, slope, int(offdiag.sum())


def row_topk(scores, k, skip_diagonal):
    s = np.array(scores, dtype=np.float64)
    n, ncol = s.shape
    if skip_diagonal:
        s[np.arange(n), np.arange(n)] = -np.inf
    kth = np.partition(s, ncol - k, axis=1)[:, ncol - k][:, None]
    greater = s > kth
    need = k - greater.sum(axis=1, keepdims=True)
    eq = s == kth
    keep = greater | (eq & (np.cumsum(eq, axis=1) <= need))
    cols = np.nonzero(keep)[1].reshape(n, k)
    vals = np.take_along_axis(s, cols, axis=1)
    order = np.argsort(-vals, axis=1, kind="stable")
    return np.take_along_axis(cols, order, axis=1).astype(np.int64)
