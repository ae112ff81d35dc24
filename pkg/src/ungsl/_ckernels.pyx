# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops over CSR storage.

Every routine walks rows in ascending order and, within a row, stored
entries in ascending column order, so results are bit-identical to the
sequential reference loops in ``_pykernels``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

ctypedef cnp.int64_t idx_t


def spmm(const idx_t[::1] indptr, const idx_t[::1] indices,
         const double[::1] data, const double[:, ::1] dense):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t d = dense.shape[1]
    out_arr = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, k, c
    cdef idx_t j
    cdef double w
    with nogil:
        for i in range(n):
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                w = data[k]
                for c in range(d):
                    out[i, c] += w * dense[j, c]
    return out_arr


def spmm_t(const idx_t[::1] indptr, const idx_t[::1] indices,
           const double[::1] data, const double[:, ::1] dense, Py_ssize_t n_cols):
    """Transpose product: out[j] += a_ij * dense[i], rows visited ascending."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t d = dense.shape[1]
    out_arr = np.zeros((n_cols, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, k, c
    cdef idx_t j
    cdef double w
    with nogil:
        for i in range(n):
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                w = data[k]
                for c in range(d):
                    out[j, c] += w * dense[i, c]
    return out_arr


def sddmm(const idx_t[::1] indptr, const idx_t[::1] indices,
          const double[:, ::1] left, const double[:, ::1] right):
    """Per stored entry (i, j): dot(left[i], right[j])."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t d = left.shape[1]
    out_arr = np.empty(indices.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, k, c
    cdef idx_t j
    cdef double acc
    with nogil:
        for i in range(n):
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                acc = 0.0
                for c in range(d):
                    acc = acc + left[i, c] * right[j, c]
                out[k] = acc
    return out_arr


cdef inline double _sigmoid(double x) nogil:
    cdef double z
    if x >= 0:
        return 1.0 / (1.0 + exp(-x))
    z = exp(x)
    return z / (1.0 + z)


def reweight(const idx_t[::1] indptr, const idx_t[::1] indices,
             const double[::1] data, const double[::1] confidence,
             const double[::1] eps, double tau, double beta):
    """Scale each off-diagonal entry by psi(confidence[j] - eps[i]).

    Returns (new_data, multiplier, slope, n_evals) where ``slope`` is the
    derivative of psi at each entry (zero on the constant branch and on
    self-loops, whose multiplier is 1).
    """
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t m = indices.shape[0]
    out_arr = np.empty(m, dtype=np.float64)
    mult_arr = np.empty(m, dtype=np.float64)
    slope_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[::1] mult = mult_arr
    cdef double[::1] slope = slope_arr
    cdef Py_ssize_t i, k
    cdef idx_t j
    cdef double x, s
    cdef long long count = 0
    with nogil:
        for i in range(n):
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j == i:
                    mult[k] = 1.0
                    slope[k] = 0.0
                else:
                    x = confidence[j] - eps[i]
                    count += 1
                    if x >= 0:
                        s = _sigmoid(x)
                        mult[k] = tau * s
                        slope[k] = tau * s * (1.0 - s)
                    else:
                        mult[k] = beta
                        slope[k] = 0.0
                out[k] = data[k] * mult[k]
    return out_arr, mult_arr, slope_arr, count


def row_topk(const double[:, ::1] scores, Py_ssize_t k, bint skip_diagonal):
    """Column ids of the k largest scores per row, ties to the smaller id.

    Output rows are ordered by (score descending, column ascending).
    """
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t ncol = scores.shape[1]
    out_arr = np.empty((n, k), dtype=np.int64)
    cdef idx_t[:, ::1] out = out_arr
    vals_arr = np.empty(k, dtype=np.float64)
    cdef double[::1] vals = vals_arr
    cdef Py_ssize_t i, j, filled, p
    cdef double v
    with nogil:
        for i in range(n):
            filled = 0
            for j in range(ncol):
                if skip_diagonal and j == i:
                    continue
                v = scores[i, j]
                if filled == k and not (v > vals[k - 1]):
                    continue
                if filled < k:
                    p = filled
                    filled += 1
                else:
                    p = k - 1
                # strict comparison keeps earlier (smaller) columns ahead on ties
                while p > 0 and v > vals[p - 1]:
                    vals[p] = vals[p - 1]
                    out[i, p] = out[i, p - 1]
                    p -= 1
                vals[p] = v
                out[i, p] = j
    return out_arr
