# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled moment accumulation.

Builds the stacked design rows in one fused C pass (no intermediate
temporaries) and accumulates the cross-moment blocks with a direct BLAS
dgemm call. Arithmetic matches the NumPy backend operation for
operation, so results are bitwise identical.
"""

import numpy as np

from scipy.linalg.cython_blas cimport dgemm

NAME = "cython"
COMPILED = True


def accumulate(const double[:, ::1] KU, const double[:, ::1] DU,
               const double[:, ::1] KV, const double[:, ::1] DV,
               const double[::1] w, const double[::1] y,
               double[:, ::1] out):
    """out (5M, 3M) += L @ R.T for one chunk of P pairs."""
    cdef Py_ssize_t m = KU.shape[0]
    cdef Py_ssize_t p = KU.shape[1]
    if out.shape[0] != 5 * m or out.shape[1] != 3 * m:
        raise ValueError("out must have shape (5M, 3M)")
    if (DU.shape[0] != m or DU.shape[1] != p or KV.shape[0] != m
            or KV.shape[1] != p or DV.shape[0] != m or DV.shape[1] != p
            or w.shape[0] != p or y.shape[0] != p):
        raise ValueError("chunk arrays have inconsistent shapes")
    if p == 0:
        return

    L_arr = np.empty((5 * m, p))
    R_arr = np.empty((3 * m, p))
    cdef double[:, ::1] L = L_arr
    cdef double[:, ::1] R = R_arr

    cdef Py_ssize_t a, j
    cdef double k, kdu, ky, kv, kvdv, du, dv

    # BLAS takes the C-ordered buffers as their column-major transposes:
    # out^T (3M x 5M) += R (3M x P) @ L^T (P x 5M).
    cdef int bm = <int>(3 * m)
    cdef int bn = <int>(5 * m)
    cdef int bk = <int>p
    cdef double alpha = 1.0
    cdef double beta = 1.0

    with nogil:
        for a in range(m):
            for j in range(p):
                k = KU[a, j] * w[j]
                du = DU[a, j]
                kdu = k * du
                ky = k * y[j]
                L[a, j] = k
                L[m + a, j] = kdu
                L[2 * m + a, j] = kdu * du
                L[3 * m + a, j] = ky
                L[4 * m + a, j] = ky * du
            for j in range(p):
                kv = KV[a, j]
                dv = DV[a, j]
                kvdv = kv * dv
                R[a, j] = kv
                R[m + a, j] = kvdv
                R[2 * m + a, j] = kvdv * dv
        dgemm("T", "N", &bm, &bn, &bk, &alpha,
              &R[0, 0], &bk, &L[0, 0], &bk, &beta, &out[0, 0], &bm)
