# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel core: float matmul with f64 accumulation and the
shift-accumulate integer linear inner loop."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "ext"


def matmul_f64acc(const float[:, ::1] a, const float[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t k = a.shape[1]
    cdef Py_ssize_t n = b.shape[1]
    out = np.empty((m, n), dtype=np.float32)
    row = np.empty(n, dtype=np.float64)
    cdef float[:, ::1] o = out
    cdef double[::1] acc = row
    cdef Py_ssize_t i, j, p
    cdef double av
    with nogil:
        for i in range(m):
            for j in range(n):
                acc[j] = 0.0
            for p in range(k):
                av = <double> a[i, p]
                for j in range(n):
                    acc[j] += av * <double> b[p, j]
            for j in range(n):
                o[i, j] = <float> acc[j]
    return out


def shift_accumulate(const long long[:, ::1] xq,
                     long long zero_point,
                     const signed char[:, ::1] sign,
                     const short[:, ::1] shift,
                     const unsigned char[:, ::1] is_zero,
                     long long[:, ::1] out):
    cdef Py_ssize_t m = xq.shape[0]
    cdef Py_ssize_t k = xq.shape[1]
    cdef Py_ssize_t n = sign.shape[1]
    # fold the zero mask into the sign so the hot loop is branchless
    eff = np.where(np.asarray(is_zero, dtype=bool), 0, np.asarray(sign)).astype(np.int8)
    shamt = np.ascontiguousarray(shift, dtype=np.uint8)
    cdef const signed char[:, ::1] s8 = eff
    cdef const unsigned char[:, ::1] sh = shamt
    cdef Py_ssize_t i, j, p
    cdef long long v
    with nogil:
        for i in range(m):
            for j in range(n):
                out[i, j] = 0
            for p in range(k):
                v = xq[i, p] - zero_point
                if v == 0:
                    continue
                for j in range(n):
                    # shift via unsigned keeps C semantics defined for
                    # negative accumulands (two's complement)
                    out[i, j] += (<long long> s8[p, j]) * (
                        <long long> (<unsigned long long> v << sh[p, j])
                    )
    return None
