# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the conditioning kernels (see _pykernels for docs)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

NAME = "cython"


def hermite_ratio_table(x, int nmax):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t m, M = xv.shape[0]
    cdef int n
    out = np.empty((M, nmax + 1), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double s2 = sqrt(2.0)
    with nogil:
        for m in range(M):
            o[m, 0] = 1.0
            if nmax >= 1:
                o[m, 1] = s2 * xv[m]
            for n in range(1, nmax):
                o[m, n + 1] = (sqrt(2.0 / (n + 1)) * xv[m] * o[m, n]
                               - sqrt(<double>n / (n + 1)) * o[m, n - 1])
    return out


def coherent_ratio_table(a, int nmax):
    cdef const double complex[::1] av = np.ascontiguousarray(a, dtype=np.complex128)
    cdef Py_ssize_t m, M = av.shape[0]
    cdef int n
    cdef double complex ac
    out = np.empty((M, nmax + 1), dtype=np.complex128)
    cdef double complex[:, ::1] o = out
    with nogil:
        for m in range(M):
            ac = av[m].conjugate()
            o[m, 0] = 1.0
            for n in range(1, nmax + 1):
                o[m, n] = o[m, n - 1] * ac / sqrt(<double>n)
    return out


def condition_contract(weights, psi, lop):
    cdef const double complex[:, ::1] w = np.ascontiguousarray(weights, dtype=np.complex128)
    cdef const double complex[:, ::1] p = np.ascontiguousarray(psi, dtype=np.complex128)
    cdef const double complex[:, ::1] L = np.ascontiguousarray(lop, dtype=np.complex128)
    cdef Py_ssize_t M = w.shape[0], B = w.shape[1], S = p.shape[0]
    cdef Py_ssize_t m, b, s, t
    cdef double complex acc, lk, num
    cdef double nrm
    kets = np.empty((M, S), dtype=np.complex128)
    norm2 = np.empty(M, dtype=np.float64)
    lexp = np.empty(M, dtype=np.complex128)
    cdef double complex[:, ::1] k = kets
    cdef double[::1] n2 = norm2
    cdef double complex[::1] le = lexp
    with nogil:
        for m in range(M):
            nrm = 0.0
            for s in range(S):
                acc = 0.0
                for b in range(B):
                    acc = acc + w[m, b] * p[s, b]
                k[m, s] = acc
                nrm = nrm + acc.real * acc.real + acc.imag * acc.imag
            n2[m] = nrm
            num = 0.0
            for s in range(S):
                lk = 0.0
                for t in range(S):
                    lk = lk + L[s, t] * k[m, t]
                num = num + k[m, s].conjugate() * lk
            if nrm > 0.0:
                le[m] = num / nrm
            else:
                le[m] = 0.0
    return kets, norm2, lexp
