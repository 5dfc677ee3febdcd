# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: batched stratified Fisher-Yates and permutation sums.

Swap targets are drawn by the caller, so these kernels are deterministic and
consume exactly the same random numbers as the numpy fallback.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline void _shuffle(long long[::1] perm, const long long[:, ::1] swaps, Py_ssize_t d,
                          const long long[::1] starts, const long long[::1] sizes,
                          Py_ssize_t K) noexcept nogil:
    cdef Py_ssize_t k, t, s, nk, j
    cdef long long tmp
    for k in range(K):
        s = starts[k]
        nk = sizes[k]
        for t in range(nk):
            perm[s + t] = t
        t = nk - 1
        while t > 0:
            j = swaps[d, s + t]
            tmp = perm[s + t]
            perm[s + t] = perm[s + j]
            perm[s + j] = tmp
            t -= 1


def fisher_yates(const long long[::1] starts, const long long[::1] sizes,
                 const long long[:, ::1] swaps):
    """Global images (m, n) of the stratified permutations encoded by ``swaps``."""
    cdef Py_ssize_t m = swaps.shape[0], n = swaps.shape[1], K = sizes.shape[0]
    cdef Py_ssize_t d, k, t, s
    out = np.empty((m, n), dtype=np.int64)
    cdef long long[:, ::1] o = out
    perm_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] perm = perm_arr
    with nogil:
        for d in range(m):
            _shuffle(perm, swaps, d, starts, sizes, K)
            for k in range(K):
                s = starts[k]
                for t in range(sizes[k]):
                    o[d, s + t] = s + perm[s + t]
    return out


def permutation_statistic(const double[::1] data, const long long[::1] offsets,
                          const long long[::1] starts, const long long[::1] sizes,
                          const long long[:, ::1] swaps):
    """``W = sum_i a[i, pi(i)]`` for every encoded permutation.

    ``data`` holds the row-major blocks back to back; block ``k`` starts at ``offsets[k]``.
    """
    cdef Py_ssize_t m = swaps.shape[0], n = swaps.shape[1], K = sizes.shape[0]
    cdef Py_ssize_t d, k, t, s, nk, off
    cdef double acc
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    perm_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] perm = perm_arr
    with nogil:
        for d in range(m):
            _shuffle(perm, swaps, d, starts, sizes, K)
            acc = 0.0
            for k in range(K):
                s = starts[k]
                nk = sizes[k]
                off = offsets[k]
                for t in range(nk):
                    acc += data[off + t * nk + perm[s + t]]
            o[d] = acc
    return out


def product_statistic(const double[::1] r, const double[::1] z,
                      const long long[::1] starts, const long long[::1] sizes,
                      const long long[:, ::1] swaps):
    """``W = sum_i r_i z_{pi(i)}`` for every encoded permutation."""
    cdef Py_ssize_t m = swaps.shape[0], n = swaps.shape[1], K = sizes.shape[0]
    cdef Py_ssize_t d, k, t, s
    cdef double acc
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    perm_arr = np.empty(n, dtype=np.int64)
    cdef long long[::1] perm = perm_arr
    with nogil:
        for d in range(m):
            _shuffle(perm, swaps, d, starts, sizes, K)
            acc = 0.0
            for k in range(K):
                s = starts[k]
                for t in range(sizes[k]):
                    acc += r[s + t] * z[s + perm[s + t]]
            o[d] = acc
    return out


def perm_sums(const double[:, ::1] block):
    """``sum_i b[i, sigma(i)]`` for all ``n!`` permutations (Heap's algorithm order)."""
    cdef Py_ssize_t n = block.shape[0]
    cdef Py_ssize_t total = 1, i, idx = 0, tmp
    for i in range(2, n + 1):
        total *= i
    out = np.empty(total, dtype=np.float64)
    cdef double[::1] o = out
    if n == 0:
        o[0] = 0.0
        return out
    cdef Py_ssize_t *perm = <Py_ssize_t *> malloc(n * sizeof(Py_ssize_t))
    cdef Py_ssize_t *c = <Py_ssize_t *> malloc(n * sizeof(Py_ssize_t))
    cdef double acc
    if perm == NULL or c == NULL:
        free(perm)
        free(c)
        raise MemoryError()
    with nogil:
        for i in range(n):
            perm[i] = i
            c[i] = 0
        acc = 0.0
        for i in range(n):
            acc += block[i, perm[i]]
        o[idx] = acc
        idx += 1
        i = 1
        while i < n:
            if c[i] < i:
                if i % 2 == 0:
                    tmp = perm[0]; perm[0] = perm[i]; perm[i] = tmp
                else:
                    tmp = perm[c[i]]; perm[c[i]] = perm[i]; perm[i] = tmp
                acc = 0.0
                for tmp in range(n):
                    acc += block[tmp, perm[tmp]]
                o[idx] = acc
                idx += 1
                c[i] += 1
                i = 1
            else:
                c[i] = 0
                i += 1
    free(perm)
    free(c)
    return out
