# cython: language_level=3
"""Compiled kernels: fused inner-product scan + top-n selection, and the
batch joint angular score. Semantics match raggate._pykernels exactly;
the fused scan avoids materialising and sorting the full score array."""

from libc.math cimport sqrt

import numpy as np

cimport numpy as cnp

cnp.import_array()

NAME = "compiled"


cdef inline bint _worse(double s_a, long long r_a, double s_b, long long r_b) nogil:
    # "worse" = ranked after under (score desc, tie_rank asc)
    if s_a != s_b:
        return s_a < s_b
    return r_a > r_b


def topk_ip(double[:, ::1] matrix, double[::1] probe, long long[::1] tie_rank, int n):
    """Top-n rows of ``matrix`` by inner product with ``probe``.

    Returns (indices, scores) ordered by score descending, tie_rank
    ascending. ``n`` is clamped to the number of rows. Maintains a
    min-heap of the current best n rows keyed by "worseness", so the
    root is always the next candidate for eviction.
    """
    cdef Py_ssize_t nrows = matrix.shape[0]
    cdef Py_ssize_t dim = matrix.shape[1]
    cdef int keep = n if n < nrows else <int> nrows
    if keep <= 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64)

    cdef cnp.ndarray[cnp.float64_t, ndim=1] heap_score = np.empty(keep, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] heap_rank = np.empty(keep, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] heap_idx = np.empty(keep, dtype=np.int64)
    cdef double[::1] hs = heap_score
    cdef long long[::1] hr = heap_rank
    cdef long long[::1] hi = heap_idx

    cdef Py_ssize_t i, j, pos, child, parent
    cdef int count = 0
    cdef double s, tmp_s
    cdef long long tmp_r, tmp_i

    with nogil:
        for i in range(nrows):
            s = 0.0
            for j in range(dim):
                s += matrix[i, j] * probe[j]

            if count < keep:
                # sift-up insert
                pos = count
                hs[pos] = s
                hr[pos] = tie_rank[i]
                hi[pos] = i
                count += 1
                while pos > 0:
                    parent = (pos - 1) >> 1
                    if _worse(hs[pos], hr[pos], hs[parent], hr[parent]):
                        tmp_s = hs[pos]; hs[pos] = hs[parent]; hs[parent] = tmp_s
                        tmp_r = hr[pos]; hr[pos] = hr[parent]; hr[parent] = tmp_r
                        tmp_i = hi[pos]; hi[pos] = hi[parent]; hi[parent] = tmp_i
                        pos = parent
                    else:
                        break
            elif _worse(hs[0], hr[0], s, tie_rank[i]):
                # replace root, sift down
                hs[0] = s
                hr[0] = tie_rank[i]
                hi[0] = i
                pos = 0
                while True:
                    child = 2 * pos + 1
                    if child >= keep:
                        break
                    if child + 1 < keep and _worse(hs[child + 1], hr[child + 1], hs[child], hr[child]):
                        child += 1
                    if _worse(hs[child], hr[child], hs[pos], hr[pos]):
                        tmp_s = hs[pos]; hs[pos] = hs[child]; hs[child] = tmp_s
                        tmp_r = hr[pos]; hr[pos] = hr[child]; hr[child] = tmp_r
                        tmp_i = hi[pos]; hi[pos] = hi[child]; hi[child] = tmp_i
                        pos = child
                    else:
                        break

    order = np.lexsort((heap_rank, -heap_score))
    return heap_idx[order], heap_score[order]


def joint_scores(s1, s2):
    """Batch joint angular score cos(arccos s1 + arccos s2), clamped inputs."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a = np.ascontiguousarray(s1, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] b = np.ascontiguousarray(s2, dtype=np.float64)
    if a.shape[0] != b.shape[0]:
        raise ValueError("s1 and s2 must have equal length")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(a.shape[0], dtype=np.float64)
    cdef Py_ssize_t i
    cdef double x, y
    with nogil:
        for i in range(a.shape[0]):
            x = a[i]
            if x > 1.0:
                x = 1.0
            elif x < -1.0:
                x = -1.0
            y = b[i]
            if y > 1.0:
                y = 1.0
            elif y < -1.0:
                y = -1.0
            out[i] = x * y - sqrt(1.0 - x * x) * sqrt(1.0 - y * y)
    return out
