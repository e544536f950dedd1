# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled bitset kernels used by the pricing search.

Bit ``k`` of a bitset lives in word ``k // 64`` at position ``k % 64``.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t

cnp.import_array()

cdef extern from *:
    int __builtin_ctzll(unsigned long long) nogil
    int __builtin_popcountll(unsigned long long) nogil


def extend_scores(const uint64_t[:, ::1] parent_bits,
                  const uint64_t[:, ::1] node_bits,
                  const double[::1] weights,
                  const double[::1] best):
    cdef Py_ssize_t L = parent_bits.shape[0]
    cdef Py_ssize_t N = node_bits.shape[0]
    cdef Py_ssize_t W = parent_bits.shape[1]
    cdef cnp.ndarray[double, ndim=2] counts = np.zeros((L, N), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] sums = np.zeros((L, N), dtype=np.float64)
    cdef double[:, ::1] cv = counts
    cdef double[:, ::1] sv = sums
    cdef Py_ssize_t l, n, w
    cdef uint64_t word
    cdef int t
    cdef double c, s
    with nogil:
        for l in range(L):
            for n in range(N):
                c = 0.0
                s = 0.0
                for w in range(W):
                    word = parent_bits[l, w] & node_bits[n, w]
                    while word:
                        t = __builtin_ctzll(word)
                        c += weights[w * 64 + t]
                        s += best[w * 64 + t]
                        word &= word - 1
                cv[l, n] = c
                sv[l, n] = s
    return counts, sums


def action_sums(const uint64_t[:, ::1] bits, const double[:, ::1] values):
    cdef Py_ssize_t P = bits.shape[0]
    cdef Py_ssize_t W = bits.shape[1]
    cdef Py_ssize_t Q = values.shape[1]
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((P, Q), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t p, w, q, k
    cdef uint64_t word
    with nogil:
        for p in range(P):
            for w in range(W):
                word = bits[p, w]
                while word:
                    k = w * 64 + __builtin_ctzll(word)
                    for q in range(Q):
                        ov[p, q] += values[k, q]
                    word &= word - 1
    return out


def popcount(const uint64_t[:, ::1] bits):
    cdef Py_ssize_t P = bits.shape[0]
    cdef Py_ssize_t W = bits.shape[1]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.zeros(P, dtype=np.int64)
    cdef cnp.int64_t[::1] ov = out
    cdef Py_ssize_t p, w
    cdef cnp.int64_t c
    with nogil:
        for p in range(P):
            c = 0
            for w in range(W):
                c += __builtin_popcountll(bits[p, w])
            ov[p] = c
    return out
