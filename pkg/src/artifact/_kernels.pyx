# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled O(N^2) lattice sums for the principal-value operators.

Inputs are padded arrays of length 3n-2; grid node i sits at index
i + n - 1 and the padding holds far-field model values.  The sums run
over offsets j = 1..n-1 with half weight on the last offset, so the
caller can close the integral with an analytic tail beyond t = (n-1)h.
"""
import numpy as np


def pv_linear_sum(const double[::1] fpad, Py_ssize_t n, double h):
    """sum_j w_j (2 f_i - f_{i+j} - f_{i-j}) / (j h)^2 for every node i."""
    cdef Py_ssize_t i, j, o = n - 1, last = n - 1
    cdef double fi2, acc
    cdef double[::1] inv = 1.0 / np.arange(1, n, dtype=np.float64) ** 2
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    for i in range(n):
        fi2 = 2.0 * fpad[o + i]
        acc = 0.0
        for j in range(1, last):
            acc += (fi2 - fpad[o + i + j] - fpad[o + i - j]) * inv[j - 1]
        acc += 0.5 * (fi2 - fpad[o + i + last] - fpad[o + i - last]) * inv[last - 1]
        res[i] = acc / (h * h)
    return out


def pv_bilinear_sum(const double[:, ::1] apad, const double[:, ::1] bpad,
                    Py_ssize_t n, double h):
    """sum_j w_j sum_c [(A_i - A_{i+j})(B_i - B_{i+j}) + (A_i - A_{i-j})(B_i - B_{i-j})] / (j h)^2."""
    cdef Py_ssize_t m = apad.shape[0]
    cdef Py_ssize_t i, j, c, o = n - 1, last = n - 1
    cdef double acc, term, ai, bi, w
    cdef double[::1] inv = 1.0 / np.arange(1, n, dtype=np.float64) ** 2
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    for i in range(n):
        acc = 0.0
        for j in range(1, last + 1):
            term = 0.0
            for c in range(m):
                ai = apad[c, o + i]
                bi = bpad[c, o + i]
                term += (ai - apad[c, o + i + j]) * (bi - bpad[c, o + i + j])
                term += (ai - apad[c, o + i - j]) * (bi - bpad[c, o + i - j])
            w = 0.5 if j == last else 1.0
            acc += w * term * inv[j - 1]
        res[i] = acc / (h * h)
    return out
