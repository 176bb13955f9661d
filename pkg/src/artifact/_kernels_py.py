"""Pure numpy versions of the lattice sums in ``_kernels.pyx``.

Same signatures and padding convention; the loop runs over offsets
with vector operations across nodes, so cost is O(N^2) with numpy
overhead per offset.
"""
import numpy as np


def pv_linear_sum(fpad, n, h):
    fpad = np.ascontiguousarray(fpad, dtype=float)
    o = last = n - 1
    f2 = 2.0 * fpad[o : o + n]
    acc = np.zeros(n)
    for j in range(1, last + 1):
        w = (0.5 if j == last else 1.0) / (j * j)
        acc += w * (f2 - fpad[o + j : o + j + n] - fpad[o - j : o - j + n])
    return acc / (h * h)


def pv_bilinear_sum(apad, bpad, n, h):
    apad = np.ascontiguousarray(apad, dtype=float)
    bpad = np.ascontiguousarray(bpad, dtype=float)
    o = last = n - 1
    a0 = apad[:, o : o + n]
    b0 = bpad[:, o : o + n]
    acc = np.zeros(n)
    for j in range(1, last + 1):
        w = (0.5 if j == last else 1.0) / (j * j)
        ap, am = apad[:, o + j : o + j + n], apad[:, o - j : o - j + n]
        bp, bm = bpad[:, o + j : o + j + n], bpad[:, o - j : o - j + n]
        term = ((a0 - ap) * (b0 - bp)).sum(axis=0) + ((a0 - am) * (b0 - bm)).sum(axis=0)
        acc += w * term
    return acc / (h * h)
