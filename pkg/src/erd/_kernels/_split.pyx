# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled single-column split search.

Mirror of _split_py.best_split. The float64 expression tree, candidate
order and strict-comparison argmax must stay identical to the numpy
version so both backends train bit-identical models. Temporaries are
named on purpose: they stop the C compiler from contracting
multiply-adds into fma instructions the numpy path does not use.

Counting runs row-major (X rows are contiguous) with one pass over the
sample, accumulating per-candidate totals; the gain scan that follows
touches only the m candidate counters.
"""

import numpy as np

cimport numpy as cnp
from libc.stdlib cimport free, malloc
from libc.string cimport memset

cnp.import_array()


def best_split(
    cnp.uint8_t[:, ::1] X,
    cnp.uint8_t[::1] y,
    cnp.int64_t[::1] idx,
    cnp.int64_t[::1] cols,
    Py_ssize_t min_samples_leaf,
):
    cdef Py_ssize_t n = idx.shape[0]
    cdef Py_ssize_t m = cols.shape[0]
    cdef Py_ssize_t i, j, row
    cdef long long pos = 0, n1, p1, n0, p0
    cdef cnp.uint8_t yv
    cdef double fn, fp, fq, a, b, c, gp
    cdef double fn1, fp1, fq1, a1, b1, c1, g1
    cdef double fn0, fp0, fq0, a0, b0, c0, g0
    cdef double w, gain
    cdef double best_gain = 0.0
    cdef Py_ssize_t best = -1
    cdef int have_best = 0

    cdef long long *cnt1 = <long long *> malloc(2 * m * sizeof(long long))
    if cnt1 == NULL:
        raise MemoryError()
    cdef long long *pos1 = cnt1 + m
    memset(cnt1, 0, 2 * m * sizeof(long long))

    cdef long long v
    try:
        for i in range(n):
            row = idx[i]
            yv = y[row]
            pos += yv
            # branchless: one-hot values are 0/1, so the column totals
            # accumulate by plain adds
            for j in range(m):
                v = X[row, cols[j]]
                cnt1[j] += v
                pos1[j] += v * yv

        fn = <double> n
        fp = <double> pos
        fq = fn - fp
        a = fp * fp
        b = fq * fq
        c = fn * fn
        gp = 1.0 - (a + b) / c

        for j in range(m):
            n1 = cnt1[j]
            p1 = pos1[j]
            n0 = n - n1
            p0 = pos - p1
            if n1 < min_samples_leaf or n0 < min_samples_leaf:
                continue

            fn1 = <double> n1
            fp1 = <double> p1
            fq1 = fn1 - fp1
            a1 = fp1 * fp1
            b1 = fq1 * fq1
            c1 = fn1 * fn1
            g1 = 1.0 - (a1 + b1) / c1

            fn0 = <double> n0
            fp0 = <double> p0
            fq0 = fn0 - fp0
            a0 = fp0 * fp0
            b0 = fq0 * fq0
            c0 = fn0 * fn0
            g0 = 1.0 - (a0 + b0) / c0

            w = (fn0 * g0 + fn1 * g1) / fn
            gain = gp - w
            if not have_best or gain > best_gain:
                best = j
                best_gain = gain
                have_best = 1
    finally:
        free(cnt1)

    if not have_best:
        return -1, 0.0
    return best, best_gain
