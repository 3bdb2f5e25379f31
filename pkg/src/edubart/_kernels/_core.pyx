# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled tree kernels. Mirrors `_fallback` bit for bit (same float op order)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport isnan

cnp.import_array()


cdef inline bint _in_sorted(const double* codes, Py_ssize_t n, double v) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if codes[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo < n and codes[lo] == v


cdef inline int _route_one(
    const double* xrow,
    const int* feature,
    const double* threshold,
    const unsigned char* missing_left,
    const int* left,
    const int* right,
    const long long* cat_start,
    const int* cat_len,
    const double* cat_codes,
    int node,
) noexcept nogil:
    cdef double x
    cdef bint go_left
    while feature[node] >= 0:
        x = xrow[feature[node]]
        if isnan(x):
            go_left = missing_left[node]
        elif cat_len[node] > 0:
            go_left = _in_sorted(cat_codes + cat_start[node], cat_len[node], x)
        else:
            go_left = x <= threshold[node]
        node = left[node] if go_left else right[node]
    return node


def route_rows(
    cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] X,
    rows,
    cnp.ndarray[cnp.int32_t, ndim=1] feature,
    cnp.ndarray[cnp.float64_t, ndim=1] threshold,
    cnp.ndarray[cnp.uint8_t, ndim=1] missing_left,
    cnp.ndarray[cnp.int32_t, ndim=1] left,
    cnp.ndarray[cnp.int32_t, ndim=1] right,
    cnp.ndarray[cnp.int64_t, ndim=1] cat_start,
    cnp.ndarray[cnp.int32_t, ndim=1] cat_len,
    cnp.ndarray[cnp.float64_t, ndim=1] cat_codes,
    int start=0,
):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] r = np.asarray(rows, dtype=np.int64)
    cdef Py_ssize_t m = r.shape[0]
    cdef cnp.ndarray[cnp.int32_t, ndim=1] out = np.empty(m, dtype=np.int32)
    cdef Py_ssize_t i, p = X.shape[1]
    cdef const double* xbase = <const double*> X.data
    cdef const double* codes = <const double*> cat_codes.data
    with nogil:
        for i in range(m):
            out[i] = _route_one(
                xbase + r[i] * p,
                <const int*> feature.data,
                <const double*> threshold.data,
                <const unsigned char*> missing_left.data,
                <const int*> left.data,
                <const int*> right.data,
                <const long long*> cat_start.data,
                <const int*> cat_len.data,
                codes,
                start,
            )
    return out


def leaf_sums(
    cnp.ndarray[cnp.int32_t, ndim=1] leaf_idx,
    cnp.ndarray[cnp.float64_t, ndim=1] values,
    Py_ssize_t n_nodes,
):
    cdef cnp.ndarray[cnp.int64_t, ndim=1] counts = np.zeros(n_nodes, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sums = np.zeros(n_nodes, dtype=np.float64)
    cdef Py_ssize_t i, m = leaf_idx.shape[0]
    cdef int node
    with nogil:
        for i in range(m):
            node = leaf_idx[i]
            counts[node] += 1
            sums[node] += values[i]
    return counts, sums


def forest_fit(
    cnp.ndarray[cnp.float64_t, ndim=2, mode="c"] X,
    cnp.ndarray[cnp.int32_t, ndim=1] feature,
    cnp.ndarray[cnp.float64_t, ndim=1] threshold,
    cnp.ndarray[cnp.uint8_t, ndim=1] missing_left,
    cnp.ndarray[cnp.int32_t, ndim=1] left,
    cnp.ndarray[cnp.int32_t, ndim=1] right,
    cnp.ndarray[cnp.int64_t, ndim=1] cat_start,
    cnp.ndarray[cnp.int32_t, ndim=1] cat_len,
    cnp.ndarray[cnp.float64_t, ndim=1] cat_codes,
    cnp.ndarray[cnp.float64_t, ndim=1] leaf_value,
    cnp.ndarray[cnp.int64_t, ndim=1] tree_start,
    Py_ssize_t tree_lo,
    Py_ssize_t tree_hi,
):
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n, dtype=np.float64)
    cdef Py_ssize_t t, i
    cdef int leaf
    cdef const double* xbase = <const double*> X.data
    with nogil:
        for t in range(tree_lo, tree_hi):
            for i in range(n):
                leaf = _route_one(
                    xbase + i * p,
                    <const int*> feature.data,
                    <const double*> threshold.data,
                    <const unsigned char*> missing_left.data,
                    <const int*> left.data,
                    <const int*> right.data,
                    <const long long*> cat_start.data,
                    <const int*> cat_len.data,
                    <const double*> cat_codes.data,
                    <int> tree_start[t],
                )
                out[i] += leaf_value[leaf]
    return out


def gini_best_split(x, y, int n_classes):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xa = np.asarray(x, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ya = np.asarray(y, dtype=np.int64)
    cdef Py_ssize_t n = xa.shape[0]

    obs = ~np.isnan(xa)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xo = xa[obs]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] yo = ya[obs]
    cdef Py_ssize_t m = xo.shape[0]
    if m < 2:
        return False, 0.0, np.inf
    order = np.argsort(xo, kind="stable")
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xs = xo[order]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] ys = yo[order]

    cdef cnp.ndarray[cnp.int64_t, ndim=1] miss = np.bincount(
        ya[~obs], minlength=n_classes
    ).astype(np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] total = np.bincount(
        ya, minlength=n_classes
    ).astype(np.int64)

    cdef cnp.ndarray[cnp.int64_t, ndim=1] lcnt = miss.copy()
    cdef double nf = <double> n
    cdef double best_score = np.inf
    cdef double best_lo = 0.0, best_hi = 0.0
    cdef bint found = False
    cdef Py_ssize_t i, k
    cdef double nl, nr, ql, qr, lk, rk, score
    with nogil:
        for i in range(m - 1):
            lcnt[ys[i]] += 1
            if not xs[i] < xs[i + 1]:
                continue
            nl = 0.0
            nr = 0.0
            for k in range(n_classes):
                nl += <double> lcnt[k]
                nr += <double> (total[k] - lcnt[k])
            ql = 0.0
            qr = 0.0
            for k in range(n_classes):
                lk = <double> lcnt[k]
                rk = <double> (total[k] - lcnt[k])
                ql = ql + (lk * lk) / nl
                qr = qr + (rk * rk) / nr
            score = (nf - ql) - qr
            if score < best_score:
                best_score = score
                best_lo = xs[i]
                best_hi = xs[i + 1]
                found = True
    if not found:
        return False, 0.0, np.inf
    cdef double thr = (best_lo + best_hi) * 0.5
    if thr >= best_hi:
        thr = best_lo
    return True, thr, best_score
