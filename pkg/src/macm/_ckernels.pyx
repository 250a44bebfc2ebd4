# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def horner(coeffs, xs):
    cdef const double[::1] c = np.ascontiguousarray(coeffs, dtype=np.float64)
    xs_arr = np.ascontiguousarray(xs, dtype=np.float64)
    out_arr = np.empty_like(xs_arr)
    cdef const double[::1] x = xs_arr.reshape(-1)
    cdef double[::1] out = out_arr.reshape(-1)
    cdef Py_ssize_t n = x.shape[0], d = c.shape[0], i, j
    cdef double acc, xi
    for i in range(n):
        xi = x[i]
        acc = c[d - 1]
        for j in range(d - 2, -1, -1):
            acc = acc * xi + c[j]
        out[i] = acc
    return out_arr


def power_sums(Py_ssize_t degree, xs, weights):
    cdef const double[::1] x = np.ascontiguousarray(xs, dtype=np.float64).reshape(-1)
    cdef const double[::1] w = np.ascontiguousarray(weights, dtype=np.float64).reshape(-1)
    out_arr = np.zeros(degree + 1, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t n = x.shape[0], i, j
    cdef double term, xi
    for i in range(n):
        term = w[i]
        xi = x[i]
        out[0] += term
        for j in range(1, degree + 1):
            term = term * xi
            out[j] += term
    return out_arr


def exclusive_products(F):
    cdef const double[:, ::1] f = np.ascontiguousarray(F, dtype=np.float64)
    cdef Py_ssize_t n = f.shape[0], k = f.shape[1], r, i
    out_arr = np.empty((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double acc
    for r in range(n):
        acc = 1.0
        for i in range(k):
            out[r, i] = acc
            acc = acc * f[r, i]
        acc = 1.0
        for i in range(k - 1, -1, -1):
            out[r, i] = out[r, i] * acc
            acc = acc * f[r, i]
    return out_arr


def design_matrix(X, exponents):
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const long long[:, ::1] e = np.ascontiguousarray(exponents, dtype=np.int64)
    cdef Py_ssize_t n = x.shape[0], k = x.shape[1], n_terms = e.shape[0]
    cdef Py_ssize_t r, t, i, p
    out_arr = np.empty((n, n_terms), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef long long top = 0
    for t in range(n_terms):
        for i in range(k):
            if e[t, i] > top:
                top = e[t, i]
    powers_arr = np.empty((k, top + 1), dtype=np.float64)
    cdef double[:, ::1] powers = powers_arr
    cdef double acc
    for r in range(n):
        for i in range(k):
            powers[i, 0] = 1.0
            for p in range(1, top + 1):
                powers[i, p] = powers[i, p - 1] * x[r, i]
        for t in range(n_terms):
            acc = 1.0
            for i in range(k):
                acc = acc * powers[i, e[t, i]]
            out[r, t] = acc
    return out_arr


def rank_auc(scores, labels):
    s_arr = np.ascontiguousarray(scores, dtype=np.float64)
    cdef const long long[::1] order = np.argsort(s_arr, kind="mergesort").astype(np.int64)
    cdef const double[::1] s = s_arr
    cdef const long long[::1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef Py_ssize_t n = s.shape[0], start = 0, end, m
    cdef double mid, rank_sum = 0.0
    cdef long long n_pos = 0, n_group_pos
    while start < n:
        end = start + 1
        while end < n and s[order[end]] == s[order[start]]:
            end += 1
        mid = (start + end + 1) / 2.0
        n_group_pos = 0
        for m in range(start, end):
            if y[order[m]] == 1:
                n_group_pos += 1
        rank_sum += mid * n_group_pos
        n_pos += n_group_pos
        start = end
    cdef long long n_neg = n - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined when a class is absent")
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
