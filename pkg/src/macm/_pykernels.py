"""Pure numpy implementations of the hot kernels.

Every function here has an identically named, identically behaving twin in
the compiled ``_ckernels`` extension. ``macm.kernels`` picks one at import.
"""
import numpy as np


def horner(coeffs, xs):
    """Evaluate ``sum_j coeffs[j] * xs**j`` elementwise."""
    coeffs = np.asarray(coeffs, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    out = np.full(xs.shape, coeffs[-1], dtype=np.float64)
    for c in coeffs[-2::-1]:
        out *= xs
        out += c
    return out


def power_sums(degree, xs, weights):
    """Return ``s[j] = sum_n weights[n] * xs[n]**j`` for j = 0..degree."""
    xs = np.asarray(xs, dtype=np.float64)
    term = np.asarray(weights, dtype=np.float64).copy()
    out = np.empty(degree + 1, dtype=np.float64)
    out[0] = term.sum()
    for j in range(1, degree + 1):
        term *= xs
        out[j] = term.sum()
    return out


def exclusive_products(F):
    """Row-wise products of all columns but one, without division.

    ``out[n, i] = prod_{j != i} F[n, j]``, built from prefix and suffix
    products so zero entries are handled exactly.
    """
    F = np.asarray(F, dtype=np.float64)
    n, k = F.shape
    prefix = np.ones((n, k), dtype=np.float64)
    suffix = np.ones((n, k), dtype=np.float64)
    if k > 1:
        prefix[:, 1:] = np.cumprod(F[:, :-1], axis=1)
        suffix[:, :-1] = np.cumprod(F[:, :0:-1], axis=1)[:, ::-1]
    return prefix * suffix


def design_matrix(X, exponents):
    """Monomial design matrix ``T[n, t] = prod_i X[n, i]**exponents[t, i]``."""
    X = np.asarray(X, dtype=np.float64)
    exponents = np.asarray(exponents, dtype=np.int64)
    n, k = X.shape
    T = np.ones((n, exponents.shape[0]), dtype=np.float64)
    for i in range(k):
        top = int(exponents[:, i].max()) if exponents.size else 0
        powers = np.ones((n, top + 1), dtype=np.float64)
        for p in range(1, top + 1):
            powers[:, p] = powers[:, p - 1] * X[:, i]
        T *= powers[:, exponents[:, i]]
    return T


def rank_auc(scores, labels):
    """Mann-Whitney AUC with mid-ranks for ties. Labels must be 0/1."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    ranks = np.empty(len(s), dtype=np.float64)
    # group boundaries of equal scores
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    ends = np.r_[starts[1:], len(s)]
    mid = (starts + ends + 1) / 2.0
    ranks[order] = np.repeat(mid, ends - starts)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC is undefined when a class is absent")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))
