"""Deliberately naive reference computations for cross-checking.

Nothing here calls the optimized model or kernel code paths: polynomials
are sparse dicts, AUC is O(n^2) pair counting and least squares uses dense
normal equations.
"""
from __future__ import annotations

import itertools
import math
from typing import Callable, Sequence

import numpy as np
from scipy import linalg, optimize

from .errors import NumericOverflowError, ValidationError

MAX_TERMS = 10**6


class SymbolicPoly:
    """Sparse multivariate polynomial ``{exponent tuple: coefficient}``."""

    def __init__(self, n_vars: int, terms: dict | None = None):
        self.n_vars = int(n_vars)
        self.terms: dict[tuple[int, ...], float] = {}
        for e, c in (terms or {}).items():
            e = tuple(int(p) for p in e)
            if len(e) != self.n_vars:
                raise ValidationError(f"exponent {e} does not have {self.n_vars} entries")
            if c != 0.0:
                self.terms[e] = self.terms.get(e, 0.0) + float(c)
        self._prune()

    def _prune(self):
        self.terms = {e: c for e, c in self.terms.items() if c != 0.0}

    def __repr__(self):
        return f"SymbolicPoly({self.n_vars}, {self.terms!r})"

    def __eq__(self, other):
        return isinstance(other, SymbolicPoly) and self.n_vars == other.n_vars and self.terms == other.terms

    @classmethod
    def constant(cls, n_vars, c):
        return cls(n_vars, {(0,) * n_vars: c})

    @classmethod
    def univariate(cls, n_vars: int, var: int, coeffs: Sequence[float]):
        terms = {}
        for p, c in enumerate(coeffs):
            e = [0] * n_vars
            e[var] = p
            terms[tuple(e)] = c
        return cls(n_vars, terms)

    def __add__(self, other: "SymbolicPoly") -> "SymbolicPoly":
        out = SymbolicPoly(self.n_vars, self.terms)
        for e, c in other.terms.items():
            out.terms[e] = out.terms.get(e, 0.0) + c
        out._prune()
        return out

    def __mul__(self, other):
        if not isinstance(other, SymbolicPoly):
            return SymbolicPoly(self.n_vars, {e: c * other for e, c in self.terms.items()})
        if self.n_vars != other.n_vars:
            raise ValidationError("cannot multiply polynomials over different variable counts")
        out: dict[tuple[int, ...], float] = {}
        for (ea, ca), (eb, cb) in itertools.product(self.terms.items(), other.terms.items()):
            e = tuple(a + b for a, b in zip(ea, eb))
            out[e] = out.get(e, 0.0) + ca * cb
        return SymbolicPoly(self.n_vars, out)

    __rmul__ = __mul__

    def evaluate(self, x: Sequence[float]) -> float:
        if len(x) != self.n_vars:
            raise ValidationError(f"expected {self.n_vars} values, got {len(x)}")
        total = 0.0
        for e, c in self.terms.items():
            term = c
            for xi, p in zip(x, e):
                term *= float(xi) ** p
            total += term
        return total

    def sorted_terms(self) -> list[tuple[tuple[int, ...], float]]:
        return sorted(self.terms.items())


def expand_product(coeff_lists: Sequence[Sequence[float]], scale: float = 1.0) -> SymbolicPoly:
    """Distribute ``scale * prod_i (sum_j c_ij x_i**j)``.

    Accepts coefficient vectors or objects with a ``coeffs`` attribute.
    """
    coeff_lists = [getattr(c, "coeffs", c) for c in coeff_lists]
    k = len(coeff_lists)
    n_terms = math.prod(len(c) for c in coeff_lists)
    if n_terms > MAX_TERMS:
        raise ValidationError(f"expansion would have {n_terms} terms (cap {MAX_TERMS})")
    out = SymbolicPoly.constant(k, scale)
    for i, c in enumerate(coeff_lists):
        out = out * SymbolicPoly.univariate(k, i, [float(v) for v in c])
    return out


def expand_sum(coeff_lists: Sequence[Sequence[float]]) -> SymbolicPoly:
    coeff_lists = [getattr(c, "coeffs", c) for c in coeff_lists]
    k = len(coeff_lists)
    out = SymbolicPoly(k)
    for i, c in enumerate(coeff_lists):
        out = out + SymbolicPoly.univariate(k, i, [float(v) for v in c])
    return out


def expand_model(model) -> SymbolicPoly:
    """Symbolic expansion of a polynomial CESR, MACM or ablation model."""
    from .models import AblationModel, CesrModel, MacmModel  # noqa: PLC0415
    from .shapes import PolynomialShape  # noqa: PLC0415

    shapes = getattr(model, "shapes", None) or [*getattr(model, "mult_shapes", []), *getattr(model, "add_shapes", [])]
    if not all(isinstance(s, PolynomialShape) for s in shapes):
        raise ValidationError("symbolic expansion needs polynomial shape functions")
    if isinstance(model, CesrModel):
        return expand_product(model.shapes, model.C)
    if isinstance(model, MacmModel):
        return expand_product(model.mult_shapes, model.scale) + expand_sum(model.add_shapes)
    if isinstance(model, AblationModel):
        if model.kind == "multiplicative_only":
            return expand_product(model.shapes, model.scale)
        return expand_sum(model.shapes)
    raise ValidationError(f"no symbolic expansion for {type(model).__name__}")


def design_matrix_naive(X, exponents) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    T = np.empty((X.shape[0], len(exponents)))
    for r in range(X.shape[0]):
        for t, e in enumerate(exponents):
            v = 1.0
            for i, p in enumerate(e):
                v *= X[r, i] ** p
            T[r, t] = v
    return T


def ols_fit(T, y, ridge: float = 1e-10) -> np.ndarray:
    """Minimize ``|T w - y|^2 + ridge |w|^2`` through the normal equations."""
    T = np.asarray(T, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if ridge < 0:
        raise ValidationError("ridge must be non-negative")
    if T.shape[0] != y.size:
        raise ValidationError("design matrix and target lengths differ")
    if ridge == 0 and T.shape[0] < T.shape[1]:
        raise ValidationError("underdetermined system needs ridge > 0")
    A = T.T @ T + ridge * np.eye(T.shape[1])
    try:
        factor = linalg.cho_factor(A)
    except linalg.LinAlgError:
        raise ValidationError("normal equations are singular") from None
    return linalg.cho_solve(factor, T.T @ y)


def finite_diff_grad(fn: Callable[[np.ndarray], float], params, step: float = 1e-5) -> np.ndarray:
    """Central differences ``(fn(p + h e_i) - fn(p - h e_i)) / 2h``."""
    p = np.array(params, dtype=np.float64).reshape(-1)
    g = np.empty_like(p)
    for i in range(p.size):
        orig = p[i]
        p[i] = orig + step
        hi = fn(p.copy())
        p[i] = orig - step
        lo = fn(p.copy())
        p[i] = orig
        if not (math.isfinite(hi) and math.isfinite(lo)):
            raise NumericOverflowError(f"non-finite evaluation at coordinate {i}")
        g[i] = (hi - lo) / (2.0 * step)
    return g


def auc_bruteforce(scores, labels) -> float:
    """``(concordant + ties / 2) / (n_pos * n_neg)`` by pair enumeration."""
    scores = [float(s) for s in scores]
    labels = [int(v) for v in labels]
    pos = [s for s, v in zip(scores, labels) if v == 1]
    neg = [s for s, v in zip(scores, labels) if v == 0]
    if not pos or not neg:
        raise ValidationError("AUC needs both classes")
    twice = 0
    for a in pos:
        for b in neg:
            if a > b:
                twice += 2
            elif a == b:
                twice += 1
    return (twice / 2.0) / (len(pos) * len(neg))


def cesr_lower_bound(X, y, lo: float = -3.0, hi: float = 3.0, step: float = 0.01):
    """Best train RMSE of a two-feature degree-1 CESR ``C (1 + a x1)(1 + b x2)``.

    For fixed ``(a, b)`` the optimal ``C`` is a one-dimensional least-squares
    solution, so a dense grid over ``(a, b)`` with profiled ``C`` followed
    by Nelder-Mead refinement of the best cell gives the global minimum over
    the box. Returns ``(rmse, (C, a, b))``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 2:
        raise ValidationError("cesr_lower_bound handles exactly two features")
    x1, x2 = X[:, 0], X[:, 1]
    n = y.size
    grid = np.round(np.arange(lo, hi + step / 2, step), 10)
    A = grid[:, None]
    B = grid[None, :]

    # u = (1 + a x1)(1 + b x2); SSE(a, b) = |y|^2 - <u, y>^2 / <u, u>
    def m(*cols):
        v = np.ones(n)
        for c in cols:
            v = v * c
        return v.sum()

    uy = (m(y) + A * m(x1, y) + B * m(x2, y) + A * B * m(x1, x2, y))
    # <u,u> = sum (1 + a x1)^2 (1 + b x2)^2 expanded in a, b
    uu = np.zeros((grid.size, grid.size))
    for i, ca in enumerate((1.0, 2.0, 1.0)):
        for j, cb in enumerate((1.0, 2.0, 1.0)):
            cols = [x1] * i + [x2] * j
            uu += ca * cb * m(*cols) * A ** i * B ** j
    with np.errstate(divide="ignore", invalid="ignore"):
        sse = np.where(uu > 0, float(y @ y) - uy ** 2 / uu, float(y @ y))
    ia, ib = np.unravel_index(np.argmin(sse), sse.shape)

    def profiled(ab):
        u = (1 + ab[0] * x1) * (1 + ab[1] * x2)
        uu_ = u @ u
        if uu_ == 0:
            return float(y @ y)
        r = y - (u @ y / uu_) * u
        return float(r @ r)

    res = optimize.minimize(profiled, [grid[ia], grid[ib]], method="Nelder-Mead",
                            options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000})
    best = min((res.fun, tuple(res.x)), (profiled([grid[ia], grid[ib]]), (grid[ia], grid[ib])))
    a, b = best[1]
    u = (1 + a * x1) * (1 + b * x2)
    C = float(u @ y / (u @ u))
    return math.sqrt(max(best[0], 0.0) / n), (C, float(a), float(b))


def multiplicative_lower_bound(X, y, n_angles: int = 1257):
    """Best train RMSE of ``(a0 + a1 x1)(b0 + b1 x2)`` over all coefficients.

    Each linear factor is determined up to scale by an angle in ``[0, pi)``;
    the overall scale is profiled out by least squares. A dense angle grid
    is followed by Nelder-Mead refinement. Returns ``(rmse, coeffs)``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 2:
        raise ValidationError("multiplicative_lower_bound handles exactly two features")
    x1, x2 = X[:, 0], X[:, 1]
    yy = float(y @ y)

    def sse(angles):
        u = (np.cos(angles[0]) + np.sin(angles[0]) * x1) * (np.cos(angles[1]) + np.sin(angles[1]) * x2)
        uu = u @ u
        if uu == 0:
            return yy
        r = y - (u @ y / uu) * u
        return float(r @ r)

    th = np.linspace(0.0, np.pi, n_angles, endpoint=False)
    f1 = np.cos(th)[:, None] + np.sin(th)[:, None] * x1[None, :]   # (angles, n)
    f2 = np.cos(th)[:, None] + np.sin(th)[:, None] * x2[None, :]
    uy = (f1 * y[None, :]) @ f2.T
    uu = (f1 ** 2) @ (f2 ** 2).T
    with np.errstate(divide="ignore", invalid="ignore"):
        grid_sse = np.where(uu > 0, yy - uy ** 2 / uu, yy)
    i, j = np.unravel_index(np.argmin(grid_sse), grid_sse.shape)
    start = [th[i], th[j]]
    res = optimize.minimize(sse, start, method="Nelder-Mead",
                            options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 20000})
    best_val, best_ang = min((res.fun, tuple(res.x)), (sse(start), tuple(start)))
    a = np.array([np.cos(best_ang[0]), np.sin(best_ang[0])])
    b = np.array([np.cos(best_ang[1]), np.sin(best_ang[1])])
    u = (a[0] + a[1] * x1) * (b[0] + b[1] * x2)
    c = float(u @ y / (u @ u))
    return math.sqrt(max(best_val, 0.0) / y.size), (c * a, b)
