"""Normalized and dynamic shape-function curves for visualization.

A MACM ``scale * prod f_mi(x_i) + sum f_ai(x_i)`` is rewritten as
``C_m * prod U_mi(x_i) + C_a + sum U_ai(x_i)`` with ``U_mi = f_mi / f_mi(0)``
and ``U_ai = f_ai - f_ai(0)``. Isolating one feature gives
``alpha * U_mi(x_i) + U_ai(x_i) + beta`` where ``alpha`` collects the other
multiplicative factors; sampling ``alpha`` over its observed range yields
the dynamic influence curves.
"""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .data import FeatureSpec, denormalize_values, normalize_values
from .errors import UnsupportedOperationError, ValidationError
from .models import AblationModel, CesrModel, MacmModel
from .shapes import MlpShape, PolynomialShape

EXTRACT_TOL = 1e-8
DYNAMIC_STEPS = 10
DEFAULT_GRID_POINTS = 200


def default_grid(n_points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    return np.linspace(-1.0, 1.0, n_points)


def _parts(model):
    """``(scale, mult_shapes, add_shapes)`` for every supported family."""
    if isinstance(model, MacmModel):
        return model.scale, model.mult_shapes, model.add_shapes
    if isinstance(model, CesrModel):
        return model.C, model.shapes, []
    if isinstance(model, AblationModel):
        if model.kind == "multiplicative_only":
            return model.scale, model.shapes, []
        return 0.0, [], model.shapes
    raise UnsupportedOperationError(f"shape curves are not defined for {type(model).__name__}")


@dataclass
class NormalizedShapes:
    C_m: float
    C_a: float
    grid: np.ndarray
    U_m: np.ndarray
    U_a: np.ndarray
    unextracted: list[int]
    mult_at_zero: np.ndarray
    add_at_zero: np.ndarray
    scale: float
    _mult: list = field(repr=False, default_factory=list)
    _add: list = field(repr=False, default_factory=list)

    @property
    def n_features(self) -> int:
        return self.U_m.shape[0]

    def mult_curve(self, i: int, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64).reshape(-1)
        if not self._mult:
            return np.ones_like(xs)
        return self._mult[i].eval_batch(xs)

    def add_curve(self, i: int, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64).reshape(-1)
        if not self._add:
            return np.zeros_like(xs)
        return self._add[i].eval_batch(xs)

    def mult_matrix(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.column_stack([self.mult_curve(i, X[:, i]) for i in range(self.n_features)])

    def add_matrix(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return np.column_stack([self.add_curve(i, X[:, i]) for i in range(self.n_features)])

    def recombine(self, X) -> np.ndarray:
        """``C_m prod U_mi + C_a + sum U_ai`` evaluated at the rows of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        return self.C_m * np.prod(self.mult_matrix(X), axis=1) + self.C_a + self.add_matrix(X).sum(axis=1)


def normalize_shapes(model, grid=None, tol: float = EXTRACT_TOL) -> NormalizedShapes:
    """Extract the constants ``C_m``, ``C_a`` and sample ``U_mi``, ``U_ai``.

    Features whose multiplicative shape vanishes at zero (``|f_mi(0)| <
    tol``) keep their raw shape and are listed in ``unextracted``.
    """
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    scale, mult, add = _parts(model)
    k = model.n_features
    zero = np.zeros(1)
    m0 = np.array([s.eval_batch(zero)[0] for s in mult]) if mult else np.ones(k)
    a0 = np.array([s.eval_batch(zero)[0] for s in add]) if add else np.zeros(k)
    unextracted = [i for i in range(k) if mult and abs(m0[i]) < tol]
    if unextracted:
        warnings.warn(f"constants left unextracted for feature(s) {unextracted}: f_mi(0) is ~0",
                      stacklevel=2)
    C_m = scale
    for i in range(k):
        if mult and i not in unextracted:
            C_m *= m0[i]
    out = NormalizedShapes(
        C_m=float(C_m),
        C_a=float(a0.sum()) if add else 0.0,
        grid=grid,
        U_m=np.empty((k, grid.size)),
        U_a=np.empty((k, grid.size)),
        unextracted=unextracted,
        mult_at_zero=m0,
        add_at_zero=a0,
        scale=float(scale),
        # curves come from rescaled coefficients so equal shapes up to a
        # constant factor normalize to bit-identical curves
        _mult=[s if i in unextracted else _rescaled(s, 1.0 / m0[i], 0.0) for i, s in enumerate(mult)],
        _add=[_rescaled(s, 1.0, -a0[i]) for i, s in enumerate(add)],
    )
    for i in range(k):
        out.U_m[i] = out.mult_curve(i, grid)
        out.U_a[i] = out.add_curve(i, grid)
    return out


def _rescaled(shape, factor: float, shift: float):
    """A copy of ``shape`` computing ``factor * f(x) + shift``."""
    if isinstance(shape, PolynomialShape):
        c = shape.coeffs * factor
        c[0] += shift
        return PolynomialShape(c)
    if isinstance(shape, MlpShape):
        weights = [W.copy() for W in shape.weights]
        biases = [b.copy() for b in shape.biases]
        weights[-1] *= factor
        biases[-1] = biases[-1] * factor + shift
        return MlpShape(weights, biases)
    raise UnsupportedOperationError(f"cannot rescale {type(shape).__name__}")


def fold_normalization(model, tol: float = EXTRACT_TOL) -> MacmModel:
    """Rebuild a MACM whose shapes are already the normalized ``U`` curves.

    The result has ``scale = C_m``, multiplicative shapes ``U_mi`` and
    additive shapes ``U_ai``, with ``C_a`` folded into the first additive
    shape's constant. Its outputs equal the original model's.
    """
    if not isinstance(model, MacmModel):
        raise UnsupportedOperationError("fold_normalization needs a MacmModel")
    ns = normalize_shapes(model, np.zeros(1), tol)
    mult = []
    for i, s in enumerate(model.mult_shapes):
        factor = 1.0 if i in ns.unextracted else 1.0 / ns.mult_at_zero[i]
        mult.append(_rescaled(s, factor, 0.0))
    add = [_rescaled(s, 1.0, -ns.add_at_zero[i]) for i, s in enumerate(model.add_shapes)]
    add[0] = _rescaled(add[0], 1.0, ns.C_a)
    scale = ns.C_m
    if not scale > 0:
        raise ValidationError(f"normalized constant C_m = {scale} is not positive; cannot use it as a scale")
    return MacmModel(mult, add, scale, model.task, model.feature_specs)


# -- dynamic curves ----------------------------------------------------------

def dynamic_alpha_values(model, X, feature: int, tol: float = EXTRACT_TOL) -> np.ndarray:
    """Per-sample ``alpha = C_m * prod_{j != i} U_mj(x_j)``."""
    X = np.asarray(X, dtype=np.float64)
    if not 0 <= feature < model.n_features:
        raise ValidationError(f"feature index {feature} out of range for {model.n_features} features")
    ns = normalize_shapes(model, np.zeros(1), tol) if not isinstance(model, NormalizedShapes) else model
    U = ns.mult_matrix(X)
    return ns.C_m * kernels.exclusive_products(U)[:, feature]


def dynamic_alphas(model, X, feature: int, tol: float = EXTRACT_TOL) -> tuple[float, float]:
    """Observed range of the dynamic scaling factor for one feature."""
    X = getattr(X, "features", X)
    a = dynamic_alpha_values(model, X, feature, tol)
    if a.size == 0:
        raise ValidationError("dynamic alpha range needs at least one sample")
    return float(a.min()), float(a.max())


@dataclass
class DynamicCurveSet:
    feature_index: int
    alphas: np.ndarray
    grid: np.ndarray
    curves: np.ndarray
    alpha_min: float
    alpha_max: float

    @property
    def collapsed(self) -> bool:
        return self.alpha_min == self.alpha_max


def sample_dynamic_curves(model, feature: int, bounds: tuple[float, float], grid=None,
                          steps: int = DYNAMIC_STEPS, tol: float = EXTRACT_TOL) -> DynamicCurveSet:
    """``alpha_t * U_mi(x) + U_ai(x)`` for ``steps`` uniformly spaced alphas."""
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    lo, hi = float(bounds[0]), float(bounds[1])
    if hi < lo:
        raise ValidationError(f"alpha bounds ({lo}, {hi}) are reversed")
    ns = normalize_shapes(model, np.zeros(1), tol)
    um = ns.mult_curve(feature, grid)
    ua = ns.add_curve(feature, grid)
    alphas = np.linspace(lo, hi, steps)
    if lo == hi:
        warnings.warn(f"feature {feature}: alpha range is a single point; curves coincide", stacklevel=2)
    curves = alphas[:, None] * um[None, :] + ua[None, :]
    return DynamicCurveSet(feature, alphas, grid, curves, lo, hi)


def back_transform(xs, spec: FeatureSpec) -> np.ndarray:
    """Map normalized x-values to the raw feature axis."""
    if not spec.has_bounds:
        raise ValidationError(f"feature {spec.name!r} has no raw bounds to back-transform with")
    return denormalize_values(xs, spec.raw_min, spec.raw_max)


# -- multi-fold artifacts and export ----------------------------------------

@dataclass
class FeatureCurves:
    index: int
    name: str
    kind: str
    x_normalized: np.ndarray
    x_original: np.ndarray | None
    mult: np.ndarray       # (folds, grid)
    add: np.ndarray        # (folds, grid)
    dynamic: np.ndarray    # (folds, steps, grid)
    alphas: np.ndarray     # (folds, steps)


@dataclass
class CurveArtifacts:
    features: list[FeatureCurves]
    summary: dict


def feature_grid(spec: FeatureSpec | None, n_points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    """Uniform grid, or the normalized code values of a categorical feature."""
    if spec is not None and spec.kind == "categorical" and spec.has_bounds:
        codes = sorted(set(code for _, code in spec.encoding))
        return np.clip(normalize_values(np.array(codes), spec.raw_min, spec.raw_max), -1.0, 1.0)
    return default_grid(n_points)


def build_curve_artifacts(models: Sequence, X_per_model: Sequence[np.ndarray], specs=None,
                          n_points: int = DEFAULT_GRID_POINTS, tol: float = EXTRACT_TOL) -> CurveArtifacts:
    """Sample normalized and dynamic curves of several (fold) models.

    ``X_per_model[f]`` is the normalized data used for the alpha range of
    model ``f``, normally that fold's training split.
    """
    if not models:
        raise ValidationError("no models given")
    if len(X_per_model) != len(models):
        raise ValidationError("need one data matrix per model for the alpha ranges")
    k = models[0].n_features
    if any(m.n_features != k for m in models):
        raise ValidationError("fold models disagree on the feature count")
    specs = specs if specs is not None else models[0].feature_specs
    fold_summaries = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        normed = [normalize_shapes(m, np.zeros(1), tol) for m in models]
    for f, (m, ns) in enumerate(zip(models, normed)):
        ranges = [list(dynamic_alphas(ns, X_per_model[f], i)) for i in range(k)]
        fold_summaries.append({
            "fold": f + 1,
            "C_m": ns.C_m,
            "C_a": ns.C_a,
            "scale": ns.scale,
            "unextracted": list(ns.unextracted),
            "alpha_ranges": ranges,
        })
    features = []
    for i in range(k):
        spec = specs[i] if specs is not None else None
        grid = feature_grid(spec, n_points)
        x_orig = back_transform(grid, spec) if spec is not None and spec.has_bounds else None
        mult = np.array([ns.mult_curve(i, grid) for ns in normed])
        add = np.array([ns.add_curve(i, grid) for ns in normed])
        dyn, alphas = [], []
        for f, ns in enumerate(normed):
            lo, hi = fold_summaries[f]["alpha_ranges"][i]
            a = np.linspace(lo, hi, DYNAMIC_STEPS)
            alphas.append(a)
            dyn.append(a[:, None] * mult[f][None, :] + add[f][None, :])
        features.append(FeatureCurves(
            index=i,
            name=spec.name if spec is not None else f"x{i + 1}",
            kind=spec.kind if spec is not None else "numeric",
            x_normalized=grid,
            x_original=x_orig,
            mult=mult,
            add=add,
            dynamic=np.array(dyn),
            alphas=np.array(alphas),
        ))
    warn = [f"fold {s['fold']}: constants left unextracted for feature(s) {s['unextracted']}"
            for s in fold_summaries if s["unextracted"]]
    summary = {
        "n_folds": len(models),
        "grid_points": n_points,
        "dynamic_steps": DYNAMIC_STEPS,
        "folds": fold_summaries,
        "warnings": warn,
    }
    return CurveArtifacts(features, summary)


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def curve_table(fc: FeatureCurves, part: str) -> tuple[list[str], list[list[float | None]]]:
    """Header and rows of one (feature, part) curve file."""
    n_folds = fc.mult.shape[0]
    xo = fc.x_original if fc.x_original is not None else [None] * fc.x_normalized.size
    if part in ("mult", "add"):
        curves = fc.mult if part == "mult" else fc.add
        header = ["x_normalized", "x_original"] + [f"fold_{f + 1}" for f in range(n_folds)] + ["mean"]
        mean = curves.mean(axis=0)
        rows = [[fc.x_normalized[g], xo[g]] + list(curves[:, g]) + [mean[g]]
                for g in range(fc.x_normalized.size)]
        return header, rows
    if part == "dynamic":
        steps = fc.dynamic.shape[1]
        header = ["x_normalized", "x_original"]
        header += [f"fold_{f + 1}_step_{t + 1}" for f in range(n_folds) for t in range(steps)]
        header += [f"mean_step_{t + 1}" for t in range(steps)]
        mean = fc.dynamic.mean(axis=0)
        rows = []
        for g in range(fc.x_normalized.size):
            rows.append([fc.x_normalized[g], xo[g]]
                        + [fc.dynamic[f, t, g] for f in range(n_folds) for t in range(steps)]
                        + [mean[t, g] for t in range(steps)])
        return header, rows
    raise ValidationError(f"unknown curve part {part!r}")


PARTS = ("mult", "add", "dynamic")


def _file_stem(fc: FeatureCurves) -> str:
    safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in fc.name)
    return f"feature_{fc.index + 1:02d}_{safe}"


def export_curves(artifacts: CurveArtifacts, path, fmt: str = "csv") -> list[Path]:
    """Write curve files plus ``summary.json`` into directory ``path``.

    CSV: one file per (feature, part) named
    ``feature_<NN>_<name>_<part>.csv``. JSON: a single ``curves.json`` with
    the same tables keyed by feature name and part.
    """
    if fmt not in ("csv", "json"):
        raise ValidationError(f"unknown export format {fmt!r}")
    out_dir = Path(path)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot write to {out_dir}: {exc}") from None
    written = []
    if fmt == "csv":
        for fc in artifacts.features:
            for part in PARTS:
                header, rows = curve_table(fc, part)
                buf = io.StringIO()
                w = csv.writer(buf, lineterminator="\n")
                w.writerow(header)
                for r in rows:
                    w.writerow([_fmt(v) for v in r])
                p = out_dir / f"{_file_stem(fc)}_{part}.csv"
                p.write_text(buf.getvalue(), encoding="utf-8")
                written.append(p)
    else:
        doc = {"features": []}
        for fc in artifacts.features:
            entry = {"index": fc.index, "name": fc.name, "kind": fc.kind, "parts": {}}
            for part in PARTS:
                header, rows = curve_table(fc, part)
                entry["parts"][part] = {
                    "columns": header,
                    "rows": [[None if v is None else float(v) for v in r] for r in rows],
                }
            entry["alphas"] = fc.alphas.tolist()
            doc["features"].append(entry)
        p = out_dir / "curves.json"
        p.write_text(json.dumps(doc) + "\n", encoding="utf-8")
        written.append(p)
    p = out_dir / "summary.json"
    p.write_text(json.dumps(artifacts.summary, indent=1) + "\n", encoding="utf-8")
    written.append(p)
    return written
