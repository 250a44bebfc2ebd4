"""Model families built from univariate shape functions.

* :class:`MacmModel` -- ``scale * prod_i f_mi(x_i) + sum_i f_ai(x_i)``
* :class:`CesrModel` -- ``C * prod_i U_i(x_i)`` with ``U_i(0) = 1``
* :class:`EsrModel` -- linear model over every monomial ``prod_i x_i**e_i``
  with ``0 <= e_i <= n_i``
* :class:`AblationModel` -- the multiplicative or the additive half of a MACM

All models share ``params``/``set_params`` over one flat vector, ``forward``
on an ``(n_samples, n_features)`` matrix and a ``forward_train``/``backward``
pair returning the batch-summed parameter gradient. For the binary task the
output is a logit; the sigmoid lives in the loss and metric code.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .data import FeatureSpec
from .errors import NumericOverflowError, SchemaError, UnsupportedOperationError, ValidationError
from .shapes import (
    PolynomialShape,
    init_mlp,
    init_polynomial,
    mlp_widths,
    shape_from_dict,
)

SCHEMA_VERSION = 1
TASKS = ("regression", "binary")


def _check_task(task):
    if task not in TASKS:
        raise ValidationError(f"unknown task {task!r}; expected one of {TASKS}")
    return task


def _finite(values, what):
    if not np.all(np.isfinite(values)):
        raise NumericOverflowError(f"{what} produced a non-finite value")
    return values


def ergodic_terms(degrees: Sequence[int]) -> list[tuple[int, ...]]:
    """Exponent tuples of the full per-feature power product.

    Ordered with the first feature's exponent varying fastest, so degrees
    ``(1, 1)`` give ``[(0, 0), (1, 0), (0, 1), (1, 1)]``.
    """
    degrees = [int(d) for d in degrees]
    if not degrees:
        raise ValidationError("ergodic_terms needs at least one feature degree")
    if any(d < 1 for d in degrees):
        raise ValidationError(f"every degree must be >= 1, got {degrees}")
    ranges = [range(d + 1) for d in reversed(degrees)]
    return [tuple(reversed(t)) for t in itertools.product(*ranges)]


class Model:
    """Shared plumbing; subclasses define the parameter layout and forward."""

    kind: str = ""
    task: str = "regression"
    feature_specs: tuple[FeatureSpec, ...] | None = None

    @property
    def n_features(self) -> int:
        raise NotImplementedError

    @property
    def n_params(self) -> int:
        return self.params.size

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValidationError(
                f"model expects {self.n_features} features, got input of shape {X.shape}"
            )
        return X

    def forward(self, X) -> np.ndarray:
        return self.forward_train(X)[0]

    def predict(self, X) -> np.ndarray:
        """Model output; probabilities for the binary task."""
        out = self.forward(X)
        if self.task == "binary":
            return 0.5 * (1.0 + np.tanh(0.5 * out))
        return out

    def forward_one(self, x) -> float:
        return float(self.forward(np.asarray(x, dtype=np.float64)[None, :])[0])

    def copy(self):
        return model_from_dict(model_to_dict(self))


def model_grad(model: Model, x, upstream: float = 1.0) -> np.ndarray:
    """``upstream * d model(x) / d params`` for a single sample."""
    _, cache = model.forward_train(np.asarray(x, dtype=np.float64)[None, :])
    return model.backward(cache, np.array([upstream], dtype=np.float64))


def _shapes_params(shapes) -> list[np.ndarray]:
    return [s.params for s in shapes]


def _split_into(shapes, theta, start=0) -> int:
    pos = start
    for s in shapes:
        s.set_params(theta[pos:pos + s.n_params])
        pos += s.n_params
    return pos


def _eval_columns(shapes, X):
    values = np.empty(X.shape, dtype=np.float64)
    caches = []
    for i, s in enumerate(shapes):
        values[:, i], c = s.forward_train(X[:, i])
        caches.append(c)
    return values, caches


class MacmModel(Model):
    kind = "macm"

    def __init__(self, mult_shapes, add_shapes, scale: float = 1.0, task: str = "regression",
                 feature_specs=None):
        if len(mult_shapes) != len(add_shapes) or not mult_shapes:
            raise ValidationError("MACM needs one multiplicative and one additive shape per feature")
        if not scale > 0:
            raise ValidationError(f"scale must be positive, got {scale}")
        self.mult_shapes = list(mult_shapes)
        self.add_shapes = list(add_shapes)
        self.scale = float(scale)
        self.task = _check_task(task)
        self.feature_specs = None if feature_specs is None else tuple(feature_specs)

    @property
    def n_features(self) -> int:
        return len(self.mult_shapes)

    @property
    def params(self) -> np.ndarray:
        return np.concatenate(_shapes_params(self.mult_shapes) + _shapes_params(self.add_shapes))

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.size != self.n_params:
            raise ValidationError(f"expected {self.n_params} parameters, got {theta.size}")
        pos = _split_into(self.mult_shapes, theta)
        _split_into(self.add_shapes, theta, pos)

    def forward_train(self, X):
        X = self._check_X(X)
        Fm, cm = _eval_columns(self.mult_shapes, X)
        Fa, ca = _eval_columns(self.add_shapes, X)
        with np.errstate(over="ignore", invalid="ignore"):
            out = self.scale * np.prod(Fm, axis=1) + Fa.sum(axis=1)
        return _finite(out, "MACM forward"), (Fm, cm, ca)

    def backward(self, cache, upstream) -> np.ndarray:
        Fm, cm, ca = cache
        upstream = np.asarray(upstream, dtype=np.float64)
        others = kernels.exclusive_products(Fm)
        grads = []
        for i, s in enumerate(self.mult_shapes):
            grads.append(s.backward(cm[i], upstream * self.scale * others[:, i]))
        for i, s in enumerate(self.add_shapes):
            grads.append(s.backward(ca[i], upstream))
        return _finite(np.concatenate(grads), "MACM gradient")


class CesrModel(Model):
    """``C * prod_i U_i(x_i)``; each ``U_i`` is a polynomial with constant 1.

    Trainable parameters are ``C`` followed by the non-constant coefficients
    of every ``U_i``.
    """

    kind = "cesr"

    def __init__(self, C: float, shapes, task: str = "regression", feature_specs=None):
        shapes = list(shapes)
        if not shapes:
            raise ValidationError("CESR needs at least one feature")
        for i, s in enumerate(shapes):
            if not isinstance(s, PolynomialShape) or s.degree < 1:
                raise ValidationError("CESR shapes must be polynomials of degree >= 1")
            if s.coeffs[0] != 1.0:
                raise ValidationError(f"CESR shape {i} must have constant term 1, got {s.coeffs[0]}")
        self.C = float(C)
        self.shapes = shapes
        self.task = _check_task(task)
        self.feature_specs = None if feature_specs is None else tuple(feature_specs)

    @classmethod
    def from_weights(cls, C, weights, task="regression") -> "CesrModel":
        """Build from per-feature ``(w_i1, ..., w_in)`` vectors."""
        return cls(C, [PolynomialShape(np.r_[1.0, np.asarray(w, dtype=np.float64)]) for w in weights], task)

    @property
    def n_features(self) -> int:
        return len(self.shapes)

    @property
    def degrees(self) -> list[int]:
        return [s.degree for s in self.shapes]

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([[self.C]] + [s.coeffs[1:] for s in self.shapes])

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.size != self.n_params:
            raise ValidationError(f"expected {self.n_params} parameters, got {theta.size}")
        self.C = float(theta[0])
        pos = 1
        for s in self.shapes:
            s.set_params(np.r_[1.0, theta[pos:pos + s.degree]])
            pos += s.degree

    def forward_train(self, X):
        X = self._check_X(X)
        U, caches = _eval_columns(self.shapes, X)
        with np.errstate(over="ignore", invalid="ignore"):
            prod = np.prod(U, axis=1)
            out = self.C * prod
        return _finite(out, "CESR forward"), (U, prod, caches)

    def backward(self, cache, upstream) -> np.ndarray:
        U, prod, caches = cache
        upstream = np.asarray(upstream, dtype=np.float64)
        others = kernels.exclusive_products(U)
        grads = [np.array([np.dot(upstream, prod)])]
        for i, s in enumerate(self.shapes):
            grads.append(s.backward(caches[i], upstream * self.C * others[:, i])[1:])
        return _finite(np.concatenate(grads), "CESR gradient")


class EsrModel(Model):
    kind = "esr"

    def __init__(self, degrees, lin_coeffs=None, task: str = "regression", feature_specs=None):
        self.degrees = [int(d) for d in degrees]
        self.terms = np.array(ergodic_terms(self.degrees), dtype=np.int64)
        if lin_coeffs is None:
            lin_coeffs = np.zeros(len(self.terms))
        lin_coeffs = np.array(lin_coeffs, dtype=np.float64).reshape(-1)
        if lin_coeffs.size != len(self.terms):
            raise ValidationError(f"ESR with degrees {self.degrees} needs {len(self.terms)} coefficients")
        self.lin_coeffs = lin_coeffs
        self.task = _check_task(task)
        self.feature_specs = None if feature_specs is None else tuple(feature_specs)

    @property
    def n_features(self) -> int:
        return len(self.degrees)

    @property
    def params(self) -> np.ndarray:
        return self.lin_coeffs.copy()

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.size != self.lin_coeffs.size:
            raise ValidationError(f"expected {self.lin_coeffs.size} parameters, got {theta.size}")
        self.lin_coeffs = theta.copy()

    def design(self, X) -> np.ndarray:
        return kernels.design_matrix(self._check_X(X), self.terms)

    def forward_train(self, X):
        T = self.design(X)
        return _finite(T @ self.lin_coeffs, "ESR forward"), T

    def backward(self, cache, upstream) -> np.ndarray:
        return _finite(cache.T @ np.asarray(upstream, dtype=np.float64), "ESR gradient")


class AblationModel(Model):
    """Only the multiplicative or only the additive half of a MACM."""

    KINDS = ("multiplicative_only", "additive_only")

    def __init__(self, kind: str, shapes, scale: float = 1.0, task: str = "regression",
                 feature_specs=None):
        if kind not in self.KINDS:
            raise ValidationError(f"unknown ablation kind {kind!r}")
        if not shapes:
            raise ValidationError("ablation model needs one shape per feature")
        if kind == "multiplicative_only" and not scale > 0:
            raise ValidationError(f"scale must be positive, got {scale}")
        self.kind = kind
        self.shapes = list(shapes)
        self.scale = float(scale) if kind == "multiplicative_only" else 1.0
        self.task = _check_task(task)
        self.feature_specs = None if feature_specs is None else tuple(feature_specs)

    @property
    def n_features(self) -> int:
        return len(self.shapes)

    @property
    def params(self) -> np.ndarray:
        return np.concatenate(_shapes_params(self.shapes))

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.size != self.n_params:
            raise ValidationError(f"expected {self.n_params} parameters, got {theta.size}")
        _split_into(self.shapes, theta)

    def forward_train(self, X):
        X = self._check_X(X)
        F, caches = _eval_columns(self.shapes, X)
        with np.errstate(over="ignore", invalid="ignore"):
            if self.kind == "multiplicative_only":
                out = self.scale * np.prod(F, axis=1)
            else:
                out = F.sum(axis=1)
        return _finite(out, "ablation forward"), (F, caches)

    def backward(self, cache, upstream) -> np.ndarray:
        F, caches = cache
        upstream = np.asarray(upstream, dtype=np.float64)
        if self.kind == "multiplicative_only":
            others = kernels.exclusive_products(F)
            ups = [upstream * self.scale * others[:, i] for i in range(F.shape[1])]
        else:
            ups = [upstream] * F.shape[1]
        grads = [s.backward(c, u) for s, c, u in zip(self.shapes, caches, ups)]
        return _finite(np.concatenate(grads), "ablation gradient")


# -- polynomial expansions ---------------------------------------------------

def cesr_to_esr(model: CesrModel) -> EsrModel:
    """Coefficient-product map from a CESR to the equivalent ESR."""
    esr = EsrModel(model.degrees, task=model.task, feature_specs=model.feature_specs)
    coeffs = np.full(len(esr.terms), model.C)
    for i, s in enumerate(model.shapes):
        coeffs *= s.coeffs[esr.terms[:, i]]
    esr.set_params(coeffs)
    return esr


def _poly_parts(model):
    """``(scale, mult_coeffs, add_coeffs)`` for polynomial models, else raise."""
    if isinstance(model, CesrModel):
        return model.C, [s.coeffs for s in model.shapes], []
    if isinstance(model, MacmModel):
        mult, add = model.mult_shapes, model.add_shapes
        scale = model.scale
    elif isinstance(model, AblationModel):
        if model.kind == "multiplicative_only":
            mult, add, scale = model.shapes, [], model.scale
        else:
            mult, add, scale = [], model.shapes, 0.0
    else:
        raise UnsupportedOperationError(f"no polynomial expansion for {type(model).__name__}")
    if not all(isinstance(s, PolynomialShape) for s in list(mult) + list(add)):
        raise UnsupportedOperationError("expansion requires polynomial shape functions")
    return scale, [s.coeffs for s in mult], [s.coeffs for s in add]


def expand_terms(model) -> dict[tuple[int, ...], float]:
    """Expanded monomial coefficients of a polynomial CESR, MACM or ablation."""
    scale, mult, add = _poly_parts(model)
    k = model.n_features
    out: dict[tuple[int, ...], float] = {}
    if mult:
        for e in itertools.product(*[range(len(c)) for c in mult]):
            coef = scale
            for i, p in enumerate(e):
                coef *= mult[i][p]
            out[e] = out.get(e, 0.0) + coef
    for i, c in enumerate(add):
        for p, a in enumerate(c):
            e = tuple(p if j == i else 0 for j in range(k))
            out[e] = out.get(e, 0.0) + a
    return out


# -- construction from a blueprint ------------------------------------------

MODEL_KINDS = ("macm_poly", "macm_nn", "cesr", "esr", "mp_poly", "ap_poly", "mp_nn", "ap_nn")

DEFAULT_DEGREE = 12
DEFAULT_HIDDEN_LAYERS = 10
DEFAULT_WIDTH = 20
DEFAULT_SCALES = {
    ("poly", "regression"): 20.0,
    ("poly", "binary"): 20.0,
    ("nn", "regression"): 10.0,
    ("nn", "binary"): 1000.0,
}


@dataclass
class ModelBlueprint:
    """Recipe for building freshly initialized models of one family."""

    kind: str = "macm_poly"
    task: str = "regression"
    degree: int | list[int] = DEFAULT_DEGREE
    hidden_layers: int = DEFAULT_HIDDEN_LAYERS
    width: int = DEFAULT_WIDTH
    scale: float | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValidationError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        _check_task(self.task)
        if self.scale is None:
            family = "nn" if self.kind.endswith("_nn") else "poly"
            self.scale = 1.0 if self.kind in ("cesr", "esr", "ap_poly", "ap_nn") else DEFAULT_SCALES[(family, self.task)]

    @property
    def widths(self) -> list[int]:
        return mlp_widths(self.hidden_layers, self.width)

    def degrees(self, n_features: int) -> list[int]:
        if isinstance(self.degree, (list, tuple)):
            if len(self.degree) != n_features:
                raise ValidationError(f"{len(self.degree)} degrees given for {n_features} features")
            return [int(d) for d in self.degree]
        return [int(self.degree)] * n_features

    def build(self, n_features: int, seed: int) -> Model:
        rng = np.random.default_rng(seed)
        degs = self.degrees(n_features)
        nn = self.kind.endswith("_nn")

        def make(role):
            if nn:
                return [init_mlp(self.widths, rng=rng) for _ in range(n_features)]
            return [init_polynomial(d, role, rng=rng) for d in degs]

        if self.kind in ("macm_poly", "macm_nn"):
            mult = make("multiplicative")
            return MacmModel(mult, make("additive"), self.scale, self.task)
        if self.kind in ("mp_poly", "mp_nn"):
            return AblationModel("multiplicative_only", make("multiplicative"), self.scale, self.task)
        if self.kind in ("ap_poly", "ap_nn"):
            return AblationModel("additive_only", make("additive"), 1.0, self.task)
        if self.kind == "cesr":
            shapes = [init_polynomial(d, "multiplicative", rng=rng) for d in degs]
            for s in shapes:
                s.coeffs[0] = 1.0
            return CesrModel(1.0, shapes, self.task)
        esr = EsrModel(degs, task=self.task)
        esr.set_params(rng.uniform(-0.01, 0.01, size=esr.n_params))
        return esr

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "task": self.task,
            "degree": self.degree,
            "hidden_layers": self.hidden_layers,
            "width": self.width,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBlueprint":
        known = {"kind", "task", "degree", "hidden_layers", "width", "scale"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown model config key(s) {sorted(unknown)}")
        return cls(**d)


# -- serialization -----------------------------------------------------------

def _shape_record(shape, part, feature):
    rec = shape.to_dict()
    rec["part"] = part
    rec["feature"] = feature
    return rec


def model_to_dict(model: Model) -> dict:
    out = {
        "schema_version": SCHEMA_VERSION,
        "model_kind": model.kind,
        "task": model.task,
        "scale": getattr(model, "scale", None),
        "feature_specs": None if model.feature_specs is None else [s.to_dict() for s in model.feature_specs],
    }
    if isinstance(model, MacmModel):
        out["shapes"] = ([_shape_record(s, "mult", i) for i, s in enumerate(model.mult_shapes)]
                         + [_shape_record(s, "add", i) for i, s in enumerate(model.add_shapes)])
    elif isinstance(model, AblationModel):
        part = "mult" if model.kind == "multiplicative_only" else "add"
        out["shapes"] = [_shape_record(s, part, i) for i, s in enumerate(model.shapes)]
    elif isinstance(model, CesrModel):
        out["C"] = model.C
        out["shapes"] = [_shape_record(s, "mult", i) for i, s in enumerate(model.shapes)]
    elif isinstance(model, EsrModel):
        out["degrees"] = list(model.degrees)
        out["lin_coeffs"] = model.lin_coeffs.tolist()
        out["shapes"] = []
    else:
        raise UnsupportedOperationError(f"cannot serialize {type(model).__name__}")
    return out


def model_from_dict(d: dict) -> Model:
    if not isinstance(d, dict):
        raise SchemaError("model file must contain a JSON object")
    version = d.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported model schema version {version!r} (expected {SCHEMA_VERSION})")
    try:
        kind = d["model_kind"]
        task = d["task"]
        records = d["shapes"]
    except KeyError as exc:
        raise SchemaError(f"model file is missing key {exc}") from None
    specs = d.get("feature_specs")
    specs = None if specs is None else [FeatureSpec.from_dict(s) for s in specs]
    shapes = {"mult": [], "add": []}
    for rec in sorted(records, key=lambda r: (r.get("part", ""), r.get("feature", 0))):
        shapes.setdefault(rec.get("part"), []).append(shape_from_dict(rec))
    try:
        if kind == "macm":
            return MacmModel(shapes["mult"], shapes["add"], d["scale"], task, specs)
        if kind == "multiplicative_only":
            return AblationModel(kind, shapes["mult"], d["scale"], task, specs)
        if kind == "additive_only":
            return AblationModel(kind, shapes["add"], 1.0, task, specs)
        if kind == "cesr":
            return CesrModel(d["C"], shapes["mult"], task, specs)
        if kind == "esr":
            return EsrModel(d["degrees"], d["lin_coeffs"], task, specs)
    except (KeyError, ValidationError) as exc:
        raise SchemaError(f"invalid {kind} model record: {exc}") from None
    raise SchemaError(f"unknown model kind {kind!r}")


def save(model: Model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), indent=1) + "\n", encoding="utf-8")


def load(path) -> Model:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: malformed model file ({exc})") from None
    return model_from_dict(d)
