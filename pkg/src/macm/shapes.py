"""Univariate shape functions: polynomials and small ReLU networks.

Both kinds share one duck-typed interface used by the models:

* ``params`` / ``set_params`` expose a flat parameter vector in canonical
  order (polynomial: ascending power; MLP: layer-major, weights before
  biases, weights row-major with shape ``(fan_out, fan_in)``).
* ``eval`` / ``eval_batch`` evaluate the function.
* ``forward_train`` returns values plus a cache that ``backward`` turns into
  the parameter gradient summed over the batch, weighted by ``upstream``.
"""
from __future__ import annotations

import math

import numpy as np

from . import kernels
from .errors import NumericOverflowError, SchemaError, ValidationError

INIT_EPS = 0.01


def _check_finite(values, what="shape evaluation"):
    if not np.all(np.isfinite(values)):
        raise NumericOverflowError(f"{what} produced a non-finite value")
    return values


def _as_batch(xs):
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 1:
        xs = xs.reshape(-1)
    return xs


class PolynomialShape:
    """``f(x) = sum_j coeffs[j] * x**j``, evaluated with Horner's rule."""

    kind = "polynomial"

    def __init__(self, coeffs):
        coeffs = np.array(coeffs, dtype=np.float64).reshape(-1)
        if coeffs.size == 0:
            raise ValidationError("a polynomial needs at least one coefficient")
        self.coeffs = coeffs

    def __repr__(self):
        return f"PolynomialShape(degree={self.degree})"

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    @property
    def n_params(self) -> int:
        return self.coeffs.size

    @property
    def params(self) -> np.ndarray:
        return self.coeffs.copy()

    def set_params(self, theta):
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.size != self.coeffs.size:
            raise ValidationError(f"expected {self.coeffs.size} parameters, got {theta.size}")
        self.coeffs = theta.copy()

    def copy(self) -> "PolynomialShape":
        return PolynomialShape(self.coeffs)

    def eval(self, x: float) -> float:
        return float(self.eval_batch(np.array([x]))[0])

    def eval_batch(self, xs) -> np.ndarray:
        xs = _as_batch(xs)
        with np.errstate(over="ignore", invalid="ignore"):
            out = kernels.horner(self.coeffs, xs)
        return _check_finite(out)

    def forward_train(self, xs):
        xs = _as_batch(xs)
        return self.eval_batch(xs), xs

    def backward(self, cache, upstream) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            g = kernels.power_sums(self.degree, cache, np.asarray(upstream, dtype=np.float64))
        return _check_finite(g, "polynomial gradient")

    def grad_params(self, x: float, upstream: float = 1.0) -> np.ndarray:
        return self.backward(np.array([x], dtype=np.float64), np.array([upstream], dtype=np.float64))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sizes": [self.degree], "parameters": self.coeffs.tolist()}


class MlpShape:
    """Scalar-to-scalar fully connected network, ReLU on hidden layers."""

    kind = "mlp"

    def __init__(self, weights, biases):
        if len(weights) != len(biases) or not weights:
            raise ValidationError("an MLP needs matching, non-empty weight and bias lists")
        self.weights = [np.array(W, dtype=np.float64) for W in weights]
        self.biases = [np.array(b, dtype=np.float64).reshape(-1) for b in biases]
        widths = [self.weights[0].shape[1]]
        for W, b in zip(self.weights, self.biases):
            if W.ndim != 2 or W.shape[1] != widths[-1] or b.shape[0] != W.shape[0]:
                raise ValidationError("inconsistent MLP layer shapes")
            widths.append(W.shape[0])
        if widths[0] != 1 or widths[-1] != 1:
            raise ValidationError(f"MLP shape functions map scalars to scalars, got widths {widths}")
        self.layer_widths = widths

    def __repr__(self):
        return f"MlpShape(widths={self.layer_widths})"

    @classmethod
    def from_flat(cls, widths, theta) -> "MlpShape":
        widths = [int(w) for w in widths]
        theta = np.asarray(theta, dtype=np.float64).reshape(-1)
        if theta.size != mlp_param_count(widths):
            raise ValidationError(f"widths {widths} need {mlp_param_count(widths)} parameters, got {theta.size}")
        weights, biases, pos = [], [], 0
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            weights.append(theta[pos:pos + fan_in * fan_out].reshape(fan_out, fan_in))
            pos += fan_in * fan_out
            biases.append(theta[pos:pos + fan_out])
            pos += fan_out
        return cls(weights, biases)

    @property
    def n_params(self) -> int:
        return mlp_param_count(self.layer_widths)

    @property
    def params(self) -> np.ndarray:
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.reshape(-1))
            parts.append(b)
        return np.concatenate(parts)

    def set_params(self, theta):
        other = MlpShape.from_flat(self.layer_widths, theta)
        self.weights = [W.copy() for W in other.weights]
        self.biases = [b.copy() for b in other.biases]

    def copy(self) -> "MlpShape":
        return MlpShape(self.weights, self.biases)

    def eval(self, x: float) -> float:
        return float(self.eval_batch(np.array([x]))[0])

    def eval_batch(self, xs) -> np.ndarray:
        return self.forward_train(xs)[0]

    def forward_train(self, xs):
        h = _as_batch(xs)[:, None]
        inputs = []
        last = len(self.weights) - 1
        with np.errstate(over="ignore", invalid="ignore"):
            for layer, (W, b) in enumerate(zip(self.weights, self.biases)):
                inputs.append(h)
                z = h @ W.T + b
                h = z if layer == last else np.maximum(z, 0.0)
        out = _check_finite(h[:, 0])
        return out, inputs

    def backward(self, cache, upstream) -> np.ndarray:
        inputs = cache
        delta = np.asarray(upstream, dtype=np.float64).reshape(-1, 1)
        grads = []
        with np.errstate(over="ignore", invalid="ignore"):
            for layer in range(len(self.weights) - 1, -1, -1):
                h = inputs[layer]
                grads.append((delta.T @ h).reshape(-1))
                grads.append(delta.sum(axis=0))
                if layer:
                    # inputs[layer] = relu(z) so the mask is h > 0
                    delta = (delta @ self.weights[layer]) * (h > 0.0)
        # grads were appended last layer first, bias after weights
        ordered = []
        for i in range(len(grads) - 2, -1, -2):
            ordered.append(grads[i])
            ordered.append(grads[i + 1])
        return _check_finite(np.concatenate(ordered), "MLP gradient")

    def grad_params(self, x: float, upstream: float = 1.0) -> np.ndarray:
        _, cache = self.forward_train(np.array([x], dtype=np.float64))
        return self.backward(cache, np.array([upstream], dtype=np.float64))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "sizes": list(self.layer_widths), "parameters": self.params.tolist()}


def mlp_param_count(widths) -> int:
    return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))


def mlp_widths(hidden_layers: int, width: int) -> list[int]:
    """Full width list ``[1, width, ..., width, 1]``."""
    if hidden_layers < 0 or (hidden_layers and width < 1):
        raise ValidationError("hidden layer count and width must be positive")
    return [1] + [int(width)] * int(hidden_layers) + [1]


def _rng(seed=None, rng=None) -> np.random.Generator:
    if rng is not None:
        return rng
    return np.random.default_rng(seed)


def init_polynomial(degree: int, role: str = "multiplicative", *, seed=None, rng=None,
                    allow_constant: bool = True) -> PolynomialShape:
    """Near-identity start for products, near-zero start for sums.

    Multiplicative shapes begin at ``1 + eps`` terms so a product of many of
    them stays close to one; additive shapes begin with every coefficient
    drawn from ``U(-0.01, 0.01)``.
    """
    if degree < 0 or (degree == 0 and not allow_constant):
        raise ValidationError(f"invalid polynomial degree {degree}")
    if role not in ("multiplicative", "additive"):
        raise ValidationError(f"unknown shape role {role!r}")
    coeffs = _rng(seed, rng).uniform(-INIT_EPS, INIT_EPS, size=degree + 1)
    if role == "multiplicative":
        coeffs[0] = 1.0
    return PolynomialShape(coeffs)


def init_mlp(widths, *, seed=None, rng=None) -> MlpShape:
    widths = [int(w) for w in widths]
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ValidationError(f"invalid MLP widths {widths}")
    gen = _rng(seed, rng)
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = math.sqrt(1.0 / fan_in)
        weights.append(gen.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(gen.uniform(-bound, bound, size=fan_out))
    return MlpShape(weights, biases)


def init_shape(kind: str, size, *, seed=None, rng=None, role: str = "multiplicative"):
    """Build a freshly initialized shape; ``size`` is a degree or a width list."""
    if kind == "polynomial":
        return init_polynomial(int(size), role, seed=seed, rng=rng)
    if kind == "mlp":
        return init_mlp(size, seed=seed, rng=rng)
    raise ValidationError(f"unknown shape kind {kind!r}")


def shape_from_dict(d: dict):
    try:
        kind = d["kind"]
        sizes = d["sizes"]
        theta = d["parameters"]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"shape record is missing {exc}") from None
    if kind == "polynomial":
        if len(sizes) != 1 or len(theta) != int(sizes[0]) + 1:
            raise SchemaError("polynomial record: degree and parameter count disagree")
        return PolynomialShape(theta)
    if kind == "mlp":
        try:
            return MlpShape.from_flat(sizes, theta)
        except ValidationError as exc:
            raise SchemaError(str(exc)) from None
    raise SchemaError(f"unknown shape kind {kind!r}")
