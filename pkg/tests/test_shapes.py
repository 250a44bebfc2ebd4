import numpy as np
import pytest

from conftest import rel_close
from macm.errors import NumericOverflowError, SchemaError, ValidationError
from macm.shapes import (
    MlpShape,
    PolynomialShape,
    init_mlp,
    init_polynomial,
    init_shape,
    mlp_param_count,
    mlp_widths,
    shape_from_dict,
)
from macm.verification import finite_diff_grad


def test_polynomial_eval_examples():
    assert PolynomialShape([1, 1]).eval(2.0) == 3.0
    assert PolynomialShape([0, 1, 1]).eval(0.5) == 0.75
    np.testing.assert_array_equal(PolynomialShape([1, 1]).eval_batch([0.0, 1.0]), [1.0, 2.0])
    assert PolynomialShape([1, 1]).eval_batch([]).shape == (0,)
    assert PolynomialShape([1, 2, 3]).eval_batch(np.zeros(17)).shape == (17,)


def test_zero_mlp_returns_output_bias():
    net = init_mlp([1, 4, 3, 1], seed=0)
    net.set_params(np.zeros(net.n_params))
    net.biases[-1][:] = 2.5
    assert all(v == 2.5 for v in net.eval_batch(np.linspace(-5, 5, 11)))


def test_polynomial_grad_examples():
    np.testing.assert_array_equal(PolynomialShape([0.3, -1.2]).grad_params(2.0, 1.0), [1.0, 2.0])
    assert not np.any(PolynomialShape([1, 2, 3]).grad_params(0.7, 0.0))
    net = init_mlp([1, 5, 5, 1], seed=1)
    assert not np.any(net.grad_params(0.4, 0.0))


def _fd(shape, x):
    theta = shape.params

    def f(t):
        shape.set_params(t)
        return shape.eval(x)

    g = finite_diff_grad(f, theta, 1e-5)
    shape.set_params(theta)
    return g


def test_mlp_grad_matches_finite_differences():
    net = init_mlp([1, 6, 6, 1], seed=4)
    assert rel_close(net.grad_params(0.3, 1.0), _fd(net, 0.3), rtol=1e-4)


def test_gradients_on_100_random_shapes(rng):
    for trial in range(100):
        if trial % 2:
            shape = PolynomialShape(rng.normal(size=rng.integers(1, 9)))
        else:
            widths = [1] + list(rng.integers(1, 7, size=rng.integers(1, 4))) + [1]
            shape = init_mlp(widths, rng=rng)
        x = rng.uniform(-1, 1)
        up = rng.normal()
        assert rel_close(shape.grad_params(x, up), up * _fd(shape, x)), (trial, shape)


def test_batch_backward_sums_per_sample_gradients(rng):
    net = init_mlp([1, 4, 4, 1], rng=rng)
    xs = rng.uniform(-1, 1, 9)
    ups = rng.normal(size=9)
    _, cache = net.forward_train(xs)
    expect = sum(net.grad_params(x, u) for x, u in zip(xs, ups))
    np.testing.assert_allclose(net.backward(cache, ups), expect, rtol=1e-12, atol=1e-14)


def test_polynomial_precision_vs_naive(rng):
    for _ in range(50):
        c = rng.normal(size=rng.integers(1, 14))
        xs = rng.uniform(-1, 1, 40)
        naive = np.array([sum(cj * x ** j for j, cj in enumerate(c)) for x in xs])
        got = PolynomialShape(c).eval_batch(xs)
        np.testing.assert_allclose(got, naive, rtol=1e-12, atol=1e-12 * np.abs(c).sum())


def test_mlp_is_piecewise_linear(rng):
    net = init_mlp([1, 8, 8, 1], rng=rng)
    xs = np.linspace(-1, 1, 4001)
    ys = net.eval_batch(xs)
    second = np.abs(np.diff(ys, 2))
    kinks = np.sum(second > 1e-9 * (1 + np.abs(ys).max()))
    # at most one nonzero second difference per unit boundary, doubled for straddling points
    assert kinks <= 2 * 16 * 8


def test_param_counts():
    widths = mlp_widths(10, 20)
    assert widths == [1] + [20] * 10 + [1]
    expect = 1 * 20 + 20 + 9 * (20 * 20 + 20) + 20 * 1 + 1
    assert expect == 3841
    assert mlp_param_count(widths) == expect
    assert init_mlp(widths, seed=0).n_params == expect
    assert init_mlp(widths, seed=0).params.size == expect


def test_init_deterministic():
    a = init_shape("mlp", [1, 5, 1], seed=9)
    b = init_shape("mlp", [1, 5, 1], seed=9)
    np.testing.assert_array_equal(a.params, b.params)
    np.testing.assert_array_equal(init_shape("polynomial", 4, seed=2).params,
                                  init_shape("polynomial", 4, seed=2).params)


def test_polynomial_init_bounds(rng):
    for _ in range(20):
        m = init_polynomial(12, "multiplicative", rng=rng)
        assert m.coeffs[0] == 1.0
        assert np.all(np.abs(m.coeffs[1:]) <= 0.01)
        a = init_polynomial(12, "additive", rng=rng)
        assert np.all(np.abs(a.coeffs) <= 0.01)


def test_mlp_init_bounds():
    net = init_mlp([1, 20, 20, 1], seed=0)
    for W, b in zip(net.weights, net.biases):
        bound = np.sqrt(1.0 / W.shape[1])
        assert np.all(np.abs(W) <= bound) and np.all(np.abs(b) <= bound)


def test_init_errors():
    with pytest.raises(ValidationError):
        init_mlp([1, 0, 1])
    with pytest.raises(ValidationError):
        init_polynomial(0, allow_constant=False)
    with pytest.raises(ValidationError):
        init_shape("spline", 3)


def test_canonical_ordering():
    net = MlpShape([np.array([[1.0], [2.0]]), np.array([[3.0, 4.0]])],
                   [np.array([5.0, 6.0]), np.array([7.0])])
    np.testing.assert_array_equal(net.params, [1, 2, 5, 6, 3, 4, 7])


def test_serialization_round_trip(rng):
    for shape in (PolynomialShape(rng.normal(size=5)), init_mlp([1, 3, 2, 1], rng=rng)):
        again = shape_from_dict(shape.to_dict())
        np.testing.assert_array_equal(again.params, shape.params)
        assert type(again) is type(shape)
    with pytest.raises(SchemaError):
        shape_from_dict({"kind": "polynomial", "sizes": [3], "parameters": [1.0]})
    with pytest.raises(SchemaError):
        shape_from_dict({"kind": "tree"})


def test_overflow_reported():
    with pytest.raises(NumericOverflowError):
        PolynomialShape([0.0, 0.0, 1e300]).eval(1e10)
    net = MlpShape([np.array([[1e308]]), np.array([[1e308]])], [np.zeros(1), np.zeros(1)])
    with pytest.raises(NumericOverflowError):
        net.eval(10.0)
