import json

import numpy as np
import pytest

from conftest import grid_dataset, rel_close
from macm import models, verification
from macm.data import FeatureSpec
from macm.errors import SchemaError, UnsupportedOperationError, ValidationError
from macm.models import (
    AblationModel,
    CesrModel,
    EsrModel,
    MacmModel,
    ModelBlueprint,
    cesr_to_esr,
    ergodic_terms,
    model_grad,
)
from macm.shapes import PolynomialShape, init_mlp, init_polynomial


def poly(*c):
    return PolynomialShape(c)


def random_poly_macm(rng, k, max_degree=4, scale=None):
    mult = [PolynomialShape(rng.normal(size=rng.integers(1, max_degree + 1) + 1)) for _ in range(k)]
    add = [PolynomialShape(rng.normal(size=m.n_params)) for m in mult]
    return MacmModel(mult, add, scale if scale is not None else rng.uniform(0.5, 3))


def test_ergodic_terms_examples():
    assert ergodic_terms([1, 1]) == [(0, 0), (1, 0), (0, 1), (1, 1)]
    assert ergodic_terms([2]) == [(0,), (1,), (2,)]
    assert len(ergodic_terms([2, 3, 1])) == 24
    assert ergodic_terms([2, 3, 1])[0] == (0, 0, 0)
    with pytest.raises(ValidationError):
        ergodic_terms([])


def test_esr_forward_examples(rng):
    esr = EsrModel([1, 1], [1, 1, 1, 1])
    assert esr.forward_one([1.0, 1.0]) == 4.0
    assert EsrModel([2, 2]).forward_one(rng.uniform(-1, 1, 2)) == 0.0
    with pytest.raises(ValidationError):
        esr.forward(np.zeros((2, 3)))


def test_esr_forward_matches_symbolic(rng):
    for _ in range(20):
        degs = list(rng.integers(1, 4, size=rng.integers(1, 4)))
        esr = EsrModel(degs, rng.normal(size=int(np.prod(np.array(degs) + 1))))
        sym = verification.SymbolicPoly(len(degs), dict(zip(ergodic_terms(degs), esr.lin_coeffs)))
        x = rng.uniform(-1, 1, len(degs))
        assert esr.forward_one(x) == pytest.approx(sym.evaluate(x), rel=1e-12, abs=1e-12)


def test_cesr_forward_examples():
    m = CesrModel(2.0, [poly(1, 1), poly(1, 1)])
    assert m.forward_one([1.0, 1.0]) == 8.0
    assert m.forward_one([0.0, 0.0]) == 2.0
    with pytest.raises(ValidationError):
        CesrModel(1.0, [poly(2, 1)])


def test_cesr_degree1_matches_esr_coefficients(rng):
    C, w1, w2 = rng.normal(size=3)
    cesr = CesrModel.from_weights(C, [[w1], [w2]])
    esr = EsrModel([1, 1], [C, C * w1, C * w2, C * w1 * w2])
    X = rng.uniform(-1, 1, (50, 2))
    np.testing.assert_allclose(cesr.forward(X), esr.forward(X), rtol=1e-12, atol=1e-12)


def test_cesr_to_esr_equivalence(rng):
    for _ in range(30):
        k = rng.integers(1, 5)
        cesr = CesrModel.from_weights(rng.normal(), [rng.normal(size=rng.integers(1, 5)) for _ in range(k)])
        esr = cesr_to_esr(cesr)
        X = rng.uniform(-1, 1, (20, k))
        np.testing.assert_allclose(esr.forward(X), cesr.forward(X), rtol=1e-12, atol=1e-12)


def test_macm_forward_examples(rng):
    m = MacmModel([poly(0.0), poly(0.0, 0.0)], [poly(1, 2), poly(-1, 0.5, 3)], 7.0)
    X = rng.uniform(-1, 1, (10, 2))
    expect = (1 + 2 * X[:, 0]) + (-1 + 0.5 * X[:, 1] + 3 * X[:, 1] ** 2)
    np.testing.assert_allclose(m.forward(X), expect, rtol=1e-14)


def test_macm_exact_representation_of_decoupling_target():
    # 1 + x1 + 2 x2 + x1 x2 = (1 + x1)(1 + x2) + x2
    m = MacmModel([poly(1, 1), poly(1, 1)], [poly(0, 0), poly(1, 1)], 1.0)
    m.add_shapes[1] = poly(0, 1)
    X = grid_dataset()
    y = 1 + X[:, 0] + 2 * X[:, 1] + X[:, 0] * X[:, 1]
    np.testing.assert_allclose(m.forward(X), y, atol=1e-14)


def test_macm_expansion_equivalence(rng):
    for _ in range(100):
        k = int(rng.integers(1, 5))
        m = random_poly_macm(rng, k)
        sym = verification.expand_model(m)
        x = rng.uniform(-1, 1, k)
        assert m.forward_one(x) == pytest.approx(sym.evaluate(x), rel=1e-10, abs=1e-10)
        terms = models.expand_terms(m)
        assert sum(c * np.prod(x ** np.array(e)) for e, c in terms.items()) == pytest.approx(
            m.forward_one(x), rel=1e-10, abs=1e-10)


def test_scale_neutrality(rng):
    m = random_poly_macm(rng, 3, scale=4.5)
    mult = [s.copy() for s in m.mult_shapes]
    mult[0] = PolynomialShape(mult[0].coeffs * 4.5)
    alt = MacmModel(mult, [s.copy() for s in m.add_shapes], 1.0)
    X = rng.uniform(-1, 1, (100, 3))
    np.testing.assert_allclose(alt.forward(X), m.forward(X), rtol=1e-12, atol=1e-12)


def _fd_model(model, x, up):
    theta = model.params

    def f(t):
        model.set_params(t)
        return up * model.forward_one(x)

    g = verification.finite_diff_grad(f, theta, 1e-5)
    model.set_params(theta)
    return g


def _random_model(rng, kind):
    k = int(rng.integers(1, 4))
    if kind == "macm_poly":
        return random_poly_macm(rng, k, 3)
    if kind == "macm_nn":
        return MacmModel([init_mlp([1, 4, 4, 1], rng=rng) for _ in range(k)],
                         [init_mlp([1, 3, 1], rng=rng) for _ in range(k)], rng.uniform(1, 5))
    if kind == "cesr":
        return CesrModel.from_weights(rng.normal(), [rng.normal(size=3) for _ in range(k)])
    if kind == "esr":
        return EsrModel([2] * k, rng.normal(size=3 ** k))
    shapes = [init_polynomial(3, rng=rng) for _ in range(k)]
    for s in shapes:
        s.set_params(rng.normal(size=4))
    return AblationModel(kind, shapes, 2.0)


@pytest.mark.parametrize("kind", ["macm_poly", "macm_nn", "cesr", "esr", "multiplicative_only", "additive_only"])
def test_model_grad_finite_differences(kind, rng):
    for _ in range(10):
        m = _random_model(rng, kind)
        x = rng.uniform(-1, 1, m.n_features)
        up = rng.normal()
        assert rel_close(model_grad(m, x, up), _fd_model(m, x, up)), kind


def test_three_feature_degree3_macm_gradient(rng):
    m = MacmModel([PolynomialShape(rng.normal(size=4)) for _ in range(3)],
                  [PolynomialShape(rng.normal(size=4)) for _ in range(3)], 20.0)
    x = rng.uniform(-1, 1, 3)
    assert rel_close(model_grad(m, x, 1.0), _fd_model(m, x, 1.0))


def test_zero_factor_kills_other_multiplicative_gradients():
    m = MacmModel([poly(0.0, 0.0), poly(1.0, 2.0), poly(3.0, 1.0)], [poly(1, 1)] * 3, 1.0)
    g = model_grad(m, np.array([0.5, 0.3, -0.2]), 1.0)
    # f_m1 = 0 everywhere: gradients of feature 2 and 3 multiplicative params vanish
    assert np.all(g[2:6] == 0.0)
    assert np.any(g[0:2] != 0.0)
    assert np.all(model_grad(m, np.array([0.5, 0.3, -0.2]), 0.0) == 0.0)


def test_save_load_round_trip(tmp_path, rng):
    cases = [random_poly_macm(rng, 2), _random_model(rng, "cesr"), EsrModel([2, 1], rng.normal(size=6)),
             MacmModel([init_mlp([1, 3, 1], rng=rng)] * 2, [init_mlp([1, 2, 1], rng=rng)] * 2, 10.0, "binary"),
             AblationModel("multiplicative_only", [init_polynomial(2, rng=rng)] * 2, 3.0),
             AblationModel("additive_only", [init_polynomial(2, "additive", rng=rng)] * 2)]
    for i, m in enumerate(cases):
        m = m.copy()
        k = m.n_features
        m.feature_specs = tuple(FeatureSpec(f"f{j}", raw_min=0.0, raw_max=1.0) for j in range(k))
        p = tmp_path / f"m{i}.json"
        models.save(m, p)
        back = models.load(p)
        X = rng.uniform(-1, 1, (50, k))
        np.testing.assert_array_equal(back.forward(X), m.forward(X))
        assert back.kind == m.kind and back.task == m.task
        assert back.feature_specs == m.feature_specs


def test_load_errors(tmp_path, rng):
    p = tmp_path / "m.json"
    models.save(random_poly_macm(rng, 2), p)
    text = p.read_text()
    p.write_text(text[: len(text) // 2])
    with pytest.raises(SchemaError):
        models.load(p)
    d = json.loads(text)
    d["schema_version"] = 99
    p.write_text(json.dumps(d))
    with pytest.raises(SchemaError, match="version"):
        models.load(p)


def test_feature_count_mismatch_at_predict(rng):
    m = random_poly_macm(rng, 3)
    with pytest.raises(ValidationError, match="expects 3 features"):
        m.predict(np.zeros((4, 2)))


def test_expand_terms_rejects_mlp(rng):
    m = MacmModel([init_mlp([1, 2, 1], rng=rng)], [init_mlp([1, 2, 1], rng=rng)])
    with pytest.raises(UnsupportedOperationError):
        models.expand_terms(m)


def test_blueprint_build():
    for kind in models.MODEL_KINDS:
        m = ModelBlueprint(kind, degree=2, hidden_layers=1, width=3).build(3, seed=5)
        again = ModelBlueprint(kind, degree=2, hidden_layers=1, width=3).build(3, seed=5)
        np.testing.assert_array_equal(m.params, again.params)
        assert m.n_features == 3
    assert ModelBlueprint("macm_poly").scale == 20.0
    assert ModelBlueprint("macm_nn").scale == 10.0
    assert ModelBlueprint("macm_nn", task="binary").scale == 1000.0
    with pytest.raises(ValidationError):
        ModelBlueprint("nam")


def test_blueprint_cesr_starts_at_constant_one():
    m = ModelBlueprint("cesr", degree=3).build(2, seed=0)
    assert m.C == 1.0
    assert all(s.coeffs[0] == 1.0 for s in m.shapes)
