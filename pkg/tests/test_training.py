import math

import numpy as np
import pytest

from conftest import grid_dataset, rel_close
from macm import data, training, verification
from macm.errors import NumericOverflowError, ValidationError
from macm.models import EsrModel, MacmModel, ModelBlueprint
from macm.shapes import PolynomialShape
from macm.training import AdamState, TrainConfig, auc, bce_loss, rmse_loss


def normalized(X, y):
    specs = [data.FeatureSpec(f"x{i}", raw_min=-1.0, raw_max=1.0) for i in range(X.shape[1])]
    return data.Dataset(X, y, specs, normalized=True)


def decoupling_data():
    X = grid_dataset()
    return normalized(X, 1 + X[:, 0] + 2 * X[:, 1] + X[:, 0] * X[:, 1])


def test_rmse_examples():
    v, g = rmse_loss([1, 3], [1, 1])
    assert v == pytest.approx(math.sqrt(2))
    v, g = rmse_loss([2, 2], [2, 2])
    assert v == 0.0 and not np.any(g)
    with pytest.raises(ValidationError):
        rmse_loss([], [])


def test_bce_examples():
    v, _ = bce_loss([0.0], [1.0])
    assert v == pytest.approx(math.log(2), abs=1e-12)
    v, g = bce_loss([50.0], [1.0])
    assert 0 <= v < 1e-20 and math.isfinite(v)
    v, _ = bce_loss([-800.0], [1.0])
    assert v == pytest.approx(800.0)
    with pytest.raises(ValidationError):
        bce_loss([0.0], [0.5])


@pytest.mark.parametrize("loss", ["rmse", "bce"])
def test_loss_gradients(loss, rng):
    fn = training.LOSS_FNS[loss]
    for _ in range(100):
        n = int(rng.integers(1, 20))
        p = rng.normal(size=n) * 3
        y = rng.integers(0, 2, size=n).astype(float) if loss == "bce" else rng.normal(size=n)
        _, g = fn(p, y)
        fd = verification.finite_diff_grad(lambda q: fn(q, y)[0], p, 1e-6)
        assert rel_close(g, fd, rtol=1e-6, atol=1e-9)


def test_adam_first_step_and_zero_grad():
    st = AdamState(3)
    new = st.step(np.zeros(3), np.array([0.5, -2.0, 1e-3]), lr=0.01)
    np.testing.assert_allclose(new, [-0.01, 0.01, -0.01], rtol=1e-4)
    st = AdamState(2)
    np.testing.assert_array_equal(st.step(np.ones(2), np.zeros(2), lr=0.1), np.ones(2))
    with pytest.raises(NumericOverflowError):
        AdamState(1).step(np.zeros(1), np.array([np.nan]), 0.1)


def test_adam_scalar_convergence():
    st = AdamState(1)
    theta = np.array([1.0])
    for _ in range(1000):
        theta = training.adam_step(st, theta, 2 * theta, 0.01)
    assert abs(theta[0]) < 0.05


def test_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(epochs=0)
    with pytest.raises(ValidationError):
        TrainConfig(learning_rate=-1)
    with pytest.raises(ValidationError):
        TrainConfig(decay_factor=1.5)
    with pytest.raises(ValidationError):
        TrainConfig.from_dict({"dropout": 0.1})


def test_lr_schedule_exact():
    cfg = TrainConfig(learning_rate=0.0005, decay_factor=0.99, decay_every=100)
    for e in (0, 99, 100, 250, 9999):
        assert cfg.lr_at(e) == 0.0005 * 0.99 ** (e // 100)


def test_history_records_schedule():
    ds = decoupling_data()
    m = ModelBlueprint("ap_poly", degree=1).build(2, 0)
    cfg = TrainConfig(learning_rate=0.01, decay_factor=0.5, decay_every=3, epochs=7, batch_size=64)
    _, hist = training.train(m, ds, cfg)
    assert hist.lrs == [cfg.lr_at(e) for e in range(7)]
    assert hist.to_csv().splitlines()[0] == "epoch,loss,lr"


def test_train_reaches_exact_representation():
    ds = decoupling_data()
    m = ModelBlueprint("macm_poly", degree=1, scale=1.0).build(2, seed=0)
    cfg = TrainConfig(learning_rate=0.01, decay_factor=0.99, decay_every=10, epochs=5000)
    _, hist = training.train(m, ds, cfg)
    assert training.evaluate(m, ds) < 1e-3
    # smoothed loss is non-increasing over 100-epoch windows
    smooth = np.convolve(hist.losses, np.ones(100) / 100, mode="valid")[::100]
    assert np.all(np.diff(smooth) <= 1e-12)


def test_train_deterministic():
    ds = decoupling_data()
    cfg = TrainConfig(learning_rate=0.01, epochs=30, batch_size=128, seed=4)
    runs = []
    for _ in range(2):
        m = ModelBlueprint("macm_poly", degree=2).build(2, seed=1)
        runs.append(training.train(m, ds, cfg)[1].losses)
    assert runs[0] == runs[1]


def test_train_preconditions():
    ds = decoupling_data()
    m = ModelBlueprint("macm_poly", degree=1).build(2, 0)
    with pytest.raises(ValidationError, match="does not match task"):
        training.train(m, ds, TrainConfig(loss="bce", epochs=1))
    raw = data.Dataset(ds.features, ds.target, ds.specs, normalized=False)
    with pytest.raises(ValidationError, match="normalized"):
        training.train(m, raw, TrainConfig(epochs=1))


def test_train_overflow_diagnostic():
    ds = decoupling_data()
    m = MacmModel([PolynomialShape([1e200, 1e200])] * 2, [PolynomialShape([0.0, 0.0])] * 2, 1e200)
    with pytest.raises(NumericOverflowError, match="epoch 0, batch 0"):
        training.train(m, ds, TrainConfig(epochs=1))


def test_grad_clip_limits_step():
    ds = decoupling_data()
    m = ModelBlueprint("macm_poly", degree=1).build(2, 0)
    _, hist = training.train(m, ds, TrainConfig(epochs=5, grad_clip=1e-3))
    assert all(math.isfinite(v) for v in hist.losses)


def test_auc_examples():
    assert auc([0.9, 0.1], [1, 0]) == 1.0
    assert auc([0.1, 0.9], [1, 0]) == 0.0
    assert auc([0.3] * 4, [1, 0, 1, 0]) == 0.5
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [1, 1])


def test_auc_matches_bruteforce_and_monotone_invariance(rng):
    for _ in range(200):
        n = 50
        scores = rng.normal(size=n).round(int(rng.integers(0, 3)))
        labels = rng.integers(0, 2, size=n)
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        a = auc(scores, labels)
        assert a == verification.auc_bruteforce(scores, labels)
        assert auc(2 * scores + 1, labels) == a


def test_evaluate_metric_task_checks():
    ds = decoupling_data()
    m = ModelBlueprint("macm_poly", degree=1).build(2, 0)
    with pytest.raises(ValidationError):
        training.evaluate(m, ds, "auc")


def test_cross_validate_additive_linear_target(rng):
    X = rng.uniform(-1, 1, (400, 3))
    y = 0.5 + 2 * X[:, 0] - X[:, 1] + 0.25 * X[:, 2]
    ds = normalized(X, y)
    folds = data.kfold_split(ds.n_samples, 5, seed=0)
    bp = ModelBlueprint("ap_poly", degree=1)
    cfg = TrainConfig(learning_rate=0.01, decay_factor=0.99, decay_every=10, epochs=2000, batch_size=256)
    metrics, fold_models, hists = training.cross_validate(bp, ds, folds, cfg)
    assert len(metrics.per_fold) == 5 and len(fold_models) == 5
    assert metrics.mean == pytest.approx(np.mean(metrics.per_fold))
    assert max(metrics.per_fold) < 1e-2
    again, _, _ = training.cross_validate(bp, ds, folds, cfg, workers=3)
    assert again.per_fold == metrics.per_fold
    assert "±" in metrics.formatted()


def test_esr_gradient_vs_closed_form(rng):
    X = rng.uniform(-1, 1, (1000, 2))
    y = np.sin(2 * X[:, 0]) * np.cos(X[:, 1]) + 0.1 * rng.normal(size=1000)
    ds = normalized(X, y)
    tr, te = ds.take(np.arange(800)), ds.take(np.arange(800, 1000))
    esr = EsrModel([2, 2])
    cfg = TrainConfig(learning_rate=0.01, decay_factor=0.99, decay_every=10, epochs=3000, batch_size=1024)
    training.train(esr, tr, cfg)
    w = verification.ols_fit(esr.design(tr.features), tr.target, ridge=1e-10)
    closed = EsrModel([2, 2], w)
    gd, cf = training.evaluate(esr, te), training.evaluate(closed, te)
    assert abs(gd - cf) <= 0.01 * cf
