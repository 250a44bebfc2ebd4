"""Quick self-checks behind the hidden ``macm verify`` subcommand."""
from __future__ import annotations

import numpy as np

from . import models, training, verification
from .shapes import init_mlp, init_polynomial


def _rel_err(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12))


def run_all(seed: int = 0):
    rng = np.random.default_rng(seed)
    results = []

    k = 3
    m = models.MacmModel([init_polynomial(3, rng=rng) for _ in range(k)],
                         [init_polynomial(3, "additive", rng=rng) for _ in range(k)], 2.0)
    m.set_params(rng.normal(size=m.n_params))
    X = rng.uniform(-1, 1, size=(16, k))
    y = rng.normal(size=16)

    def loss(theta):
        m.set_params(theta)
        return training.rmse_loss(m.forward(X), y)[0]

    theta = m.params
    out, cache = m.forward_train(X)
    grad = m.backward(cache, training.rmse_loss(out, y)[1])
    fd = verification.finite_diff_grad(loss, theta)
    m.set_params(theta)
    err = _rel_err(grad, fd)
    results.append(("macm_poly_gradient", err <= 1e-4, f"max rel err {err:.2e}"))

    expanded = verification.expand_model(m)
    diff = max(abs(expanded.evaluate(x) - m.forward_one(x)) for x in X)
    results.append(("macm_expansion", diff <= 1e-10, f"max abs diff {diff:.2e}"))

    net = init_mlp([1, 8, 8, 1], rng=rng)
    x0 = 0.3

    def f_net(theta):
        net.set_params(theta)
        return net.eval(x0)

    theta = net.params
    g = net.grad_params(x0)
    fd = verification.finite_diff_grad(f_net, theta)
    net.set_params(theta)
    err = _rel_err(g, fd)
    results.append(("mlp_gradient", err <= 1e-4, f"max rel err {err:.2e}"))

    scores = rng.normal(size=60).round(1)
    labels = rng.integers(0, 2, size=60)
    a, b = training.auc(scores, labels), verification.auc_bruteforce(scores, labels)
    results.append(("auc_oracle", a == b, f"rank {a!r} vs pairs {b!r}"))
    return results
