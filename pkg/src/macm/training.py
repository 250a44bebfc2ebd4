"""Losses, Adam, the mini-batch training loop, metrics and cross-validation."""
from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .data import Dataset, FoldSplit
from .errors import NumericOverflowError, ValidationError
from .models import Model, ModelBlueprint

log = logging.getLogger(__name__)

LOSSES = ("rmse", "bce")


@dataclass
class TrainConfig:
    loss: str = "rmse"
    learning_rate: float = 0.005
    decay_factor: float = 1.0
    decay_every: int = 100
    batch_size: int = 1024
    epochs: int = 5000
    seed: int = 0
    grad_clip: float | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.loss not in LOSSES:
            raise ValidationError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be positive")
        if not 0 < self.decay_factor <= 1:
            raise ValidationError("decay_factor must lie in (0, 1]")
        if self.decay_every < 1:
            raise ValidationError("decay_every must be at least 1")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be at least 1")
        if self.epochs < 1:
            raise ValidationError("epochs must be at least 1")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ValidationError("grad_clip must be positive when set")

    def lr_at(self, epoch: int) -> float:
        """Learning rate used during (0-based) ``epoch``."""
        return self.learning_rate * self.decay_factor ** (epoch // self.decay_every)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown train config key(s) {sorted(unknown)}")
        return cls(**d)


def loss_for_task(task: str) -> str:
    return "bce" if task == "binary" else "rmse"


# -- losses ------------------------------------------------------------------

def _pair(preds, targets):
    p = np.asarray(preds, dtype=np.float64).reshape(-1)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if p.shape != y.shape:
        raise ValidationError(f"{p.size} predictions but {y.size} targets")
    if p.size == 0:
        raise ValidationError("loss of an empty batch is undefined")
    return p, y


def rmse_loss(preds, targets):
    """Root mean squared error and its gradient w.r.t. the predictions.

    The gradient at zero loss is taken to be zero.
    """
    p, y = _pair(preds, targets)
    r = p - y
    value = math.sqrt(float(np.mean(r * r)))
    if value == 0.0:
        return 0.0, np.zeros_like(r)
    return value, r / (r.size * value)


def bce_loss(logits, targets):
    """Mean binary cross-entropy on logits, in softplus form."""
    z, y = _pair(logits, targets)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValidationError("binary cross-entropy targets must be 0 or 1")
    # -y log s(z) - (1-y) log(1 - s(z)) = softplus(z) - y z
    value = float(np.mean(np.logaddexp(0.0, z) - y * z))
    sig = 0.5 * (1.0 + np.tanh(0.5 * z))
    return value, (sig - y) / z.size


LOSS_FNS = {"rmse": rmse_loss, "bce": bce_loss}


# -- optimizer ---------------------------------------------------------------

class AdamState:
    """First/second moment estimates aligned with a flat parameter vector."""

    def __init__(self, n_params: int, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self, params, grads, lr: float) -> np.ndarray:
        params = np.asarray(params, dtype=np.float64)
        g = np.asarray(grads, dtype=np.float64)
        if params.shape != self.m.shape or g.shape != self.m.shape:
            raise ValidationError("parameter/gradient length does not match the optimizer state")
        if not np.all(np.isfinite(g)):
            raise NumericOverflowError("non-finite gradient passed to Adam")
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * g * g
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(state: AdamState, params, grads, lr: float) -> np.ndarray:
    return state.step(params, grads, lr)


# -- training loop -----------------------------------------------------------

@dataclass
class LossHistory:
    epochs: list[int] = field(default_factory=list)
    losses: list[float] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)

    def append(self, epoch, loss, lr):
        self.epochs.append(epoch)
        self.losses.append(loss)
        self.lrs.append(lr)

    def to_csv(self) -> str:
        lines = ["epoch,loss,lr"]
        lines += [f"{e},{l!r},{r!r}" for e, l, r in zip(self.epochs, self.losses, self.lrs)]
        return "\n".join(lines) + "\n"


def train(model: Model, data: Dataset, cfg: TrainConfig, *, progress_every: int = 0):
    """Fit ``model`` in place by mini-batch Adam; returns ``(model, history)``.

    Each epoch visits a fresh permutation of the samples in batches of
    ``cfg.batch_size`` (the last, possibly smaller, batch is kept). The
    recorded epoch loss is the sample-weighted mean of the batch losses.
    """
    cfg.validate()
    if not data.normalized:
        raise ValidationError("train expects a min-max normalized dataset")
    if data.n_features != model.n_features:
        raise ValidationError(f"model has {model.n_features} features, data has {data.n_features}")
    if (cfg.loss == "bce") != (model.task == "binary"):
        raise ValidationError(f"loss {cfg.loss!r} does not match task {model.task!r}")
    loss_fn = LOSS_FNS[cfg.loss]
    X, y = data.features, data.target
    n = data.n_samples
    rng = np.random.default_rng(cfg.seed)
    state = AdamState(model.n_params, cfg.beta1, cfg.beta2, cfg.eps)
    theta = model.params
    history = LossHistory()
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        perm = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start:start + cfg.batch_size]
            try:
                out, cache = model.forward_train(X[idx])
                value, upstream = loss_fn(out, y[idx])
                grad = model.backward(cache, upstream)
            except NumericOverflowError as exc:
                raise NumericOverflowError(f"epoch {epoch}, batch {b}: {exc}") from None
            if not math.isfinite(value):
                raise NumericOverflowError(f"epoch {epoch}, batch {b}: loss is {value}")
            if cfg.grad_clip is not None:
                norm = float(np.linalg.norm(grad))
                if norm > cfg.grad_clip:
                    grad = grad * (cfg.grad_clip / norm)
            theta = state.step(theta, grad, lr)
            model.set_params(theta)
            total += value * idx.size
        history.append(epoch, total / n, lr)
        if progress_every and (epoch + 1) % progress_every == 0:
            log.info("epoch %d loss %.6g lr %.3g", epoch + 1, total / n, lr)
    return model, history


# -- metrics -----------------------------------------------------------------

def auc(scores, labels) -> float:
    """ROC AUC via the Mann-Whitney rank statistic; ties count one half."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ValidationError("scores and labels differ in length")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValidationError("AUC labels must be 0 or 1")
    return kernels.rank_auc(scores, labels.astype(np.int64))


def rmse(preds, targets) -> float:
    return rmse_loss(preds, targets)[0]


def metric_for_task(task: str) -> str:
    return "auc" if task == "binary" else "rmse"


def evaluate(model: Model, data: Dataset, metric: str | None = None) -> float:
    metric = metric or metric_for_task(model.task)
    out = model.forward(data.features)
    if metric == "rmse":
        if model.task != "regression":
            raise ValidationError("RMSE is only defined here for regression models")
        return rmse(out, data.target)
    if metric == "auc":
        if model.task != "binary":
            raise ValidationError("AUC is only defined for binary models")
        return auc(out, data.target)
    raise ValidationError(f"unknown metric {metric!r}")


@dataclass
class Metrics:
    metric: str
    per_fold: list[float]
    train_per_fold: list[float] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_fold))

    @property
    def std(self) -> float:
        return float(np.std(self.per_fold))

    @property
    def rmse(self) -> float | None:
        return self.mean if self.metric == "rmse" else None

    @property
    def auc(self) -> float | None:
        return self.mean if self.metric == "auc" else None

    def formatted(self, digits: int = 4) -> str:
        return f"{self.mean:.{digits}f}±{self.std:.{digits}f}"

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "per_fold": list(self.per_fold),
            "train_per_fold": list(self.train_per_fold),
            "mean": self.mean,
            "std": self.std,
            "formatted": self.formatted(),
        }


def fold_seed(seed: int, fold: int) -> int:
    return int(seed) * 1000 + int(fold)


def max_workers() -> int:
    raw = os.environ.get("MACM_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValidationError(f"MACM_THREADS must be an integer, got {raw!r}") from None


def cross_validate(blueprint: ModelBlueprint, data: Dataset, folds: FoldSplit, cfg: TrainConfig,
                   metric: str | None = None, workers: int | None = None):
    """Train one independently initialized model per fold.

    Fold ``f`` is held out for evaluation while the remaining folds are used
    for training. Returns ``(Metrics, models, histories)``; results do not
    depend on ``workers``.
    """
    if folds.assignments.size != data.n_samples:
        raise ValidationError("fold assignment length does not match the dataset")
    metric = metric or metric_for_task(blueprint.task)

    def run(fold):
        seed = fold_seed(cfg.seed, fold)
        model = blueprint.build(data.n_features, seed)
        model.feature_specs = data.specs
        fold_cfg = TrainConfig.from_dict({**cfg.to_dict(), "seed": seed})
        train_data = data.take(folds.train_indices(fold))
        _, hist = train(model, train_data, fold_cfg)
        return (evaluate(model, data.take(folds.test_indices(fold)), metric),
                evaluate(model, train_data, metric), model, hist)

    n_workers = workers if workers is not None else max_workers()
    if n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(run, range(folds.fold_count)))
    else:
        results = [run(f) for f in range(folds.fold_count)]
    metrics = Metrics(metric, [r[0] for r in results], [r[1] for r in results])
    return metrics, [r[2] for r in results], [r[3] for r in results]
