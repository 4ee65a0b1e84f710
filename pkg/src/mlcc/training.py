"""Logistic-loss training with AUC / LogLoss evaluation."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ConfigError, DivergenceError
from .models import Model, model_forward
from .tensor import Tensor, backward, logistic_loss, no_grad

log = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "sgd_momentum", "adaptive")


class MetricError(ValueError):
    pass


def auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC is undefined without both positive and negative labels")
    ranks = rankdata(scores)  # average ranks over ties
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def logloss(logits, labels) -> float:
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 256
    epochs: int = 1
    optimizer: str = "adaptive"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    eval_every: int = 0  # 0: evaluate at the end of every epoch only
    dtype: str = "float64"

    def validate(self) -> None:
        if not self.lr >= 0:
            raise ConfigError("train.lr", "must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size", "must be >= 1")
        if self.epochs < 1:
            raise ConfigError("train.epochs", "must be >= 1")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError("train.optimizer", f"unknown optimizer {self.optimizer!r}; expected {OPTIMIZERS}")
        for name in ("momentum", "beta1", "beta2"):
            if not 0 <= getattr(self, name) < 1:
                raise ConfigError(f"train.{name}", "must lie in [0, 1)")
        if self.eval_every < 0:
            raise ConfigError("train.eval_every", "must be >= 0")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("train.dtype", "float32 or float64")


class Optimizer:
    def __init__(self, params: list[Tensor], lr: float):
        self.params = params
        self.lr = lr

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    def step(self) -> None:
        for p in self.params:
            if p.grad is not None:
                p.data -= self.lr * p.grad


class Momentum(Optimizer):
    def __init__(self, params, lr, beta=0.9):
        super().__init__(params, lr)
        self.beta = beta
        self.velocity = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        for p, v in zip(self.params, self.velocity):
            if p.grad is None:
                continue
            v *= self.beta
            v += p.grad
            p.data -= self.lr * v


class Adam(Optimizer):
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype, copy=False)


def make_optimizer(params: list[Tensor], cfg: TrainConfig) -> Optimizer:
    if cfg.optimizer == "sgd":
        return SGD(params, cfg.lr)
    if cfg.optimizer == "sgd_momentum":
        return Momentum(params, cfg.lr, cfg.momentum)
    return Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)


@dataclass
class Metrics:
    step: int
    split: str
    auc: float
    logloss: float
    wall_time: float = 0.0


@dataclass
class TrainResult:
    history: list[Metrics]
    best_state: dict[str, np.ndarray]
    best_auc: float
    best_step: int
    steps: int = 0
    seconds: float = 0.0

    def trace_csv(self) -> str:
        """``step,split,auc,logloss``; wall time is left out so traces are reproducible."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "split", "auc", "logloss"])
        for m in self.history:
            w.writerow([m.step, m.split, repr(m.auc), repr(m.logloss)])
        return buf.getvalue()


@dataclass
class Encoded:
    """Bucket ids ``(M, N)`` with labels ``(M,)``."""

    buckets: np.ndarray
    labels: np.ndarray
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.labels)


def predict(model: Model, buckets: np.ndarray, batch_size: int = 4096) -> np.ndarray:
    """Logits for every row, evaluated without recording gradients."""
    out = []
    with no_grad():
        for start in range(0, len(buckets), batch_size):
            out.append(model_forward(model, buckets[start:start + batch_size]).data)
    return np.concatenate(out).astype(np.float64)


def evaluate(model: Model, data: Encoded, split: str = "valid", step: int = 0) -> Metrics:
    z = predict(model, data.buckets)
    return Metrics(step, split, auc(z, data.labels), logloss(z, data.labels))


def train_step(model: Model, opt: Optimizer, buckets: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    opt.zero_grad()
    logits = model_forward(model, buckets)
    loss = logistic_loss(logits, labels)
    value = loss.item()
    backward(loss)
    opt.step()
    return value, logits.data


def train(model: Model, train_data: Encoded, valid_data: Encoded | None, cfg: TrainConfig) -> TrainResult:
    """Minibatch training; keeps the parameters with the best validation AUC.

    Deterministic for a fixed ``cfg.seed``: the only randomness is the per-epoch
    shuffle, drawn from a generator seeded by ``cfg.seed``.
    """
    cfg.validate()
    if len(train_data) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    opt = make_optimizer(model.parameters(), cfg)
    history: list[Metrics] = []
    best_auc, best_step, best_state = -1.0, 0, model.state_dict()
    t0 = time.perf_counter()
    step = 0
    seen_z: list[np.ndarray] = []
    seen_y: list[np.ndarray] = []
    seen_loss: list[float] = []

    def checkpoint():
        nonlocal best_auc, best_step, best_state
        now = time.perf_counter() - t0
        if seen_z:
            z, y = np.concatenate(seen_z), np.concatenate(seen_y)
            tr_auc = auc(z, y) if 0 < y.sum() < len(y) else float("nan")
            history.append(Metrics(step, "train", tr_auc, float(np.mean(seen_loss)), now))
            seen_z.clear(), seen_y.clear(), seen_loss.clear()
        if valid_data is not None:
            m = evaluate(model, valid_data, "valid", step)
            m.wall_time = now
            history.append(m)
            log.info("step %d valid auc %.5f logloss %.5f", step, m.auc, m.logloss)
            if m.auc > best_auc:
                best_auc, best_step, best_state = m.auc, step, model.state_dict()
        else:
            best_step, best_state = step, model.state_dict()

    n = len(train_data)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            y = train_data.labels[idx]
            value, z = train_step(model, opt, train_data.buckets[idx], y)
            step += 1
            if not np.isfinite(value) or not all(np.isfinite(p.data).all() for p in opt.params):
                raise DivergenceError(step, value)
            seen_z.append(z)
            seen_y.append(y)
            seen_loss.append(value)
            if cfg.eval_every and step % cfg.eval_every == 0:
                checkpoint()
        if not cfg.eval_every or step % cfg.eval_every:
            checkpoint()
    return TrainResult(history, best_state, best_auc, best_step, step, time.perf_counter() - t0)
