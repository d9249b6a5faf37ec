"""Square and softmax cross-entropy criteria with their derivatives.

Empirical risk is ``R * sum_n c(f_n, y_n)``. Class labels are 0-indexed.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DimensionError


class Criterion(str, Enum):
    MSE = "mse"
    CE = "ce"


class Reduction(str, Enum):
    SUM = "sum"
    MEAN = "mean"


@dataclass(frozen=True)
class LossConfig:
    criterion: Criterion = Criterion.MSE
    reduction: Reduction = Reduction.SUM

    def __post_init__(self):
        object.__setattr__(self, "criterion", Criterion(self.criterion))
        object.__setattr__(self, "reduction", Reduction(self.reduction))

    def label_dim(self, num_outputs):
        """``dim(Y)``: the target width for regression, 1 for class labels."""
        return num_outputs if self.criterion is Criterion.MSE else 1

    def factor(self, n, num_outputs):
        """Reduction factor for ``n`` data and a prediction of width ``num_outputs``."""
        return reduction_factor(self, n, self.label_dim(num_outputs))


def reduction_factor(cfg: LossConfig, n, dim_y):
    if n < 1 or dim_y < 1:
        raise ValueError("reduction factor needs n >= 1 and dim_y >= 1")
    scale = 2.0 if cfg.criterion is Criterion.MSE else 1.0
    if cfg.reduction is Reduction.SUM:
        return scale
    return scale / (n * dim_y)


def softmax(f):
    f = np.asarray(f, dtype=np.float64)
    z = np.exp(f - np.max(f, axis=-1, keepdims=True))
    return z / np.sum(z, axis=-1, keepdims=True)


def log_softmax(f):
    f = np.asarray(f, dtype=np.float64)
    shifted = f - np.max(f, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def _check_label(cfg, f, y):
    if cfg.criterion is Criterion.MSE:
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        if y.shape != f.shape:
            raise DimensionError(f"target of length {y.size} for prediction of length {f.size}")
        return y
    k = int(y)
    if not 0 <= k < f.size or k != y:
        raise DimensionError(f"class index {y!r} out of range for {f.size} classes")
    return k


def criterion_value(cfg: LossConfig, f, y):
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    y = _check_label(cfg, f, y)
    if cfg.criterion is Criterion.MSE:
        return 0.5 * float(np.sum((f - y) ** 2))
    return -float(log_softmax(f)[y])


def criterion_gradient(cfg: LossConfig, f, y):
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    y = _check_label(cfg, f, y)
    if cfg.criterion is Criterion.MSE:
        return f - y
    g = softmax(f)
    g[y] -= 1.0
    return g


def criterion_hessian(cfg: LossConfig, f, y=None):
    """Hessian w.r.t. the prediction; it does not depend on the label."""
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    if y is not None:
        _check_label(cfg, f, y)
    if cfg.criterion is Criterion.MSE:
        return np.eye(f.size)
    s = softmax(f)
    return np.diag(s) - np.outer(s, s)


def hessian_factorization(cfg: LossConfig, f):
    """``S`` with ``S Sᵀ`` equal to :func:`criterion_hessian`.

    ``I`` for square loss, ``diag(√σ) − σ √σᵀ`` for softmax cross-entropy.
    """
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    if cfg.criterion is Criterion.MSE:
        return np.eye(f.size)
    s = softmax(f)
    r = np.sqrt(s)
    return np.diag(r) - np.outer(s, r)


# batched forms over N x C predictions -------------------------------------


def criterion_gradients(cfg: LossConfig, preds, targets):
    """Row-wise :func:`criterion_gradient` for ``N x C`` predictions."""
    preds = np.asarray(preds, dtype=np.float64)
    if cfg.criterion is Criterion.MSE:
        targets = np.asarray(targets, dtype=np.float64).reshape(preds.shape)
        return preds - targets
    labels = np.asarray(targets).reshape(-1).astype(np.int64)
    if labels.size != preds.shape[0] or np.any(labels < 0) or np.any(labels >= preds.shape[1]):
        raise DimensionError("class labels out of range or of the wrong count")
    g = softmax(preds)
    g[np.arange(labels.size), labels] -= 1.0
    return g


def criterion_hessians(cfg: LossConfig, preds):
    preds = np.asarray(preds, dtype=np.float64)
    n, c = preds.shape
    if cfg.criterion is Criterion.MSE:
        return np.broadcast_to(np.eye(c), (n, c, c)).copy()
    s = softmax(preds)
    return s[:, :, None] * np.eye(c) - s[:, :, None] * s[:, None, :]


def hessian_factorizations(cfg: LossConfig, preds):
    preds = np.asarray(preds, dtype=np.float64)
    n, c = preds.shape
    if cfg.criterion is Criterion.MSE:
        return np.broadcast_to(np.eye(c), (n, c, c)).copy()
    s = softmax(preds)
    r = np.sqrt(s)
    return r[:, :, None] * np.eye(c) - s[:, :, None] * r[:, None, :]


def empirical_risk(cfg: LossConfig, preds, targets):
    preds = np.asarray(preds, dtype=np.float64)
    n, c = preds.shape
    if cfg.criterion is Criterion.MSE:
        per = 0.5 * np.sum((preds - np.asarray(targets, dtype=np.float64).reshape(preds.shape)) ** 2, axis=1)
    else:
        labels = np.asarray(targets).reshape(-1).astype(np.int64)
        per = -log_softmax(preds)[np.arange(n), labels]
    return cfg.factor(n, c) * float(np.sum(per))


# label sampling -------------------------------------------------------------


def datum_rng(seed, datum):
    """Counter-based generator keyed by ``(seed, datum)``; independent of call order."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(datum)])))


def sample_labels(cfg: LossConfig, f, rng, m):
    """Draw ``m`` labels from the likelihood induced by prediction ``f``.

    Square loss gives ``m x C`` draws from ``N(f, I)``; cross-entropy gives
    ``m`` class indices from ``Categorical(softmax(f))``.
    """
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    if cfg.criterion is Criterion.MSE:
        return f + np.asarray(rng.standard_normal((m, f.size)), dtype=np.float64)
    cdf = np.cumsum(softmax(f))
    u = np.asarray(rng.random(m), dtype=np.float64)
    return np.minimum(np.searchsorted(cdf, u, side="right"), f.size - 1)


def sample_label(cfg: LossConfig, f, rng):
    out = sample_labels(cfg, f, rng, 1)
    return out[0] if cfg.criterion is Criterion.MSE else int(out[0])


def would_be_gradients(cfg: LossConfig, f, rng, m):
    """``m x C`` criterion gradients at labels sampled from the model."""
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    labels = sample_labels(cfg, f, rng, m)
    if cfg.criterion is Criterion.MSE:
        return f[None, :] - labels
    g = np.broadcast_to(softmax(f), (m, f.size)).copy()
    g[np.arange(m), labels] -= 1.0
    return g
