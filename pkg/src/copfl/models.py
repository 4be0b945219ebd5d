"""Small classifiers with hand-written forward pass and backprop.

Two kinds are supported, both trained with mean softmax cross-entropy:

* ``softmax_regression``: logits = W x + b
* ``mlp2``: logits = W2 relu(W1 x + b1) + b2

Parameters live in one flat vector. Layout for mlp2 is
``[W1 (H x D), b1 (H), W2 (C x H), b2 (C)]``; softmax regression is
``[W (C x D), b (C)]``. The classifier head is always the tail of the vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np


class ModelKind(str, Enum):
    SOFTMAX_REGRESSION = "softmax_regression"
    MLP2 = "mlp2"


class NumericError(ArithmeticError):
    """A loss or gradient came out non-finite."""


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    input_dim: int
    num_classes: int
    hidden_dim: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if self.input_dim < 1 or self.num_classes < 1:
            raise ValueError("input_dim and num_classes must be >= 1")
        if self.kind is ModelKind.MLP2 and self.hidden_dim < 1:
            raise ValueError("mlp2 needs hidden_dim >= 1")

    @property
    def num_params(self) -> int:
        D, C, H = self.input_dim, self.num_classes, self.hidden_dim
        if self.kind is ModelKind.SOFTMAX_REGRESSION:
            return (D + 1) * C
        return (D + 1) * H + (H + 1) * C

    def head_slice(self) -> slice:
        """Coordinates of the last (classifier) layer, weights and bias."""
        d = self.num_params
        fan_in = self.input_dim if self.kind is ModelKind.SOFTMAX_REGRESSION else self.hidden_dim
        return slice(d - (fan_in + 1) * self.num_classes, d)


@dataclass(frozen=True)
class LabeledBatch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
            raise ValueError(f"bad batch shapes {x.shape} / {y.shape}")
        if x.shape[0] < 1:
            raise ValueError("batch must hold at least one sample")
        if np.any(y < 0):
            raise ValueError("labels must be nonnegative class indices")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.shape[0]

    def take(self, idx) -> "LabeledBatch":
        return LabeledBatch(self.inputs[idx], self.labels[idx])


def _unpack(spec: ModelSpec, params: np.ndarray):
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (spec.num_params,):
        raise ValueError(f"expected {spec.num_params} params, got {params.shape}")
    D, C, H = spec.input_dim, spec.num_classes, spec.hidden_dim
    if spec.kind is ModelKind.SOFTMAX_REGRESSION:
        W = params[: C * D].reshape(C, D)
        b = params[C * D :]
        return W, b
    o = 0
    W1 = params[o : o + H * D].reshape(H, D)
    o += H * D
    b1 = params[o : o + H]
    o += H
    W2 = params[o : o + C * H].reshape(C, H)
    o += C * H
    b2 = params[o:]
    return W1, b1, W2, b2


def _check_labels(spec: ModelSpec, batch: LabeledBatch) -> None:
    if batch.labels.max() >= spec.num_classes:
        raise ValueError(f"label {batch.labels.max()} >= num_classes {spec.num_classes}")


def _logits(spec: ModelSpec, params, x: np.ndarray):
    parts = _unpack(spec, params)
    if spec.kind is ModelKind.SOFTMAX_REGRESSION:
        W, b = parts
        return x @ W.T + b, None
    W1, b1, W2, b2 = parts
    pre = x @ W1.T + b1
    hidden = np.maximum(pre, 0.0)
    return hidden @ W2.T + b2, (pre, hidden)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _mean_nll(logp: np.ndarray, labels: np.ndarray) -> float:
    loss = -float(np.mean(logp[np.arange(labels.shape[0]), labels]))
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")
    return loss


def init_params(spec: ModelSpec, seed: int) -> np.ndarray:
    """Gaussian weights with std 1/sqrt(fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    D, C, H = spec.input_dim, spec.num_classes, spec.hidden_dim
    if spec.kind is ModelKind.SOFTMAX_REGRESSION:
        W = rng.normal(0.0, 1.0 / np.sqrt(D), size=(C, D))
        return np.concatenate([W.ravel(), np.zeros(C)])
    W1 = rng.normal(0.0, 1.0 / np.sqrt(D), size=(H, D))
    W2 = rng.normal(0.0, 1.0 / np.sqrt(H), size=(C, H))
    return np.concatenate([W1.ravel(), np.zeros(H), W2.ravel(), np.zeros(C)])


def loss_and_grad(spec: ModelSpec, params, batch: LabeledBatch) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. ``params``."""
    _check_labels(spec, batch)
    x, y = batch.inputs, batch.labels
    B = y.shape[0]
    logits, cache = _logits(spec, params, x)
    logp = _log_softmax(logits)
    loss = _mean_nll(logp, y)

    dlogits = np.exp(logp)
    dlogits[np.arange(B), y] -= 1.0
    dlogits /= B

    if spec.kind is ModelKind.SOFTMAX_REGRESSION:
        grad = np.concatenate([(dlogits.T @ x).ravel(), dlogits.sum(axis=0)])
    else:
        pre, hidden = cache
        _, _, W2, _ = _unpack(spec, params)
        dW2 = dlogits.T @ hidden
        db2 = dlogits.sum(axis=0)
        dhidden = dlogits @ W2
        # subgradient 0 at pre == 0
        dpre = np.where(pre > 0.0, dhidden, 0.0)
        dW1 = dpre.T @ x
        db1 = dpre.sum(axis=0)
        grad = np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient")
    return loss, grad


def predict_loss(spec: ModelSpec, params, batch: LabeledBatch) -> float:
    _check_labels(spec, batch)
    logits, _ = _logits(spec, params, batch.inputs)
    return _mean_nll(_log_softmax(logits), batch.labels)


def predict(spec: ModelSpec, params, inputs) -> np.ndarray:
    logits, _ = _logits(spec, params, np.asarray(inputs, dtype=np.float64))
    # argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(logits, axis=1)


def accuracy(spec: ModelSpec, params, batch: LabeledBatch) -> float:
    return float(np.mean(predict(spec, params, batch.inputs) == batch.labels))
