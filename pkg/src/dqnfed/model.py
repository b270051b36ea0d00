"""Flat-parameter prediction models with analytic gradients.

Three kinds are supported:

``linear-softmax``
    multinomial logistic regression; parameters are the row-major weight
    matrix ``W`` (input_dim x num_classes) followed by the bias vector.
``mlp-1h``
    one tanh hidden layer: ``W1, b1, W2, b2`` concatenated in that order.
``quadratic``
    ``f(theta) = mean_i 0.5*|theta - x_i|^2``; every sample is a point and
    labels are ignored.  Used for the conflicting-quadratics benchmark and for
    hand-checkable examples.

Every kind adds ``(l2_reg / 2) * |theta|^2`` to the loss.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import rng as _rng
from .errors import DimensionMismatch

KINDS = ("linear-softmax", "mlp-1h", "quadratic")
INIT_SCALE = 0.05


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    num_classes: int = 2
    hidden_dim: int = 0
    l2_reg: float = 1e-3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")
        if self.kind != "quadratic" and self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.kind == "mlp-1h" and self.hidden_dim < 1:
            raise ValueError("mlp-1h needs hidden_dim >= 1")
        if self.l2_reg < 0:
            raise ValueError("l2_reg must be nonnegative")

    @property
    def num_params(self) -> int:
        d, c, h = self.input_dim, self.num_classes, self.hidden_dim
        if self.kind == "linear-softmax":
            return d * c + c
        if self.kind == "mlp-1h":
            return d * h + h + h * c + c
        return d


class Batch(NamedTuple):
    features: np.ndarray
    labels: np.ndarray


def init_params(spec: ModelSpec, seed: int) -> np.ndarray:
    """Uniform(-0.05, 0.05) weights, zero biases; deterministic in (spec, seed)."""
    gen = _rng.generator(seed)
    if spec.kind == "quadratic":
        return gen.uniform(-INIT_SCALE, INIT_SCALE, spec.num_params)
    parts = []
    for shape, is_bias in _layout(spec):
        size = int(np.prod(shape))
        parts.append(np.zeros(size) if is_bias else gen.uniform(-INIT_SCALE, INIT_SCALE, size))
    return np.concatenate(parts)


def _layout(spec):
    d, c, h = spec.input_dim, spec.num_classes, spec.hidden_dim
    if spec.kind == "linear-softmax":
        return [((d, c), False), ((c,), True)]
    if spec.kind == "mlp-1h":
        return [((d, h), False), ((h,), True), ((h, c), False), ((c,), True)]
    return [((d,), False)]


def _unpack(spec, params):
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.size != spec.num_params:
        raise DimensionMismatch(
            f"{spec.kind} with this spec has {spec.num_params} parameters, got {params.size}"
        )
    out, pos = [], 0
    for shape, _ in _layout(spec):
        size = int(np.prod(shape))
        out.append(params[pos:pos + size].reshape(shape))
        pos += size
    return params, out


def _check_batch(spec, batch):
    x = np.asarray(batch.features, dtype=np.float64)
    y = np.asarray(batch.labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise DimensionMismatch(f"features must be n x {spec.input_dim}, got {x.shape}")
    if len(x) == 0 or len(y) != len(x):
        raise DimensionMismatch("batch must be nonempty with one label per row")
    return x, y


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def logits(spec: ModelSpec, params, features) -> np.ndarray:
    if spec.kind == "quadratic":
        raise ValueError("quadratic models have no logits")
    _, blocks = _unpack(spec, params)
    x = np.asarray(features, dtype=np.float64)
    if spec.kind == "linear-softmax":
        w, b = blocks
        return x @ w + b
    w1, b1, w2, b2 = blocks
    return np.tanh(x @ w1 + b1) @ w2 + b2


def loss_and_grad(spec: ModelSpec, params, batch) -> tuple:
    """Mean loss over the batch plus l2 penalty, and its exact gradient."""
    params, blocks = _unpack(spec, params)
    x, y = _check_batch(spec, batch)
    n = len(x)
    reg = 0.5 * spec.l2_reg * float(params @ params)

    if spec.kind == "quadratic":
        diff = params[None, :] - x
        loss = 0.5 * float(np.einsum("ij,ij->", diff, diff)) / n
        grad = diff.mean(axis=0)
        return loss + reg, grad + spec.l2_reg * params

    if spec.kind == "linear-softmax":
        w, b = blocks
        z = x @ w + b
    else:
        w1, b1, w2, b2 = blocks
        hidden = np.tanh(x @ w1 + b1)
        z = hidden @ w2 + b2

    logp = _log_softmax(z)
    loss = -float(logp[np.arange(n), y].sum()) / n
    dz = np.exp(logp)
    dz[np.arange(n), y] -= 1.0
    dz /= n

    if spec.kind == "linear-softmax":
        grad = np.concatenate([(x.T @ dz).ravel(), dz.sum(axis=0)])
    else:
        dh = (dz @ w2.T) * (1.0 - hidden**2)
        grad = np.concatenate([
            (x.T @ dh).ravel(), dh.sum(axis=0), (hidden.T @ dz).ravel(), dz.sum(axis=0),
        ])
    return loss + reg, grad + spec.l2_reg * params


def loss(spec: ModelSpec, params, batch) -> float:
    return loss_and_grad(spec, params, batch)[0]


def predict(spec: ModelSpec, params, features) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class
    return np.argmax(logits(spec, params, features), axis=1)


def accuracy(spec: ModelSpec, params, batch) -> float:
    """Fraction of samples whose argmax logit equals the label."""
    if spec.kind == "quadratic":
        raise ValueError("accuracy is undefined for quadratic models")
    _unpack(spec, params)
    x, y = _check_batch(spec, batch)
    return float(np.mean(predict(spec, params, x) == y))
