"""Minimal differentiable binary classifier on flat parameter vectors.

A fully-connected ReLU network with two output logits (real=0, fake=1),
stored as one flat float64 array so that importance weights, anchors and
velocities can be kept index-congruent with the parameters. Provides the
exact backward pass, SGD with classic momentum and a cosine learning-rate
schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, NumericError
from ._util import seeded_rng


@dataclass(frozen=True)
class ModelSpec:
    """Layer widths of the classifier, input first, 2 logits last."""

    layer_widths: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2:
            raise ConfigError("layer_widths needs at least input and output entries")
        if widths[-1] != 2:
            raise ConfigError("output layer must have exactly 2 logits (real, fake)")
        if any(w < 1 for w in widths):
            raise ConfigError("all layer widths must be >= 1")
        if self.activation != "relu":
            raise ConfigError(f"unsupported activation: {self.activation!r}")

    @property
    def input_width(self) -> int:
        return self.layer_widths[0]


def default_model_spec(input_side: int = 32, hidden_widths: tuple[int, ...] = (64, 32)) -> ModelSpec:
    """Reference MLP over flattened square patches."""
    return ModelSpec((input_side * input_side, *hidden_widths, 2))


def param_count(spec: ModelSpec) -> int:
    """Total number of weights and biases for the spec."""
    widths = spec.layer_widths
    return sum((w_in + 1) * w_out for w_in, w_out in zip(widths[:-1], widths[1:]))


def check_params(spec: ModelSpec, params: np.ndarray) -> np.ndarray:
    """Validate that a flat parameter vector is congruent with the spec."""
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.shape[0] != param_count(spec):
        raise ConfigError(
            f"parameter vector of length {params.shape} is not congruent with "
            f"spec {spec.layer_widths} (expected {param_count(spec)})"
        )
    return params


def unpack(spec: ModelSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views of the flat vector as per-layer (W, b) pairs.

    Layout per layer: the (w_in, w_out) weight matrix row-major, then the
    w_out bias entries. The mapping is fixed so anchors and Fisher arrays
    line up index-for-index with the parameters.
    """
    layers = []
    offset = 0
    widths = spec.layer_widths
    for w_in, w_out in zip(widths[:-1], widths[1:]):
        w = params[offset : offset + w_in * w_out].reshape(w_in, w_out)
        offset += w_in * w_out
        b = params[offset : offset + w_out]
        offset += w_out
        layers.append((w, b))
    return layers


def init_params(spec: ModelSpec, seed: int = 0) -> np.ndarray:
    """He-uniform weight init (zero biases) from a seeded generator."""
    rng = seeded_rng(seed, "he-uniform-init")
    params = np.zeros(param_count(spec))
    for w, _b in unpack(spec, params):
        limit = np.sqrt(6.0 / w.shape[0])
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    return params


def forward_batch(spec: ModelSpec, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Logits (n, 2) for a batch of row-vector inputs. No validation."""
    acts = inputs
    layers = unpack(spec, params)
    for i, (w, b) in enumerate(layers):
        acts = acts @ w + b
        if i < len(layers) - 1:
            acts = np.maximum(acts, 0.0)
    return acts


def forward(spec: ModelSpec, params: np.ndarray, input_vec: np.ndarray) -> np.ndarray:
    """Logits for one input vector; pure function of its arguments."""
    params = check_params(spec, params)
    x = np.asarray(input_vec, dtype=np.float64).ravel()
    if x.shape[0] != spec.input_width:
        raise ConfigError(
            f"input of length {x.shape[0]} does not match model input width {spec.input_width}"
        )
    return forward_batch(spec, params, x[None, :])[0]


def softmax_temp(logits: np.ndarray, tau: float) -> np.ndarray:
    """Temperature softmax over the last axis, max-subtracted for stability."""
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    z = np.asarray(logits, dtype=np.float64) / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


_LOG_CLAMP = 1e-12


def cross_entropy(probs: np.ndarray, label: int) -> float:
    """-log p(label), with probabilities clamped at 1e-12 before the log."""
    p = max(float(np.asarray(probs)[label]), _LOG_CLAMP)
    return -np.log(p)


def softmax_ce_loss(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample softmax cross-entropy and its gradient wrt the logits.

    Returns (losses (n,), dlogits (n, 2)); the gradient is the familiar
    p - onehot(y).
    """
    probs = softmax_temp(logits, 1.0)
    n = logits.shape[0]
    picked = np.maximum(probs[np.arange(n), labels], _LOG_CLAMP)
    losses = -np.log(picked)
    grads = probs.copy()
    grads[np.arange(n), labels] -= 1.0
    return losses, grads


def backward(spec: ModelSpec, params: np.ndarray, batch, loss_fn=softmax_ce_loss):
    """Mean loss over a batch and its exact gradient wrt the flat params.

    `batch` is a list of (input, label) pairs or an (inputs, labels) array
    pair. `loss_fn(logits, labels)` must return per-sample losses and
    per-sample gradients wrt the logits; the default is plain softmax
    cross-entropy.

    Returns (mean_loss, gradient) with the gradient congruent to params.
    """
    inputs, labels = _as_batch_arrays(spec, batch)
    if inputs.shape[0] == 0:
        raise ConfigError("batch must be non-empty")

    layers = unpack(spec, check_params(spec, params))
    # Forward, keeping activations for the backward sweep.
    acts = [inputs]
    pre = []
    a = inputs
    for i, (w, b) in enumerate(layers):
        z = a @ w + b
        pre.append(z)
        a = np.maximum(z, 0.0) if i < len(layers) - 1 else z
        acts.append(a)
    logits = acts[-1]
    if not np.isfinite(logits).all():
        bad = int(np.argwhere(~np.isfinite(logits).all(axis=1))[0][0])
        raise NumericError(f"non-finite logits in forward pass at sample index {bad}")

    losses, dlogits = loss_fn(logits, labels)
    n = inputs.shape[0]
    mean_loss = float(np.mean(losses))

    grad = np.zeros_like(params)
    grad_layers = unpack(spec, grad)
    delta = dlogits / n
    for i in reversed(range(len(layers))):
        w, _b = layers[i]
        gw, gb = grad_layers[i]
        gw[...] = acts[i].T @ delta
        gb[...] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ w.T) * (pre[i - 1] > 0.0)
    return mean_loss, grad


def _as_batch_arrays(spec: ModelSpec, batch) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, tuple) and len(batch) == 2:
        inputs, labels = batch
        inputs = np.asarray(inputs, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
    else:
        inputs = np.asarray([np.asarray(x, dtype=np.float64).ravel() for x, _y in batch])
        labels = np.asarray([int(y) for _x, y in batch], dtype=np.int64)
    if inputs.ndim != 2 or inputs.shape[1] != spec.input_width:
        raise ConfigError(
            f"batch inputs of shape {inputs.shape} do not match input width {spec.input_width}"
        )
    return inputs, labels


@dataclass
class OptimizerState:
    """SGD-with-momentum state plus the cosine schedule endpoints."""

    learning_rate_initial: float
    learning_rate_min: float
    momentum: float
    velocity: np.ndarray
    epoch_budget: int

    def __post_init__(self):
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.learning_rate_min > self.learning_rate_initial:
            raise ConfigError("learning_rate_min must not exceed learning_rate_initial")
        if self.epoch_budget < 1:
            raise ConfigError("epoch_budget must be a positive integer")
        self.velocity = np.asarray(self.velocity, dtype=np.float64)


def make_optimizer(spec: ModelSpec, lr_initial: float, lr_min: float, momentum: float,
                   epoch_budget: int) -> OptimizerState:
    return OptimizerState(lr_initial, lr_min, momentum, np.zeros(param_count(spec)), epoch_budget)


def sgd_step(params: np.ndarray, gradient: np.ndarray, opt: OptimizerState, lr: float) -> np.ndarray:
    """Classic momentum: v <- momentum*v + g; theta <- theta - lr*v.

    Mutates opt.velocity (the single explicitly stateful value in this
    module) and returns the updated parameter vector.
    """
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != params.shape or opt.velocity.shape != params.shape:
        raise ConfigError("params, gradient and velocity must be congruent")
    if not np.isfinite(gradient).all():
        raise NumericError("non-finite gradient passed to sgd_step")
    opt.velocity = opt.momentum * opt.velocity + gradient
    return params - lr * opt.velocity


def cosine_lr(epoch: int, opt: OptimizerState) -> float:
    """Cosine annealing from lr_initial at epoch 0 down to lr_min at the budget."""
    if epoch < 0 or epoch > opt.epoch_budget:
        raise ValueError(f"epoch {epoch} outside [0, {opt.epoch_budget}]")
    lo, hi = opt.learning_rate_min, opt.learning_rate_initial
    return lo + 0.5 * (hi - lo) * (1.0 + np.cos(np.pi * epoch / opt.epoch_budget))


def predict_labels(spec: ModelSpec, params: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties resolve to class 0 (real)."""
    logits = forward_batch(spec, params, inputs)
    return (logits[:, 1] > logits[:, 0]).astype(np.int64)
