"""Dense network engine: forward pass, reverse-mode gradients, finite differences, SGD."""
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from marlrank.errors import DivergenceError, ShapeError
from marlrank.models.params import GradientBuffer, Head, LayerParams, ModelParams, Network
from marlrank.schemas.schemas import Activation

logger = logging.getLogger(__name__)

Parameterized = ModelParams | Network


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - np.max(z, axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / np.sum(exps, axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - np.max(z, axis=-1, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=-1, keepdims=True))


def log_softmax_grad(probs: np.ndarray, action: np.ndarray | int) -> np.ndarray:
    """d log p[action] / d logits = onehot(action) - p, row-wise."""
    probs = np.atleast_2d(probs)
    onehot = np.zeros_like(probs)
    onehot[np.arange(probs.shape[0]), np.atleast_1d(action)] = 1.0
    return onehot - probs


def _activate(activation: Activation, z: np.ndarray) -> np.ndarray:
    if activation == Activation.TANH:
        return np.tanh(z)
    return relu(z)


def _activation_grad(activation: Activation, z: np.ndarray, out: np.ndarray) -> np.ndarray:
    if activation == Activation.TANH:
        return 1.0 - out**2
    return (z > 0).astype(np.float64)


def _apply_head(head: Head, z: np.ndarray) -> np.ndarray:
    if head == Head.SOFTMAX:
        return softmax(z)
    if head == Head.SIGMOID:
        return sigmoid(z)
    return z


def _head_backward(head: Head, out: np.ndarray, grad: np.ndarray) -> np.ndarray:
    if head == Head.SOFTMAX:
        return out * (grad - np.sum(grad * out, axis=1, keepdims=True))
    if head == Head.SIGMOID:
        return grad * out * (1.0 - out)
    return grad


@dataclass
class ForwardCache:
    """Layer inputs and pre-activations of one forward pass (always 2-D)."""

    inputs: list[np.ndarray]
    preacts: list[np.ndarray]
    output: np.ndarray
    batched: bool

    @property
    def logits(self) -> np.ndarray:
        return self.preacts[-1]


def forward(net: Network, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Run `net` on one input vector or a batch of row vectors."""
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    h = np.atleast_2d(x)
    if h.shape[1] != net.in_dim:
        raise ShapeError(f"network expects {net.in_dim} inputs, got {h.shape[1]}")

    inputs: list[np.ndarray] = []
    preacts: list[np.ndarray] = []
    last = len(net.layers) - 1
    for idx, layer in enumerate(net.layers):
        inputs.append(h)
        z = h @ layer.weights.T + layer.bias
        preacts.append(z)
        h = _activate(net.activation, z) if idx < last else _apply_head(net.head, z)

    cache = ForwardCache(inputs=inputs, preacts=preacts, output=h, batched=batched)
    return (h if batched else h[0]), cache


def backward(
    net: Network,
    cache: ForwardCache,
    upstream_grad: np.ndarray,
    through_head: bool = True,
) -> GradientBuffer:
    """Reverse-mode gradients of a scalar objective.

    `upstream_grad` is d(objective)/d(output) or, with ``through_head=False``,
    d(objective)/d(logits). Batch rows are summed. The input gradient is
    returned in ``GradientBuffer.input_grad``.
    """
    g = np.atleast_2d(np.asarray(upstream_grad, dtype=np.float64))
    if g.shape != cache.output.shape:
        raise ShapeError(f"upstream gradient {g.shape} does not match output {cache.output.shape}")
    if len(cache.inputs) != len(net.layers):
        raise ShapeError("cache comes from a different network")

    if through_head:
        g = _head_backward(net.head, cache.output, g)

    grads: dict[str, LayerParams] = {}
    last = len(net.layers) - 1
    for idx in range(last, -1, -1):
        layer = net.layers[idx]
        if idx < last:
            g = g * _activation_grad(net.activation, cache.preacts[idx], cache.inputs[idx + 1])
        grads[net.names[idx]] = LayerParams(g.T @ cache.inputs[idx], g.sum(axis=0))
        g = g @ layer.weights

    ordered = {name: grads[name] for name in net.names}
    return GradientBuffer(ordered, input_grad=g if cache.batched else g[0])


def numeric_gradient(
    objective: Callable[[Parameterized], float],
    params: Parameterized,
    epsilon: float,
) -> GradientBuffer:
    """Central differences of `objective` around `params` (restored afterwards)."""
    numeric = GradientBuffer.zeros_like(params)
    for name, layer in params.named_layers().items():
        target = numeric.layers[name]
        for values, out in ((layer.weights, target.weights), (layer.bias, target.bias)):
            for idx in np.ndindex(values.shape):
                original = values[idx]
                values[idx] = original + epsilon
                plus = objective(params)
                values[idx] = original - epsilon
                minus = objective(params)
                values[idx] = original
                out[idx] = (plus - minus) / (2.0 * epsilon)
    return numeric


def max_relative_error(analytic: GradientBuffer, numeric: GradientBuffer) -> float:
    worst = 0.0
    for name, expected in numeric.layers.items():
        got = analytic.layers[name]
        for a, n in ((got.weights, expected.weights), (got.bias, expected.bias)):
            if a.size == 0:
                continue
            denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)
            worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def _objective_weights(out_dim: int) -> np.ndarray:
    # squared so that no output weight equals the mean weight
    return np.linspace(1.0, 2.0, out_dim) ** 2 if out_dim > 1 else np.ones(1)


def grad_check(net: Network, x: np.ndarray, epsilon: float = 1e-5, corruption: float = 0.0) -> float:
    """Max relative error between `backward` and central differences.

    The checked objective is a fixed weighted sum of the network outputs.
    `corruption` is added to the first bias gradient of the output layer so
    the check itself can be mutation-tested.
    """
    if not 1e-7 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon must lie in [1e-7, 1e-3], got {epsilon}")
    work = net.copy()
    weights = _objective_weights(work.out_dim)

    def objective(candidate: Network) -> float:
        out, _ = forward(candidate, x)
        return float(np.sum(np.atleast_2d(out) * weights))

    out, cache = forward(work, x)
    upstream = np.broadcast_to(weights, np.atleast_2d(out).shape)
    analytic = backward(work, cache, upstream)
    if corruption:
        analytic.layers[work.names[-1]].bias[0] += corruption

    numeric = numeric_gradient(objective, work, epsilon)
    error = max_relative_error(analytic, numeric)
    logger.debug("grad_check on %s -> max_rel_err=%.3e", work.names, error)
    return error


def sgd_step(
    params: Parameterized,
    grads: GradientBuffer,
    learning_rate: float,
) -> Parameterized:
    """Gradient ascent, theta <- theta + lr * grad, on a copy of `params`.

    Descent on a loss is done by passing the gradient of the negated loss.
    """
    if learning_rate <= 0:
        raise ValueError(f"learning rate must be positive, got {learning_rate}")
    if not grads.is_finite():
        raise DivergenceError("non-finite gradient, training diverged")

    updated = params.copy()
    for name, layer in updated.named_layers().items():
        grad = grads.layers.get(name)
        if grad is None:
            raise ShapeError(f"missing gradient for layer {name!r}")
        if grad.weights.shape != layer.weights.shape or grad.bias.shape != layer.bias.shape:
            raise ShapeError(
                f"{name}: gradient shape {grad.weights.shape} != parameter shape {layer.weights.shape}"
            )
        layer.weights += learning_rate * grad.weights
        layer.bias += learning_rate * grad.bias
    return updated
