"""Small ReLU MLP Q-network with hand-written backprop and plain SGD.

All parameters of a network live in one flat array; the per-layer weight
and bias arrays are views into it.  That makes flatten/load and the
evolutionary operators (which work on the flat vector) trivially cheap.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np


class NumericalError(FloatingPointError):
    """Raised when a loss or gradient stops being finite."""

    def __init__(self, message: str, episode: int | None = None):
        if episode is not None:
            message = f"{message} (episode {episode})"
        super().__init__(message)
        self.episode = episode


@dataclass(frozen=True)
class MlpSpec:
    input_size: int
    hidden_sizes: tuple[int, ...] = (32, 8)
    output_size: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        sizes = self.layer_sizes
        if any(s < 1 for s in sizes):
            raise ValueError(f"all layer sizes must be >= 1, got {sizes}")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.input_size, *self.hidden_sizes, self.output_size)

    @property
    def n_params(self) -> int:
        s = self.layer_sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))


class Batch(NamedTuple):
    states: np.ndarray  # (B, input_size)
    actions: np.ndarray  # (B,) int
    returns: np.ndarray  # (B,)

    @classmethod
    def from_transitions(cls, transitions: Sequence) -> "Batch":
        states = np.array([t.state for t in transitions], dtype=float)
        actions = np.array([t.action for t in transitions], dtype=np.int64)
        returns = np.array([t.mc_return for t in transitions], dtype=float)
        return cls(states, actions, returns)


def _layer_views(spec: MlpSpec, flat: np.ndarray):
    weights, biases = [], []
    s = spec.layer_sizes
    offset = 0
    for fan_in, fan_out in zip(s[:-1], s[1:]):
        weights.append(flat[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out))
        offset += fan_in * fan_out
        biases.append(flat[offset:offset + fan_out])
        offset += fan_out
    return weights, biases


@dataclass(eq=False)
class QNetwork:
    """MLP mapping a state to one Q-value per action.

    Layer l computes ``h @ W_l + b_l``; W_l has shape (fan_in, fan_out).
    The flat parameter order is layer by layer, each layer's weights in
    row-major order followed by its biases.
    """

    spec: MlpSpec
    dtype: np.dtype = np.float64
    params: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.dtype = np.dtype(self.dtype)
        self.params = np.zeros(self.spec.n_params, dtype=self.dtype)
        self._bind_views()

    def _bind_views(self):
        self.weights, self.biases = _layer_views(self.spec, self.params)

    @property
    def n_params(self) -> int:
        return self.spec.n_params

    def copy(self) -> "QNetwork":
        other = QNetwork(self.spec, self.dtype)
        other.params[:] = self.params
        return other

    def __call__(self, states):
        return forward(self, states)


def init_network(spec: MlpSpec, rng: np.random.Generator, dtype=np.float64) -> QNetwork:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero."""
    net = QNetwork(spec, dtype)
    for w in net.weights:
        bound = 1.0 / np.sqrt(w.shape[0])
        w[:] = rng.uniform(-bound, bound, size=w.shape)
    return net


def flatten_params(net: QNetwork) -> np.ndarray:
    return net.params.copy()


def load_params(net: QNetwork, values) -> QNetwork:
    values = np.asarray(values)
    if values.shape != (net.n_params,):
        raise ValueError(f"expected {net.n_params} parameters, got shape {values.shape}")
    net.params[:] = values
    return net


def _check_states(net: QNetwork, states) -> np.ndarray:
    x = np.asarray(states, dtype=net.dtype)
    if x.shape[-1:] != (net.spec.input_size,) or x.ndim > 2:
        raise ValueError(
            f"state dimension mismatch: expected (..., {net.spec.input_size}), got {x.shape}")
    return x


def forward(net: QNetwork, states) -> np.ndarray:
    """Q-values for one state (1-d input) or a batch of states (2-d input)."""
    h = _check_states(net, states)
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w
        h += b
        if l < last:
            np.maximum(h, 0.0, out=h)
    return h


def loss_and_grad(net: QNetwork, batch: Batch, weights=None):
    """Loss ``mean(w * (Q(s,a) - G)^2)`` and its gradient w.r.t. the flat params.

    Only the output of the taken action receives gradient.  Returns
    ``(loss, grad, residuals)`` with residuals ``Q(s,a) - G`` per sample.
    """
    x = _check_states(net, batch.states)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("batch must be a non-empty 2-d array of states")
    actions = np.asarray(batch.actions)
    targets = np.asarray(batch.returns, dtype=net.dtype)
    n = len(x)

    # forward pass, keeping every layer output for the backward pass
    acts = [x]
    h = x
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w
        h += b
        if l < last:
            np.maximum(h, 0.0, out=h)
        acts.append(h)
    q = acts[-1]
    rows = np.arange(n)
    residuals = q[rows, actions] - targets
    if weights is None:
        loss = float(residuals @ residuals) / n
        dq_sel = residuals * (2.0 / n)
    else:
        weights = np.asarray(weights, dtype=net.dtype)
        wr = weights * residuals
        loss = float(wr @ residuals) / n
        dq_sel = wr * (2.0 / n)

    grad = np.zeros_like(net.params)
    gw, gb = _layer_views(net.spec, grad)

    ones = np.ones(n, dtype=net.dtype)
    delta = np.zeros_like(q)
    delta[rows, actions] = dq_sel
    for l in range(last, -1, -1):
        np.matmul(acts[l].T, delta, out=gw[l])
        np.matmul(ones, delta, out=gb[l])
        if l > 0:
            delta = delta @ net.weights[l].T
            delta *= acts[l] > 0
    return loss, grad, residuals


class Sgd:
    """Plain gradient descent."""

    def __init__(self, learning_rate: float = 0.01):
        self.learning_rate = learning_rate

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        if self.learning_rate:
            params -= self.learning_rate * grad

    def reset(self) -> None:
        pass


class Adam:
    """Adam with bias correction; one instance per network."""

    def __init__(self, n_params: int, learning_rate: float = 0.01, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-7):
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(n_params)
        self.v = np.zeros(n_params)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        self.m *= b1
        self.m += (1 - b1) * grad
        self.v *= b2
        self.v += (1 - b2) * np.square(grad)
        m_hat = self.m / (1 - b1 ** self.t)
        v_hat = self.v / (1 - b2 ** self.t)
        params -= (self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)).astype(params.dtype)

    def reset(self) -> None:
        self.m[:] = 0
        self.v[:] = 0
        self.t = 0


def make_optimizer(name: str, n_params: int, learning_rate: float):
    if name == "sgd":
        return Sgd(learning_rate)
    if name == "adam":
        return Adam(n_params, learning_rate)
    raise ValueError(f"unknown optimizer {name!r}")


def train_step(net: QNetwork, batch: Batch, optimizer, weights=None,
               episode: int | None = None):
    """One optimizer step in place.  Returns ``(pre-step loss, residuals)``."""
    loss, grad, residuals = loss_and_grad(net, batch, weights)
    if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite loss or gradient", episode)
    optimizer.step(net.params, grad)
    return loss, residuals


def train_batch(net: QNetwork, batch, learning_rate: float = 0.01, weights=None,
                episode: int | None = None, optimizer=None) -> float:
    """One step on the squared Monte-Carlo regression error; returns the pre-step loss.

    Without an explicit optimizer this is a plain SGD step.
    """
    if not isinstance(batch, Batch):
        batch = Batch.from_transitions(batch)
    loss, _ = train_step(net, batch, optimizer or Sgd(learning_rate), weights, episode)
    return loss
