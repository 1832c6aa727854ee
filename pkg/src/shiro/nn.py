"""Dense MLP with analytic backprop, Adam and Polyak averaging.

All parameters of a network live in one flat float64 vector; per-layer
weight matrices and bias vectors are views into it. Optimizer and target
updates therefore act on a single array.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ACTIVATIONS = ("identity", "tanh")
JSON_VERSION = 1


class ShapeError(ValueError):
    """Raised when array shapes violate a network or optimizer contract."""


def _layer_slices(layer_sizes):
    slices = []
    offset = 0
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        w = (offset, offset + fan_out * fan_in, (fan_out, fan_in))
        offset += fan_out * fan_in
        b = (offset, offset + fan_out, (fan_out,))
        offset += fan_out
        slices.append((w, b))
    return slices, offset


def _views(flat, slices):
    weights = [flat[lo:hi].reshape(shape) for (lo, hi, shape), _ in slices]
    biases = [flat[lo:hi] for _, (lo, hi, _s) in slices]
    return weights, biases


def _check_sizes(layer_sizes):
    sizes = tuple(int(n) for n in layer_sizes)
    if len(sizes) < 2 or any(n <= 0 for n in sizes):
        raise ValueError(f"layer_sizes must hold at least two positive ints, got {layer_sizes!r}")
    return sizes


class MlpNetwork:
    """Fixed-depth feed-forward network: ReLU hidden layers, identity or tanh output.

    ``weights[i]`` has shape ``(layer_sizes[i+1], layer_sizes[i])``.
    """

    def __init__(self, layer_sizes: Sequence[int], output_activation: str = "identity",
                 params: np.ndarray | None = None):
        if output_activation not in ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {ACTIVATIONS}")
        self.layer_sizes = _check_sizes(layer_sizes)
        self.output_activation = output_activation
        self._slices, n = _layer_slices(self.layer_sizes)
        if params is None:
            params = np.zeros(n)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (n,):
            raise ShapeError(f"expected {n} parameters, got shape {params.shape}")
        self.params = params.copy()
        self.weights, self.biases = _views(self.params, self._slices)

    @property
    def n_params(self) -> int:
        return self.params.size

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "MlpNetwork":
        return MlpNetwork(self.layer_sizes, self.output_activation, self.params)

    def same_architecture(self, other: "MlpNetwork") -> bool:
        return (self.layer_sizes == other.layer_sizes
                and self.output_activation == other.output_activation)

    def split(self, flat: np.ndarray):
        """Per-layer (weights, biases) views of a flat vector shaped like ``params``."""
        return _views(flat, self._slices)

    def __call__(self, x):
        return forward(self, x)

    def to_dict(self) -> dict:
        return {
            "version": JSON_VERSION,
            "layer_sizes": list(self.layer_sizes),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "output_activation": self.output_activation,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MlpNetwork":
        if data.get("version") != JSON_VERSION:
            raise ValueError(f"unsupported network version {data.get('version')!r}")
        net = cls(data["layer_sizes"], data["output_activation"])
        for i, (w, b) in enumerate(zip(data["weights"], data["biases"])):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.shape != net.weights[i].shape or b.shape != net.biases[i].shape:
                raise ShapeError(f"layer {i} shape mismatch in serialized network")
            net.weights[i][...] = w
            net.biases[i][...] = b
        return net

    def to_json(self) -> str:
        # json emits repr(float): shortest string that round-trips exactly
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "MlpNetwork":
        return cls.from_dict(json.loads(text))


@dataclass
class Gradients:
    """Flat gradient vector with per-layer views mirroring the network."""

    flat: np.ndarray
    weights: list = field(repr=False)
    biases: list = field(repr=False)


def init_mlp(layer_sizes: Sequence[int], output_activation: str = "identity",
             seed: int | np.random.Generator = 0, final_init: float = 3e-3) -> MlpNetwork:
    """Hidden layers uniform in +-1/sqrt(fan_in); final layer uniform in +-final_init."""
    sizes = _check_sizes(layer_sizes)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.Philox(seed))
    net = MlpNetwork(sizes, output_activation)
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        bound = final_init if i == last else 1.0 / np.sqrt(sizes[i])
        w[...] = rng.uniform(-bound, bound, size=w.shape)
        b[...] = rng.uniform(-bound, bound, size=b.shape)
    return net


def _as_batch(net, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ShapeError(f"input of shape {np.shape(x)} does not match input dim {net.input_dim}")
    return x, single


def forward_cache(net: MlpNetwork, x):
    """Batched forward pass; returns ``(output, cache)`` for :func:`backward_cache`."""
    h, single = _as_batch(net, x)
    inputs = []
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        h = h @ w.T
        h += b
        if i < last:
            np.maximum(h, 0.0, out=h)
        elif net.output_activation == "tanh":
            np.tanh(h, out=h)
    cache = (inputs, h, single)
    return (h[0] if single else h), cache


def forward(net: MlpNetwork, x) -> np.ndarray:
    return forward_cache(net, x)[0]


def backward_cache(net: MlpNetwork, cache, upstream, need_params: bool = True):
    """Gradient of ``sum(upstream * output)`` w.r.t. parameters and input.

    Returns ``(flat_param_grad or None, input_grad)``. ReLU has zero slope at 0.
    """
    inputs, out, single = cache
    delta = np.asarray(upstream, dtype=np.float64)
    if single:
        delta = delta[None, :] if delta.ndim == 1 else delta
    if delta.shape != out.shape:
        raise ShapeError(f"upstream shape {np.shape(upstream)} does not match output {out.shape}")
    if net.output_activation == "tanh":
        delta = delta * (1.0 - out * out)
    grad = np.empty_like(net.params) if need_params else None
    gw, gb = net.split(grad) if need_params else (None, None)
    for i in range(len(net.weights) - 1, -1, -1):
        if need_params:
            np.matmul(delta.T, inputs[i], out=gw[i])
            np.sum(delta, axis=0, out=gb[i])
        delta = delta @ net.weights[i]
        if i > 0:
            # the layer input is the ReLU output, positive exactly where the pre-activation was
            delta *= inputs[i] > 0.0
    return grad, (delta[0] if single else delta)


def backward(net: MlpNetwork, x, upstream):
    """Returns ``(Gradients, input_gradient)`` of ``sum(upstream * net(x))``."""
    _, cache = forward_cache(net, x)
    flat, dx = backward_cache(net, cache, upstream)
    w, b = net.split(flat)
    return Gradients(flat, w, b), dx


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_hat: float = 1e-8

    @classmethod
    def zeros_like(cls, params: np.ndarray, learning_rate: float = 1e-3, **kw) -> "AdamState":
        return cls(np.zeros_like(params, dtype=np.float64), np.zeros_like(params, dtype=np.float64),
                   learning_rate=learning_rate, **kw)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState):
    """Bias-corrected Adam update, applied in place. Returns ``(params, state)``."""
    grads = np.asarray(grads, dtype=np.float64)
    if np.shape(params) != grads.shape or state.first_moment.shape != grads.shape:
        raise ShapeError("params, grads and optimizer moments must share a shape")
    b1, b2 = state.beta1, state.beta2
    state.step_count += 1
    t = state.step_count
    m, v = state.first_moment, state.second_moment
    m *= b1
    m += (1.0 - b1) * grads
    v *= b2
    v += (1.0 - b2) * grads * grads
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    params -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon_hat)
    return params, state


def polyak_update(target: MlpNetwork, online: MlpNetwork, tau: float) -> MlpNetwork:
    """target <- tau * online + (1 - tau) * target, in place."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    if not target.same_architecture(online):
        raise ShapeError("polyak_update needs congruent architectures")
    target.params[...] = tau * online.params + (1.0 - tau) * target.params
    return target
