"""Tanh multilayer perceptron with hand-written backpropagation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..scene import ContractError


@dataclass
class MlpParams:
    """Weights are stored ``(fan_in, fan_out)`` so a batch computes ``x @ W + b``."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def orthogonal(rng: np.random.Generator, fan_in: int, fan_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(fan_in, fan_out), min(fan_in, fan_out)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if fan_in < fan_out:
        q = q.T
    return gain * q[:fan_in, :fan_out]


def init_mlp(rng: np.random.Generator, dims, head_gain: float = 1.0, dtype=np.float32) -> MlpParams:
    weights, biases = [], []
    n = len(dims) - 1
    for i in range(n):
        gain = head_gain if i == n - 1 else np.sqrt(2.0)
        weights.append(orthogonal(rng, dims[i], dims[i + 1], gain).astype(dtype))
        biases.append(np.zeros(dims[i + 1], dtype))
    return MlpParams(weights, biases)


def mlp_forward(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """tanh hidden layers, linear output; accepts a vector or a batch."""
    x = np.asarray(x)
    if x.shape[-1] != params.weights[0].shape[0]:
        raise ContractError(f"input has {x.shape[-1]} features, network expects {params.weights[0].shape[0]}")
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if i < last:
            h = np.tanh(h)
    return h


def mlp_forward_cached(params: MlpParams, x: np.ndarray):
    """Forward pass that also returns the layer inputs needed by backprop."""
    if x.shape[-1] != params.weights[0].shape[0]:
        raise ContractError("input width does not match network")
    inputs = []
    h = x
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        h = h @ w + b
        if i < last:
            h = np.tanh(h)
    return h, inputs


def mlp_backward(params: MlpParams, inputs: list[np.ndarray], grad_out: np.ndarray) -> MlpParams:
    """Gradients of a scalar loss given dLoss/dOutput for a batch."""
    gw = [None] * len(params.weights)
    gb = [None] * len(params.weights)
    g = grad_out
    for i in range(len(params.weights) - 1, -1, -1):
        gw[i] = inputs[i].T @ g
        gb[i] = g.sum(axis=0)
        if i > 0:
            # inputs[i] is tanh output of the previous layer
            g = (g @ params.weights[i].T) * (1.0 - inputs[i] ** 2)
    return MlpParams(gw, gb)
