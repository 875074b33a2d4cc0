"""Small numpy MLP with explicit backprop, plus an Adam optimizer.

Arrays are row-batched: inputs have shape (batch, features). Everything is
float64 so finite-difference checks are meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("silu", "tanh", "relu")


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "silu":
        return z / (1.0 + np.exp(-z))
    if name == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _act_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "silu":
        s = 1.0 / (1.0 + np.exp(-z))
        return s * (1.0 + z * (1.0 - s))
    if name == "tanh":
        return 1.0 - np.tanh(z) ** 2
    return (z > 0).astype(z.dtype)


@dataclass(frozen=True, eq=False)
class MLP:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: str = "silu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i} input {w.shape[0]} != previous output {self.weights[i - 1].shape[1]}")

    @classmethod
    def init(cls, sizes, rng: np.random.Generator, activation: str = "silu", out_scale: float = 1.0) -> "MLP":
        ws, bs = [], []
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
            if i == len(sizes) - 2:
                w *= out_scale
            ws.append(w)
            bs.append(np.zeros(fan_out))
        return cls(tuple(ws), tuple(bs), activation)

    @classmethod
    def zeros(cls, sizes, activation: str = "silu") -> "MLP":
        return cls(tuple(np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])),
                   tuple(np.zeros(b) for b in sizes[1:]), activation)

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def params(self) -> list[np.ndarray]:
        return list(self.weights) + list(self.biases)

    def with_params(self, params) -> "MLP":
        n = len(self.weights)
        return MLP(tuple(params[:n]), tuple(params[n:]), self.activation)

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params())

    def forward(self, x: np.ndarray):
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"input width {x.shape[-1]} != network input {self.in_dim}")
        cache = [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < last:
                cache.append(z)
                h = _act(self.activation, z)
                cache.append(h)
            else:
                h = z
        return h, cache

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, cache, dy: np.ndarray):
        """Returns (param grads in ``params()`` order, grad w.r.t. the input)."""
        n = len(self.weights)
        dws, dbs = [None] * n, [None] * n
        g = dy
        for i in range(n - 1, -1, -1):
            h_in = cache[0] if i == 0 else cache[2 * i]
            dws[i] = h_in.T @ g
            dbs[i] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * _act_grad(self.activation, cache[2 * i - 1])
        return dws + dbs, g


class Adam:
    """Adam with state keyed by parameter position; ``step`` returns new arrays."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def step(self, params, grads):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            out.append(p - self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps))
        return out
