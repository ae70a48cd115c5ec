"""Dense networks with hand-written reverse-mode differentiation.

A network is a list of parameter arrays [W0, b0, W1, b1, ...] with weight
matrices stored as (fan_out, fan_in). Hidden layers apply tanh, the output
layer is linear. forward keeps every post-activation array so backward can
run without recomputing anything.
"""

from __future__ import annotations

import numpy as np

from ..errors import ModelError


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, (fan_out, fan_in))


class Mlp:
    """Fully connected tanh network with a linear output layer.

    out_scale shrinks the output layer's initial weights; policy means start
    near zero so early actions stay gentle.
    """

    def __init__(self, sizes, rng: np.random.Generator, out_scale: float = 1.0):
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 2 or any(s < 1 for s in sizes):
            raise ModelError(f"bad layer sizes {sizes}")
        self.sizes = sizes
        self.activation = "tanh"
        self.params = []
        last = len(sizes) - 2
        for i in range(len(sizes) - 1):
            w = glorot_uniform(rng, sizes[i + 1], sizes[i])
            if i == last:
                w = w * out_scale
            self.params.append(w)
            self.params.append(np.zeros(sizes[i + 1]))

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def forward(self, x):
        """x: (batch, in) -> (y (batch, out), cache for backward)."""
        h = np.asarray(x, dtype=np.float64)
        if h.ndim != 2 or h.shape[1] != self.sizes[0]:
            raise ModelError(
                f"expected input (batch, {self.sizes[0]}), got {h.shape}")
        cache = [h]
        for i in range(self.n_layers):
            w, b = self.params[2 * i], self.params[2 * i + 1]
            h = h @ w.T + b
            if i < self.n_layers - 1:
                h = np.tanh(h)
            cache.append(h)
        return h, cache

    def backward(self, cache, dy):
        """Gradients of sum(dy * y) w.r.t. params and input.

        Returns (param gradients in params order, input gradient).
        """
        g = np.asarray(dy, dtype=np.float64)
        grads = [None] * len(self.params)
        for i in range(self.n_layers - 1, -1, -1):
            if i < self.n_layers - 1:
                g = g * (1.0 - cache[i + 1] ** 2)  # tanh'
            grads[2 * i] = g.T @ cache[i]
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.params[2 * i]
        return grads, g

    # ------------------------------------------------------------ plumbing

    def param_vector(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params])

    def set_param_vector(self, vec) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (self.n_params,):
            raise ModelError(f"expected {self.n_params} parameters")
        k = 0
        for p in self.params:
            p[...] = vec[k:k + p.size].reshape(p.shape)
            k += p.size

    def copy(self) -> "Mlp":
        other = object.__new__(Mlp)
        other.sizes = self.sizes
        other.activation = self.activation
        other.params = [p.copy() for p in self.params]
        return other

    def copy_from(self, other: "Mlp") -> None:
        if other.sizes != self.sizes:
            raise ModelError("layer sizes differ")
        for p, q in zip(self.params, other.params):
            p[...] = q
