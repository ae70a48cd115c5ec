"""Bias-corrected adaptive moment optimizer."""

from __future__ import annotations

import numpy as np

from ..errors import ModelError, TrainingError


class Adam:
    """Updates a list of parameter arrays in place.

    Keeps first/second moment accumulators and a step counter; rejects
    non-finite gradients before touching anything so a failed update never
    corrupts the parameters.
    """

    def __init__(self, params, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]
        self.t = 0

    def step(self, grads) -> None:
        if len(grads) != len(self.params):
            raise ModelError("gradient list does not match parameter list")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise TrainingError("non-finite gradient")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    # -------------------------------------------------- state for resume

    def state(self) -> dict:
        return {"t": self.t,
                "m": [a.copy() for a in self.m],
                "v": [a.copy() for a in self.v]}

    def load_state(self, state: dict) -> None:
        if len(state["m"]) != len(self.params):
            raise ModelError("optimizer state does not match parameters")
        self.t = int(state["t"])
        for a, b in zip(self.m, state["m"]):
            a[...] = b
        for a, b in zip(self.v, state["v"]):
            a[...] = b
