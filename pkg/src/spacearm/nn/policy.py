"""Diagonal-Gaussian policy with tanh-squashed actions.

The mean comes from an Mlp; a single free log-std vector is shared across
states and kept inside [LOG_STD_MIN, LOG_STD_MAX] by projection after every
optimizer step. Sampling draws z = mean + std * noise and squashes with
tanh, so log-probabilities carry the change-of-variables correction while
z itself stays available for later gradient passes.
"""

from __future__ import annotations

import numpy as np

from ..errors import ModelError
from .layers import Mlp

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0

_LOG_2PI = np.log(2.0 * np.pi)


def softplus(x):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def tanh_log_det(z):
    """log(1 - tanh(z)^2) per element, stable for large |z|."""
    return 2.0 * (np.log(2.0) - z - softplus(-2.0 * z))


class GaussianPolicy:
    def __init__(self, obs_dim: int, act_dim: int, hidden=(512, 512),
                 rng: np.random.Generator = None, log_std_init: float = -0.5,
                 out_scale: float = 0.01):
        if rng is None:
            rng = np.random.default_rng(0)
        self.obs_dim = int(obs_dim)
        self.act_dim = int(act_dim)
        self.net = Mlp((obs_dim,) + tuple(hidden) + (act_dim,), rng,
                       out_scale=out_scale)
        self.log_std = np.clip(np.full(act_dim, float(log_std_init)),
                               LOG_STD_MIN, LOG_STD_MAX)

    @property
    def params(self) -> list:
        """All trainable arrays; hand this list to the optimizer."""
        return self.net.params + [self.log_std]

    def clamp_log_std(self) -> None:
        """Project the log-std back into its box; call after every update."""
        np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std)

    def std(self) -> np.ndarray:
        return np.exp(self.log_std)

    # ------------------------------------------------------------- acting

    def act_deterministic(self, obs) -> np.ndarray:
        mu, _ = self.net.forward(obs)
        return np.tanh(mu)

    def sample(self, obs, rng: np.random.Generator = None, noise=None):
        """Returns (action in (-1,1), pre-squash z, log-probability)."""
        mu, _ = self.net.forward(obs)
        std = self.std()
        if noise is None:
            if rng is None:
                raise ModelError("sampling needs a generator or explicit noise")
            noise = rng.standard_normal(mu.shape)
        z = mu + std * noise
        return np.tanh(z), z, self._log_prob(z, mu, std)

    @staticmethod
    def _log_prob(z, mu, std):
        g = -0.5 * ((z - mu) / std) ** 2 - np.log(std) - 0.5 * _LOG_2PI
        return g.sum(axis=-1) - tanh_log_det(z).sum(axis=-1)

    def log_prob(self, obs, z):
        """Log-probability of previously drawn z under the current params.

        Returns (logp (batch,), aux for backward_logp).
        """
        mu, cache = self.net.forward(obs)
        std = self.std()
        return self._log_prob(z, mu, std), (cache, mu, std)

    def backward_logp(self, aux, z, coeffs):
        """Gradients of sum_i coeffs[i] * logp_i.

        Returns (net param gradients, log_std gradient); z is treated as
        data, so only the Gaussian part contributes.
        """
        cache, mu, std = aux
        c = np.asarray(coeffs, dtype=np.float64)[:, None]
        delta = (z - mu) / std ** 2
        net_grads, _ = self.net.backward(cache, c * delta)
        d_log_std = (c * ((z - mu) ** 2 / std ** 2 - 1.0)).sum(axis=0)
        return net_grads, d_log_std

    def backward_objective(self, aux, z, coeffs, ent_coef: float):
        """Gradients of sum_i coeffs[i] * logp_i + ent_coef * entropy.

        The log-prob part treats z as data (same as backward_logp). The
        entropy part is differentiated through the resampling map
        z = mean + std * noise with the realized noise held fixed, so the
        squash correction pushes back against saturation instead of growing
        the std without bound. Returns (net grads, log_std grad).
        """
        cache, mu, std = aux
        c = np.asarray(coeffs, dtype=np.float64)[:, None]
        n = len(z)
        dent_dz = -2.0 * np.tanh(z)
        dy = c * (z - mu) / std ** 2 + (ent_coef / n) * dent_dz
        net_grads, _ = self.net.backward(cache, dy)
        d_log_std = (c * ((z - mu) ** 2 / std ** 2 - 1.0)).sum(axis=0)
        d_log_std += ent_coef * (1.0 + (dent_dz * (z - mu)).sum(axis=0) / n)
        return net_grads, d_log_std

    # ------------------------------------------------------------ entropy

    def gaussian_entropy(self) -> float:
        """Closed-form entropy of the unsquashed Gaussian."""
        return float(np.sum(self.log_std + 0.5 * (1.0 + _LOG_2PI)))

    def entropy_estimate(self, z) -> float:
        """Entropy of the squashed distribution, estimated from drawn z."""
        return self.gaussian_entropy() + float(
            tanh_log_det(z).sum(axis=-1).mean())

    # ----------------------------------------------------------- plumbing

    def copy(self) -> "GaussianPolicy":
        other = object.__new__(GaussianPolicy)
        other.obs_dim = self.obs_dim
        other.act_dim = self.act_dim
        other.net = self.net.copy()
        other.log_std = self.log_std.copy()
        return other
