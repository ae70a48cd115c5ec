"""Advantage estimation over fixed-length rollouts."""

from __future__ import annotations

import numpy as np

from ..errors import ModelError


def compute_gae(rewards, values, bootstrap, gamma: float, lam: float,
                dones=None, terminal_values=None):
    """Exponentially weighted advantage recursion.

    rewards, values: (T,) or (T, n_envs); bootstrap: value of the state
    after the last step (scalar or (n_envs,)); dones marks steps that end
    an episode, always cutting the recursion there.

    What a done step bootstraps from depends on terminal_values. When it is
    None the episode is treated as genuinely over (zero future value). When
    given, shaped like rewards, a done step is read as a time-limit cut of
    an ongoing task and its TD error bootstraps from terminal_values[t],
    the value of the state the episode was truncated in. Entries at
    non-done steps are ignored.

    Returns raw (advantages, returns) with returns = advantages + values;
    normalization is the caller's business.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if r.size == 0:
        raise ModelError("empty reward series")
    if r.shape != v.shape:
        raise ModelError(f"rewards {r.shape} and values {v.shape} disagree")
    flat = r.ndim == 1
    if flat:
        r = r[:, None]
        v = v[:, None]
    t_len, ne = r.shape
    if dones is None:
        d = np.zeros((t_len, ne), dtype=bool)
    else:
        d = np.broadcast_to(np.asarray(dones, dtype=bool).reshape(t_len, -1),
                            (t_len, ne))
    if terminal_values is None:
        tv = np.zeros((t_len, ne))
    else:
        tv = np.asarray(terminal_values, dtype=np.float64).reshape(t_len, -1)
        tv = np.broadcast_to(tv, (t_len, ne))
        if tv.shape != (t_len, ne):
            raise ModelError(
                f"terminal_values {tv.shape} does not match rewards {r.shape}")
    adv = np.empty_like(r)
    gae = np.zeros(ne)
    next_v = np.broadcast_to(np.asarray(bootstrap, dtype=np.float64),
                             (ne,)).astype(np.float64)
    for t in range(t_len - 1, -1, -1):
        live = 1.0 - d[t]
        next_here = np.where(d[t], tv[t], next_v)
        delta = r[t] + gamma * next_here - v[t]
        gae = delta + gamma * lam * live * gae
        adv[t] = gae
        next_v = v[t]
    ret = adv + v
    if flat:
        return adv[:, 0], ret[:, 0]
    return adv, ret


def normalize_advantages(adv) -> np.ndarray:
    """Shift/scale to zero mean and unit deviation over the whole batch."""
    adv = np.asarray(adv, dtype=np.float64)
    return (adv - adv.mean()) / (adv.std() + 1e-8)
