"""Reward terms for goal tracking and shared base-attitude adjustment.

Both rewards are negated costs built from a squared error term, a log error
term that dominates near the goal, and action magnitude/smoothness terms.
The shared variant adds a flat collision penalty and is computed from the
concatenated actions of all participating agents so that every one of them
receives the identical scalar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ModelError


@dataclass(frozen=True)
class RewardConfig:
    w_error_sq: float = 0.001
    w_error_log: float = 1.0
    w_smooth: float = 0.01
    w_effort: float = 0.05
    w_collision: float = 0.50
    log_epsilon: float = 1e-3

    def __post_init__(self):
        for name in ("w_error_sq", "w_error_log", "w_smooth", "w_effort",
                     "w_collision"):
            if getattr(self, name) < 0.0:
                raise ModelError(f"{name} must be nonnegative")
        if self.log_epsilon <= 0.0:
            raise ModelError("log_epsilon must be positive")


def _error_cost(err_sq: float, cfg: RewardConfig) -> float:
    return cfg.w_error_sq * err_sq + np.log(cfg.w_error_log * err_sq
                                            + cfg.log_epsilon)


def _action_cost(u, u_prev, cfg: RewardConfig) -> float:
    u = np.asarray(u, dtype=np.float64)
    u_prev = np.asarray(u_prev, dtype=np.float64)
    du = u - u_prev
    return cfg.w_smooth * float(du @ du) + cfg.w_effort * float(u @ u)


def tracking_reward(error, u, u_prev, cfg: RewardConfig) -> float:
    """Per-agent reward from its own goal error and its own action pair."""
    e = np.asarray(error, dtype=np.float64)
    return -(_error_cost(float(e @ e), cfg) + _action_cost(u, u_prev, cfg))


def shared_attitude_reward(base_error, u_all, u_prev_all, collided: bool,
                           cfg: RewardConfig) -> float:
    """One scalar for the whole base-adjusting group.

    u_all / u_prev_all are the concatenated actions of every agent in the
    group, so the value does not depend on which group member asks for it.
    """
    e = np.asarray(base_error, dtype=np.float64)
    cost = _error_cost(float(e @ e), cfg) + _action_cost(u_all, u_prev_all, cfg)
    if collided:
        cost += cfg.w_collision
    return -cost
