"""Training hyperparameters."""

from __future__ import annotations

from dataclasses import dataclass, replace

from ..errors import ModelError


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.99
    clip_eps: float = 0.2
    ppo_epochs: int = 5
    entropy_coef: float = 0.05
    actor_lr: float = 8e-4
    critic_lr: float = 8e-4
    max_env_steps: int = 20_000_000
    gae_lambda: float = 0.95
    minibatch_size: int = 100
    rollout_length: int = 50
    target_sync_period: int = 1
    n_envs: int = 8
    hidden: tuple = (512, 512)
    log_std_init: float = -0.5
    eval_episodes: int = 30
    eval_every: int = 25
    stop_metric: str = ""
    stop_value: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ModelError("gamma must lie in (0, 1)")
        if self.clip_eps <= 0.0:
            raise ModelError("clip_eps must be positive")
        if self.ppo_epochs < 1:
            raise ModelError("ppo_epochs must be at least 1")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ModelError("gae_lambda must lie in [0, 1]")
        if min(self.minibatch_size, self.rollout_length, self.n_envs,
               self.target_sync_period, self.eval_episodes,
               self.eval_every) < 1:
            raise ModelError("batch/rollout sizes must be positive")


def default_train_config(task_kind: str, desk_scale: bool = True,
                         **overrides) -> TrainConfig:
    """Per-task defaults: the reorientation task trains with a slightly
    lower learning rate and a shared reward; desk scale shrinks the
    networks and the step budget so runs finish in minutes."""
    lr = 7e-4 if task_kind == "reorientation" else 8e-4
    cfg = dict(actor_lr=lr, critic_lr=lr)
    if desk_scale:
        cfg.update(hidden=(64, 64), max_env_steps=2_000_000)
    cfg.update(overrides)
    return TrainConfig(**cfg)


def with_overrides(cfg: TrainConfig, **overrides) -> TrainConfig:
    return replace(cfg, **overrides)
