from .config import TrainConfig, default_train_config, with_overrides
from .gae import compute_gae, normalize_advantages
from .trainer import (
    EvalSummary,
    Trainer,
    TrainResult,
    actions_from_policy_set,
    centralized_ppo_train,
    evaluate_policies,
    evaluate_policy_set,
    mappo_train,
)
from .updates import clip_ratio, critic_update, ppo_actor_update

__all__ = [
    "EvalSummary", "TrainConfig", "Trainer", "TrainResult",
    "actions_from_policy_set", "centralized_ppo_train", "clip_ratio",
    "compute_gae", "critic_update", "default_train_config",
    "evaluate_policies", "evaluate_policy_set", "mappo_train",
    "normalize_advantages", "ppo_actor_update", "with_overrides",
]
