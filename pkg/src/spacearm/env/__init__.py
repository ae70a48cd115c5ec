from .environment import SpaceRobotEnv
from .rewards import RewardConfig, shared_attitude_reward, tracking_reward
from .tasks import (
    ACT_DIM,
    OBS_DIM,
    ROLE_BASE,
    ROLE_ORIENTATION,
    ROLE_POSITION,
    AgentSpec,
    DisturbanceSpec,
    GoalSet,
    TaskSpec,
    divide_agents,
    euler_error,
    home_ee_eulers,
    sample_goals,
)

__all__ = [
    "ACT_DIM", "OBS_DIM", "ROLE_BASE", "ROLE_ORIENTATION", "ROLE_POSITION",
    "AgentSpec", "DisturbanceSpec", "GoalSet", "RewardConfig", "SpaceRobotEnv",
    "TaskSpec", "divide_agents", "euler_error", "home_ee_eulers",
    "sample_goals", "shared_attitude_reward", "tracking_reward",
]
