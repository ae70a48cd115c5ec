"""Task definitions and the joint-to-agent assignment.

A task is either end-effector goal reaching ("trajectory"), base attitude
adjustment ("reorientation"), or a per-arm mix of the two. Joints are
assigned to agents hierarchically: each 6-joint arm splits into a shoulder
agent (first three joints, rewarded on end-effector position) and a wrist
agent (last three, rewarded on end-effector orientation); 3-joint arms get
one agent each. In the reorientation task every agent keeps its joint set
but is rewarded on the shared base-attitude error instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ModelError
from ..robot import RobotModel
from ..rotations import matrix_to_euler_xyz, wrap_angle

TASK_KINDS = ("trajectory", "reorientation", "mixed")

# agent reward roles
ROLE_POSITION = "position"
ROLE_ORIENTATION = "orientation"
ROLE_BASE = "base"

OBS_DIM = 24
ACT_DIM = 3

BASE_GOAL_RANGE = 0.2  # rad, per axis
EE_ORI_GOAL_RANGE = 0.2  # rad, per axis around the reset orientation


@dataclass(frozen=True)
class TaskSpec:
    """What the robot is asked to do for one episode.

    arm_tasks is only used for kind="mixed" and gives "trajectory" or
    "reorientation" per arm.
    """

    kind: str
    episode_length: int = 50
    arm_tasks: tuple = ()

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ModelError(f"unknown task kind {self.kind!r}")
        if self.episode_length < 1:
            raise ModelError("episode_length must be at least 1")
        if self.kind == "mixed":
            if not self.arm_tasks:
                raise ModelError("mixed task needs a per-arm assignment")
            bad = [t for t in self.arm_tasks if t not in TASK_KINDS[:2]]
            if bad:
                raise ModelError(f"invalid per-arm assignment {bad}")
        elif self.arm_tasks:
            raise ModelError("arm_tasks is only valid for the mixed kind")

    def arm_kind(self, arm: int) -> str:
        if self.kind == "mixed":
            return self.arm_tasks[arm]
        return self.kind

    @property
    def share_reward(self) -> bool:
        """True when every agent receives one identical scalar per step."""
        return self.kind == "reorientation"


@dataclass(frozen=True)
class AgentSpec:
    """One agent: which joints it drives and what its reward tracks."""

    agent_id: int  # 1-based
    arm: int
    joints: tuple  # global joint indices, contiguous triple
    role: str

    def __post_init__(self):
        if len(self.joints) != ACT_DIM:
            raise ModelError(f"agent {self.agent_id}: needs {ACT_DIM} joints")
        if self.role not in (ROLE_POSITION, ROLE_ORIENTATION, ROLE_BASE):
            raise ModelError(f"agent {self.agent_id}: unknown role {self.role!r}")


def divide_agents(model: RobotModel, task: TaskSpec) -> list:
    """Assign every joint to an agent according to the task.

    6-joint arms produce two agents each (shoulder triple then wrist
    triple); 3-joint arms produce one. Reorientation turns every role into
    the shared base role while keeping the same joint sets.
    """
    agents = []
    next_id = 1
    for arm in range(model.n_arms):
        idx = model.arm_joint_indices(arm)
        if len(idx) % ACT_DIM != 0:
            raise ModelError(
                f"arm {arm} has {len(idx)} joints, not a multiple of {ACT_DIM}")
        kind = task.arm_kind(arm)
        groups = [tuple(int(j) for j in idx[k:k + ACT_DIM])
                  for k in range(0, len(idx), ACT_DIM)]
        if len(groups) > 2:
            raise ModelError(f"arm {arm}: more than 6 joints is unsupported")
        for g, joints in enumerate(groups):
            if kind == "reorientation":
                role = ROLE_BASE
            elif len(groups) == 1 or g == 0:
                role = ROLE_POSITION
            else:
                role = ROLE_ORIENTATION
            agents.append(AgentSpec(next_id, arm, joints, role))
            next_id += 1
    all_joints = sorted(j for a in agents for j in a.joints)
    if all_joints != list(range(model.n_joints)):
        raise ModelError("agent joint sets do not partition the joints")
    return agents


@dataclass
class GoalSet:
    """Per-episode goals: end-effector targets per arm plus a base attitude
    target, all sampled at reset and fixed for the episode (world frame)."""

    ee_pos: np.ndarray  # (n_arms, 3) m
    ee_euler: np.ndarray  # (n_arms, 3) rad
    base_euler: np.ndarray  # (3,) rad


def home_ee_eulers(model: RobotModel) -> np.ndarray:
    """End-effector orientations (Euler) at the home configuration."""
    from ..dynamics import forward_kinematics

    fs = forward_kinematics(model.tree, model.home_state())
    return np.stack([matrix_to_euler_xyz(fs.ee_rot(model.tree, a))
                     for a in range(model.n_arms)])


def sample_goals(model: RobotModel, rng: np.random.Generator,
                 ref_eulers=None) -> GoalSet:
    """Draw one episode's goals.

    Every component is always drawn so the random stream does not depend on
    the task kind (mixed-task evaluation must replay trajectory-task goal
    sequences exactly).
    """
    n = model.n_arms
    pos = model.target_centers + rng.uniform(
        -1.0, 1.0, (n, 3)) * model.target_half[:, None]
    if ref_eulers is None:
        ref_eulers = home_ee_eulers(model)
    ee_euler = wrap_angle(
        ref_eulers + rng.uniform(-EE_ORI_GOAL_RANGE, EE_ORI_GOAL_RANGE, (n, 3)))
    base_euler = rng.uniform(-BASE_GOAL_RANGE, BASE_GOAL_RANGE, 3)
    return GoalSet(pos, ee_euler, base_euler)


def euler_error(desired, current) -> np.ndarray:
    """Componentwise angle difference wrapped into (-pi, pi]."""
    return wrap_angle(np.asarray(desired, dtype=np.float64)
                      - np.asarray(current, dtype=np.float64))


@dataclass(frozen=True)
class DisturbanceSpec:
    """An external wrench pulse and/or a disabled arm.

    body is a link index or -1 for the base. The wrench turns on at
    onset_time for duration seconds; a failed arm is locked (zero commanded
    velocity, zero torque) for the whole episode.
    """

    onset_time: float = 7.5
    duration: float = 0.4
    body: int = -1
    force: tuple = (0.0, 0.0, 0.0)
    torque: tuple = (0.0, 0.0, 0.0)
    failed_arm: int = -1  # -1 = none

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ModelError("disturbance duration must be positive")
        if self.onset_time < 0.0:
            raise ModelError("disturbance onset must be nonnegative")
