"""Batched multi-agent environment around the floating-base simulator.

Each control step maps per-agent actions in [-1, 1]^3 to desired joint
velocities, runs the velocity PD driver through 20 dynamics substeps, and
returns per-agent observations and rewards. All environments in the batch
share one task and advance in lockstep; episodes reset together, which
keeps rollout collection trivially deterministic.

Observation layout per agent (24 scalars):

    base position (3), base attitude Euler (3), base linear velocity (3),
    base angular velocity (3), controlled joint angles (3), controlled
    joint velocities (3), then a 6-scalar goal tail that depends on the
    agent's role: (ee position, target position) for position agents,
    (ee Euler, target Euler) for orientation agents, and (base Euler,
    target base Euler) for base-adjusting agents.
"""

from __future__ import annotations

import numpy as np

from ..dynamics import (
    BatchState,
    advance_control_step,
    forward_kinematics,
    total_momentum,
)
from ..errors import ModelError
from ..robot import RobotModel
from ..rotations import matrix_to_euler_xyz, wrap_angle
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


class SpaceRobotEnv:
    """Synchronized batch of identical task instances."""

    def __init__(self, model: RobotModel, task: TaskSpec, agents=None,
                 reward_cfg=None, n_envs: int = 1, seed: int = 0,
                 n_substeps: int = 20, dt: float = 1e-3,
                 disturbance: DisturbanceSpec = None,
                 info_momenta: bool = False):
        self.model = model
        self.task = task
        self.info_momenta = bool(info_momenta)
        self.agents = list(agents) if agents is not None else divide_agents(model, task)
        self.reward_cfg = reward_cfg if reward_cfg is not None else RewardConfig()
        self.n_envs = int(n_envs)
        self.n_substeps = int(n_substeps)
        self.dt = float(dt)
        self.disturbance = disturbance
        self._rng = np.random.default_rng(seed)

        self.n_agents = len(self.agents)
        tree = model.tree
        self.nq = tree.n_links
        self._joint_idx = np.array([a.joints for a in self.agents], dtype=np.int64)
        self._base_group = [i for i, a in enumerate(self.agents)
                            if a.role == ROLE_BASE]
        self._ref_eulers = home_ee_eulers(model)
        self._ee_link = tree.ee_link
        self._ee_tip = tree.ee_tip

        self.obs_dim = OBS_DIM
        self.global_state_dim = 12 + 2 * self.nq + 6 * self.n_agents

        d = self.disturbance
        self._has_wrench = d is not None and (
            any(v != 0.0 for v in d.force) or any(v != 0.0 for v in d.torque))
        if self._has_wrench:
            self._onset_sub = int(round(d.onset_time / self.dt))
            self._end_sub = self._onset_sub + int(round(d.duration / self.dt))
            if d.body < -1 or d.body >= self.nq:
                raise ModelError(f"disturbance body {d.body} out of range")
        self._locked = np.zeros((self.n_envs, self.nq), dtype=bool)
        if d is not None and d.failed_arm >= 0:
            if d.failed_arm >= model.n_arms:
                raise ModelError(f"failed_arm {d.failed_arm} out of range")
            self._locked[:, model.arm_joint_indices(d.failed_arm)] = True

        self._goals: GoalSet = None
        self.reset()

    # ----------------------------------------------------------- lifecycle

    def reset(self) -> np.ndarray:
        """Start fresh episodes in every environment; returns observations."""
        home = self.model.home_state()
        self.bs = BatchState.from_state(home, self.n_envs)
        ne, n = self.n_envs, self.model.n_arms
        pos = np.empty((ne, n, 3))
        eul = np.empty((ne, n, 3))
        base = np.empty((ne, 3))
        for e in range(ne):
            g = sample_goals(self.model, self._rng, self._ref_eulers)
            pos[e], eul[e], base[e] = g.ee_pos, g.ee_euler, g.base_euler
        self._goals = GoalSet(pos, eul, base)
        self.u_prev = np.zeros((ne, self.n_agents, ACT_DIM))
        self.step_count = 0
        self._substep = 0
        self.collided = np.zeros(ne, dtype=bool)
        self.min_clearance = np.full(ne, np.inf)

        fs = forward_kinematics(self.model.tree, home)
        R = np.broadcast_to(fs.link_rot, (ne,) + fs.link_rot.shape)
        p = np.broadcast_to(fs.link_pos, (ne,) + fs.link_pos.shape)
        self._update_frames(R, p)
        return self.observations()

    @property
    def goals(self) -> GoalSet:
        return self._goals

    # ------------------------------------------------------------- stepping

    def step(self, actions):
        """Advance one control step.

        actions: (n_envs, n_agents, 3) in [-1, 1]. Returns
        (observations, rewards (n_envs, n_agents), done, info).
        """
        u = np.asarray(actions, dtype=np.float64)
        if u.shape != (self.n_envs, self.n_agents, ACT_DIM):
            raise ModelError(
                f"actions must have shape {(self.n_envs, self.n_agents, ACT_DIM)},"
                f" got {u.shape}")
        u = np.clip(u, -1.0, 1.0)

        qdot_des = np.zeros((self.n_envs, self.nq))
        qdot_max = self.model.tree.qdot_max
        for i in range(self.n_agents):
            j = self._joint_idx[i]
            qdot_des[:, j] = u[:, i, :] * qdot_max[j]
        qdot_des[self._locked] = 0.0

        kw = {}
        wrench_on = False
        if self._has_wrench:
            active = np.zeros((self.n_envs, self.n_substeps), dtype=bool)
            s0 = self._substep
            lo = max(self._onset_sub - s0, 0)
            hi = min(self._end_sub - s0, self.n_substeps)
            if lo < hi:
                active[:, lo:hi] = True
                wrench_on = True
            d = self.disturbance
            kw = dict(
                wrench_body=np.full(self.n_envs, d.body, dtype=np.int64),
                wrench_force=np.tile(np.asarray(d.force, dtype=np.float64),
                                     (self.n_envs, 1)),
                wrench_torque=np.tile(np.asarray(d.torque, dtype=np.float64),
                                      (self.n_envs, 1)),
                wrench_active=active,
            )

        res = advance_control_step(self.model.tree, self.bs, qdot_des,
                                   self.model.kp, self.model.kd,
                                   self.n_substeps, self.dt,
                                   locked=self._locked, **kw)
        self._substep += self.n_substeps
        self.step_count += 1
        self.collided = res.collided.copy()
        self.min_clearance = res.min_clearance.copy()
        self._update_frames(res.link_rot, res.link_pos)

        rewards = self._rewards(u)
        self.u_prev = u.copy()
        done = self.step_count >= self.task.episode_length
        info = {
            "ee_pos": self._ee_pos.copy(),
            "ee_euler": self._ee_euler.copy(),
            "base_euler": self._base_euler.copy(),
            "pos_err": np.linalg.norm(self._pos_err(), axis=2),
            "ori_err": np.linalg.norm(self._ori_err(), axis=2),
            "base_err": np.linalg.norm(self._base_err(), axis=1),
            "collided": self.collided.copy(),
            "min_clearance": self.min_clearance.copy(),
            "wrench_on": wrench_on,
        }
        if self.info_momenta:
            info["momenta"] = self.momenta()
        return self.observations(), rewards, done, info

    # ---------------------------------------------------------- observation

    def _update_frames(self, R, p):
        ne = self.n_envs
        ee = self._ee_link
        Ree = R[:, ee]  # (ne, n_arms, 3, 3)
        pee = p[:, ee]
        self._ee_pos = pee + np.einsum("eaij,aj->eai", Ree, self._ee_tip)
        self._ee_euler = np.empty((ne, len(ee), 3))
        self._base_euler = np.empty((ne, 3))
        for e in range(ne):
            for a in range(len(ee)):
                self._ee_euler[e, a] = matrix_to_euler_xyz(Ree[e, a])
        from ..rotations import quat_to_matrix

        for e in range(ne):
            self._base_euler[e] = matrix_to_euler_xyz(
                quat_to_matrix(self.bs.quat[e]))

    def _pos_err(self):
        return self._goals.ee_pos - self._ee_pos

    def _ori_err(self):
        return euler_error(self._goals.ee_euler, self._ee_euler)

    def _base_err(self):
        return euler_error(self._goals.base_euler, self._base_euler)

    def observations(self) -> np.ndarray:
        """Per-agent observation vectors for the current state."""
        ne = self.n_envs
        obs = np.empty((ne, self.n_agents, OBS_DIM))
        bs = self.bs
        q_w = wrap_angle(bs.q)
        base_block = np.concatenate(
            [bs.pos, self._base_euler, bs.lin_vel, bs.ang_vel], axis=1)
        for i, a in enumerate(self.agents):
            j = self._joint_idx[i]
            obs[:, i, 0:12] = base_block
            obs[:, i, 12:15] = q_w[:, j]
            obs[:, i, 15:18] = bs.qdot[:, j]
            obs[:, i, 18:24] = self._tail(a)
        return obs

    def _tail(self, a: AgentSpec) -> np.ndarray:
        if a.role == ROLE_POSITION:
            return np.concatenate(
                [self._ee_pos[:, a.arm], self._goals.ee_pos[:, a.arm]], axis=1)
        if a.role == ROLE_ORIENTATION:
            return np.concatenate(
                [self._ee_euler[:, a.arm], self._goals.ee_euler[:, a.arm]], axis=1)
        return np.concatenate(
            [self._base_euler, np.broadcast_to(self._goals.base_euler,
                                               self._base_euler.shape)], axis=1)

    def global_state(self) -> np.ndarray:
        """Full-knowledge state vector for centralized critics: base pose
        and twist, all joints, then every agent's goal tail."""
        bs = self.bs
        parts = [bs.pos, self._base_euler, bs.lin_vel, bs.ang_vel,
                 wrap_angle(bs.q), bs.qdot]
        parts += [self._tail(a) for a in self.agents]
        return np.concatenate(parts, axis=1)

    # -------------------------------------------------------------- rewards

    def _rewards(self, u) -> np.ndarray:
        ne = self.n_envs
        r = np.empty((ne, self.n_agents))
        pos_err = self._pos_err()
        ori_err = self._ori_err()
        base_err = self._base_err()
        bg = self._base_group
        for e in range(ne):
            if bg:
                shared = shared_attitude_reward(
                    base_err[e],
                    u[e, bg].ravel(), self.u_prev[e, bg].ravel(),
                    bool(self.collided[e]), self.reward_cfg)
            for i, a in enumerate(self.agents):
                if a.role == ROLE_BASE:
                    r[e, i] = shared
                elif a.role == ROLE_POSITION:
                    r[e, i] = tracking_reward(pos_err[e, a.arm], u[e, i],
                                              self.u_prev[e, i], self.reward_cfg)
                else:
                    r[e, i] = tracking_reward(ori_err[e, a.arm], u[e, i],
                                              self.u_prev[e, i], self.reward_cfg)
        return r

    # ------------------------------------------------------------- analysis

    def momenta(self) -> np.ndarray:
        """(n_envs, 6) world linear and angular (about COM) momentum."""
        out = np.empty((self.n_envs, 6))
        for e in range(self.n_envs):
            P, L = total_momentum(self.model.tree, self.bs.env_state(e))
            out[e, 0:3] = P
            out[e, 3:6] = L
        return out
