"""Typed simulation API on top of the jit kernels.

All public functions take a KinematicTree and a RigidBodyState. The batch
interface (BatchState / advance_control_step) is what the environment layer
uses: it advances several independent robots through one velocity-PD control
step per call, entirely inside compiled code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SimulationDivergenceError
from . import kernels as K
from .types import ExternalWrench, KinematicTree, RigidBodyState


@dataclass
class FrameSet:
    """World-frame poses of every link plus the base rotation."""

    base_rot: np.ndarray
    link_rot: np.ndarray
    link_pos: np.ndarray
    joint_axis: np.ndarray

    def ee_pos(self, tree: KinematicTree, arm: int) -> np.ndarray:
        e = tree.ee_link[arm]
        return self.link_pos[e] + self.link_rot[e] @ tree.ee_tip[arm]

    def ee_rot(self, tree: KinematicTree, arm: int) -> np.ndarray:
        return self.link_rot[tree.ee_link[arm]]


def forward_kinematics(tree: KinematicTree, state: RigidBodyState) -> FrameSet:
    nb = tree.n_links
    Rb = K._quat_to_mat(state.quat)
    R = np.empty((nb, 3, 3))
    p = np.empty((nb, 3))
    aw = np.empty((nb, 3))
    K._fk(tree.parent, tree.mount_pos, tree.mount_rot, tree.axis_local,
          state.pos, Rb, state.q, R, p, aw)
    return FrameSet(Rb, R, p, aw)


def _wrench_arrays(tree: KinematicTree, wrenches) -> tuple[np.ndarray, np.ndarray]:
    nb = tree.n_links
    fext = np.zeros((nb + 1, 3))
    text = np.zeros((nb + 1, 3))
    for wr in wrenches:
        if not (-1 <= wr.body < nb):
            raise ValueError(f"wrench body index {wr.body} out of range")
        fext[wr.body + 1] += wr.force
        text[wr.body + 1] += wr.torque
    return fext, text


def _locked_array(tree: KinematicTree, locked) -> np.ndarray:
    if locked is None:
        return np.zeros(tree.n_links, dtype=bool)
    lk = np.asarray(locked, dtype=bool)
    if lk.shape != (tree.n_links,):
        raise ValueError("locked mask must have one entry per joint")
    return lk


def _assemble(tree: KinematicTree, state: RigidBodyState, tau, fext, text):
    """Mass matrix and right-hand side Q - c at the given state."""
    nb = tree.n_links
    N = tree.nv
    fs = forward_kinematics(tree, state)
    w = np.empty((nb, 3))
    vo = np.empty((nb, 3))
    rc = np.empty((nb, 3))
    vc = np.empty((nb, 3))
    K._velocities(tree.parent, tree.com, fs.link_rot, fs.link_pos,
                  fs.joint_axis, state.pos, state.lin_vel, state.ang_vel,
                  state.qdot, w, vo, rc, vc)
    M = np.empty((N, N))
    rhs = np.empty(N)
    Jv = np.zeros((3, N))
    Jw = np.zeros((3, N))
    cols = np.empty(N, dtype=np.int64)
    ao = np.empty((nb, 3))
    al = np.empty((nb, 3))
    Iw = np.empty((3, 3))
    K._mass_bias(tree.parent, tree.mass, tree.com, tree.inertia,
                 tree.base.inertia.mass, tree.base.inertia.com,
                 tree.base.inertia.inertia,
                 state.pos, fs.base_rot, state.lin_vel, state.ang_vel,
                 fs.link_rot, fs.link_pos, fs.joint_axis, w, rc,
                 state.qdot, tau, fext, text,
                 M, rhs, Jv, Jw, cols, ao, al, Iw)
    return M, rhs


def mass_matrix(tree: KinematicTree, state: RigidBodyState) -> np.ndarray:
    zeros = np.zeros((tree.n_links + 1, 3))
    M, _ = _assemble(tree, state, np.zeros(tree.n_links), zeros, zeros)
    return M


def bias_forces(tree: KinematicTree, state: RigidBodyState) -> np.ndarray:
    """Velocity-product generalized forces c(q, u); M udot + c = Q."""
    zeros = np.zeros((tree.n_links + 1, 3))
    _, rhs = _assemble(tree, state, np.zeros(tree.n_links), zeros, zeros)
    return -rhs


def forward_dynamics(tree: KinematicTree, state: RigidBodyState, tau,
                     wrenches=(), locked=None) -> np.ndarray:
    """Generalized acceleration udot = M^-1 (Q - c).

    Joint torques saturate at +-tau_max; locked joints contribute zero
    acceleration and ignore their torque.
    """
    tau = np.asarray(tau, dtype=np.float64)
    if tau.shape != (tree.n_links,):
        raise ValueError("tau must have one entry per joint")
    fext, text = _wrench_arrays(tree, wrenches)
    lk = _locked_array(tree, locked)
    tau_eff = np.clip(tau, -tree.tau_max, tree.tau_max)
    tau_eff[lk] = 0.0
    M, rhs = _assemble(tree, state, tau_eff, fext, text)
    return K._reduced_accel(M, rhs, lk)


def step(tree: KinematicTree, state: RigidBodyState, tau, dt: float,
         wrenches=(), locked=None) -> RigidBodyState:
    """Advance one integration step of size dt (momentum-exact)."""
    tau = np.asarray(tau, dtype=np.float64)
    fext, text = _wrench_arrays(tree, wrenches)
    lk = _locked_array(tree, locked)
    pb, qb, vb, wb, q, qdot, _ = K._substep(
        tree.parent, tree.mount_pos, tree.mount_rot, tree.axis_local,
        tree.mass, tree.com, tree.inertia,
        tree.base.inertia.mass, tree.base.inertia.com, tree.base.inertia.inertia,
        tree.q_max, tree.qdot_max, tree.tau_max,
        state.pos, state.quat, state.lin_vel, state.ang_vel, state.q, state.qdot,
        tau, fext, text, lk, dt)
    new = RigidBodyState(pb, qb, vb, wb, q, qdot, state.time + dt)
    if not new.is_finite():
        raise SimulationDivergenceError(f"state diverged at t={state.time}")
    return new


def momentum_about_origin(tree: KinematicTree, state: RigidBodyState) -> np.ndarray:
    """(linear momentum, angular momentum about the world origin), shape (6,)."""
    nb = tree.n_links
    N = tree.nv
    fs = forward_kinematics(tree, state)
    A = np.zeros((6, N))
    Jv = np.zeros((3, N))
    Jw = np.zeros((3, N))
    cols = np.empty(N, dtype=np.int64)
    Iw = np.empty((3, 3))
    K._momentum_matrix(tree.parent, tree.mass, tree.com, tree.inertia,
                       tree.base.inertia.mass, tree.base.inertia.com,
                       tree.base.inertia.inertia,
                       state.pos, fs.base_rot, fs.link_rot, fs.link_pos,
                       fs.joint_axis, A, Jv, Jw, cols, Iw)
    return A @ state.generalized_velocity()


def system_com(tree: KinematicTree, state: RigidBodyState) -> np.ndarray:
    fs = forward_kinematics(tree, state)
    rcb = state.pos + fs.base_rot @ tree.base.inertia.com
    s = tree.base.inertia.mass * rcb
    for i in range(tree.n_links):
        s += tree.mass[i] * (fs.link_pos[i] + fs.link_rot[i] @ tree.com[i])
    return s / tree.total_mass


def total_momentum(tree: KinematicTree, state: RigidBodyState):
    """Linear momentum and angular momentum about the system COM."""
    h = momentum_about_origin(tree, state)
    P = h[0:3]
    L = h[3:6] - np.cross(system_com(tree, state), P)
    return P, L


def kinetic_energy(tree: KinematicTree, state: RigidBodyState) -> float:
    u = state.generalized_velocity()
    return 0.5 * float(u @ mass_matrix(tree, state) @ u)


@dataclass
class CollisionResult:
    collided: bool
    min_clearance: float


def check_collision(tree: KinematicTree, state: RigidBodyState) -> CollisionResult:
    fs = forward_kinematics(tree, state)
    hit, clear = K._collision_check(tree.parent, tree.arm_of, tree.cap_a,
                                    tree.cap_b, tree.cap_radius,
                                    fs.link_rot, fs.link_pos,
                                    state.pos, fs.base_rot,
                                    tree.base.half_extents)
    return CollisionResult(bool(hit), float(clear))


def collision_pairs(tree: KinematicTree, state: RigidBodyState):
    """Clearance of every monitored pair, for debugging and tests.

    Returns a list of (kind, i, j, clearance) with kind 'box' (j = -1) or
    'capsule', in the deterministic check order.
    """
    fs = forward_kinematics(tree, state)
    nb = tree.n_links
    e0 = np.array([fs.link_pos[i] + fs.link_rot[i] @ tree.cap_a[i] for i in range(nb)])
    e1 = np.array([fs.link_pos[i] + fs.link_rot[i] @ tree.cap_b[i] for i in range(nb)])
    out = []
    RbT = fs.base_rot.T.copy()
    for i in range(nb):
        if tree.parent[i] < 0:
            continue
        s0 = RbT @ (e0[i] - state.pos)
        s1 = RbT @ (e1[i] - state.pos)
        d = K._seg_box_dist(s0, s1, tree.base.half_extents) - tree.cap_radius[i]
        out.append(("box", i, -1, float(d)))
    for i in range(nb):
        for j in range(i + 1, nb):
            if tree.arm_of[i] == tree.arm_of[j]:
                continue
            d = K._seg_seg_dist(e0[i], e1[i], e0[j], e1[j]) \
                - (tree.cap_radius[i] + tree.cap_radius[j])
            out.append(("capsule", i, j, float(d)))
    return out


@dataclass
class BatchState:
    """State of n independent robots stored as flat arrays, stepped in
    compiled code. qdot_prev backs the PD acceleration estimate."""

    pos: np.ndarray
    quat: np.ndarray
    lin_vel: np.ndarray
    ang_vel: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    qdot_prev: np.ndarray
    time: float = 0.0

    @classmethod
    def from_state(cls, state: RigidBodyState, n_envs: int) -> "BatchState":
        return cls(
            pos=np.tile(state.pos, (n_envs, 1)),
            quat=np.tile(state.quat, (n_envs, 1)),
            lin_vel=np.tile(state.lin_vel, (n_envs, 1)),
            ang_vel=np.tile(state.ang_vel, (n_envs, 1)),
            q=np.tile(state.q, (n_envs, 1)),
            qdot=np.tile(state.qdot, (n_envs, 1)),
            qdot_prev=np.tile(state.qdot, (n_envs, 1)),
            time=state.time,
        )

    @property
    def n_envs(self) -> int:
        return self.pos.shape[0]

    def env_state(self, e: int) -> RigidBodyState:
        return RigidBodyState(
            self.pos[e].copy(), self.quat[e].copy(),
            self.lin_vel[e].copy(), self.ang_vel[e].copy(),
            self.q[e].copy(), self.qdot[e].copy(), self.time,
        )

    def set_env_state(self, e: int, state: RigidBodyState):
        self.pos[e] = state.pos
        self.quat[e] = state.quat
        self.lin_vel[e] = state.lin_vel
        self.ang_vel[e] = state.ang_vel
        self.q[e] = state.q
        self.qdot[e] = state.qdot
        self.qdot_prev[e] = state.qdot


@dataclass
class ControlStepResult:
    collided: np.ndarray
    min_clearance: np.ndarray
    limit_hit: np.ndarray
    link_rot: np.ndarray
    link_pos: np.ndarray


def advance_control_step(tree: KinematicTree, bs: BatchState, qdot_des,
                         kp, kd, n_substeps: int, dt: float,
                         locked=None, wrench_body=None, wrench_force=None,
                         wrench_torque=None, wrench_active=None) -> ControlStepResult:
    """Run one velocity-PD control step (n_substeps integration steps) for
    every environment in the batch, in place."""
    ne = bs.n_envs
    nb = tree.n_links
    if locked is None:
        locked = np.zeros((ne, nb), dtype=bool)
    if wrench_body is None:
        wrench_body = np.full(ne, -1, dtype=np.int64)
        wrench_force = np.zeros((ne, 3))
        wrench_torque = np.zeros((ne, 3))
        wrench_active = np.zeros((ne, n_substeps), dtype=bool)
    R_out = np.empty((ne, nb, 3, 3))
    p_out = np.empty((ne, nb, 3))
    coll, clear, limit, diverged = K._advance_batch(
        tree.parent, tree.mount_pos, tree.mount_rot, tree.axis_local,
        tree.mass, tree.com, tree.inertia,
        tree.base.inertia.mass, tree.base.inertia.com, tree.base.inertia.inertia,
        tree.q_max, tree.qdot_max, tree.tau_max,
        tree.arm_of, tree.cap_a, tree.cap_b, tree.cap_radius,
        tree.base.half_extents,
        bs.pos, bs.quat, bs.lin_vel, bs.ang_vel, bs.q, bs.qdot, bs.qdot_prev,
        np.asarray(qdot_des, dtype=np.float64),
        np.asarray(kp, dtype=np.float64), np.asarray(kd, dtype=np.float64),
        locked, wrench_body, wrench_force, wrench_torque, wrench_active,
        n_substeps, dt, R_out, p_out)
    if np.any(diverged):
        bad = int(np.argmax(diverged))
        raise SimulationDivergenceError(
            f"environment {bad} diverged at t={bs.time:.4f}")
    bs.time += n_substeps * dt
    return ControlStepResult(coll, clear, limit, R_out, p_out)
