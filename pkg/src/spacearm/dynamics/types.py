"""Core data types for the floating-base rigid-body simulator.

A robot is a rigid base body plus one or more serial arms. Every joint is a
revolute joint with a symmetric position limit. Link frames sit at the joint:
the frame origin is the joint axis point and the frame rotates with the link.
The base pose is a free 6-DoF floating joint; its generalized velocity is the
world-frame linear velocity of the base frame origin plus the world-frame
angular velocity.

Generalized velocity layout used everywhere:

    u = [v_base (3), omega_base (3), qdot (n_joints)]
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ModelError


def _as_f64(x, shape) -> np.ndarray:
    a = np.array(x, dtype=np.float64)
    if a.shape != shape:
        raise ModelError(f"expected shape {shape}, got {a.shape}")
    return a


@dataclass
class SpatialInertia:
    """Mass properties of one rigid body.

    com is the center-of-mass offset in the body frame; inertia is the 3x3
    rotational inertia about the COM, expressed in the body frame.
    """

    mass: float
    com: np.ndarray
    inertia: np.ndarray

    def __post_init__(self):
        self.com = _as_f64(self.com, (3,))
        self.inertia = _as_f64(self.inertia, (3, 3))
        self.validate()

    def validate(self):
        if not np.isfinite(self.mass) or self.mass <= 0.0:
            raise ModelError(f"mass must be positive, got {self.mass}")
        I = self.inertia
        if not np.all(np.isfinite(I)):
            raise ModelError("inertia has non-finite entries")
        scale = max(float(np.trace(I)), 1e-30)
        if not np.allclose(I, I.T, atol=1e-9 * scale):
            raise ModelError("inertia matrix is not symmetric")
        eig = np.linalg.eigvalsh(0.5 * (I + I.T))
        if np.any(eig <= 0.0):
            raise ModelError(f"inertia is not positive definite: eigvals {eig}")
        # principal moments of any rigid body satisfy the triangle inequality
        tol = 1e-9 * scale
        if eig[0] + eig[1] < eig[2] - tol:
            raise ModelError(f"inertia violates the triangle inequality: {eig}")


@dataclass
class JointLimits:
    """Symmetric limits for one revolute joint: |q| <= q_max, etc."""

    q_max: float
    qdot_max: float
    tau_max: float

    def __post_init__(self):
        for name in ("q_max", "qdot_max", "tau_max"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0.0:
                raise ModelError(f"{name} must be positive, got {v}")


@dataclass
class LinkSpec:
    """One link and its inboard revolute joint.

    mount_pos / mount_rot give the joint frame in the parent frame (parent
    -1 means the base). axis is the rotation axis in the joint frame. The
    capsule (cap_a, cap_b, cap_radius) is the link's collision volume in the
    link frame.
    """

    name: str
    parent: int
    mount_pos: np.ndarray
    mount_rot: np.ndarray
    axis: np.ndarray
    inertia: SpatialInertia
    limits: JointLimits
    cap_a: np.ndarray
    cap_b: np.ndarray
    cap_radius: float

    def __post_init__(self):
        self.mount_pos = _as_f64(self.mount_pos, (3,))
        self.mount_rot = _as_f64(self.mount_rot, (3, 3))
        self.axis = _as_f64(self.axis, (3,))
        self.cap_a = _as_f64(self.cap_a, (3,))
        self.cap_b = _as_f64(self.cap_b, (3,))
        n = float(np.linalg.norm(self.axis))
        if abs(n - 1.0) > 1e-9:
            raise ModelError(f"joint axis of {self.name!r} is not unit length")
        RtR = self.mount_rot.T @ self.mount_rot
        if not np.allclose(RtR, np.eye(3), atol=1e-9):
            raise ModelError(f"mount rotation of {self.name!r} is not orthonormal")
        if self.cap_radius <= 0.0:
            raise ModelError(f"capsule radius of {self.name!r} must be positive")


@dataclass
class BaseSpec:
    """The floating base body: mass properties plus an axis-aligned box
    collision volume (half extents in the base frame)."""

    inertia: SpatialInertia
    half_extents: np.ndarray

    def __post_init__(self):
        self.half_extents = _as_f64(self.half_extents, (3,))
        if np.any(self.half_extents <= 0.0):
            raise ModelError("base half extents must be positive")


@dataclass
class ExternalWrench:
    """World-frame force and torque applied at a body's COM.

    body is the link index, or -1 for the base.
    """

    body: int
    force: np.ndarray
    torque: np.ndarray

    def __post_init__(self):
        self.force = _as_f64(self.force, (3,))
        self.torque = _as_f64(self.torque, (3,))


@dataclass
class RigidBodyState:
    """Full simulator state.

    pos/quat: base frame pose in the world (quat is (w, x, y, z), unit).
    lin_vel: world velocity of the base frame origin.
    ang_vel: world angular velocity of the base.
    """

    pos: np.ndarray
    quat: np.ndarray
    lin_vel: np.ndarray
    ang_vel: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.pos = _as_f64(self.pos, (3,))
        self.quat = _as_f64(self.quat, (4,))
        self.lin_vel = _as_f64(self.lin_vel, (3,))
        self.ang_vel = _as_f64(self.ang_vel, (3,))
        self.q = np.asarray(self.q, dtype=np.float64).copy()
        self.qdot = np.asarray(self.qdot, dtype=np.float64).copy()
        if self.q.shape != self.qdot.shape or self.q.ndim != 1:
            raise ModelError("q and qdot must be 1-D arrays of equal length")

    def copy(self) -> "RigidBodyState":
        return RigidBodyState(
            self.pos.copy(),
            self.quat.copy(),
            self.lin_vel.copy(),
            self.ang_vel.copy(),
            self.q.copy(),
            self.qdot.copy(),
            self.time,
        )

    def generalized_velocity(self) -> np.ndarray:
        return np.concatenate([self.lin_vel, self.ang_vel, self.qdot])

    def is_finite(self) -> bool:
        return all(
            bool(np.all(np.isfinite(a)))
            for a in (self.pos, self.quat, self.lin_vel, self.ang_vel, self.q, self.qdot)
        )


class KinematicTree:
    """Validated, packed description of base + links.

    Construction validates topology (parents precede children, every arm is a
    serial chain hanging off the base) and packs all per-link quantities into
    flat float64/int64 arrays for the simulation kernels.
    """

    def __init__(self, base: BaseSpec, links: list[LinkSpec], ee_tips=None):
        self.base = base
        self.links = list(links)
        nb = len(self.links)
        if nb == 0:
            raise ModelError("tree needs at least one link")

        self.parent = np.array([l.parent for l in self.links], dtype=np.int64)
        for i, p in enumerate(self.parent):
            if not (-1 <= p < i):
                raise ModelError(f"link {i}: parent {p} must precede it (-1 = base)")

        # arm membership: each root link starts a new arm
        arm_of = np.empty(nb, dtype=np.int64)
        n_arms = 0
        for i, p in enumerate(self.parent):
            if p == -1:
                arm_of[i] = n_arms
                n_arms += 1
            else:
                arm_of[i] = arm_of[p]
        self.arm_of = arm_of
        self.n_arms = n_arms

        children = [[] for _ in range(nb)]
        for i, p in enumerate(self.parent):
            if p >= 0:
                children[p].append(i)
        if any(len(c) > 1 for c in children):
            raise ModelError("each arm must be a serial chain (multiple children found)")
        self.ee_link = np.array(
            [max(i for i in range(nb) if arm_of[i] == a) for a in range(n_arms)],
            dtype=np.int64,
        )
        self.arm_links = [
            np.array([i for i in range(nb) if arm_of[i] == a], dtype=np.int64)
            for a in range(n_arms)
        ]

        self.mount_pos = np.stack([l.mount_pos for l in self.links])
        self.mount_rot = np.stack([l.mount_rot for l in self.links])
        self.axis_local = np.stack([l.axis for l in self.links])
        self.mass = np.array([l.inertia.mass for l in self.links])
        self.com = np.stack([l.inertia.com for l in self.links])
        self.inertia = np.stack([l.inertia.inertia for l in self.links])
        self.q_max = np.array([l.limits.q_max for l in self.links])
        self.qdot_max = np.array([l.limits.qdot_max for l in self.links])
        self.tau_max = np.array([l.limits.tau_max for l in self.links])
        self.cap_a = np.stack([l.cap_a for l in self.links])
        self.cap_b = np.stack([l.cap_b for l in self.links])
        self.cap_radius = np.array([l.cap_radius for l in self.links])

        if ee_tips is None:
            ee_tips = np.stack([self.cap_b[e] for e in self.ee_link])
        self.ee_tip = _as_f64(np.asarray(ee_tips), (n_arms, 3))

        self.n_links = nb
        self.nv = 6 + nb
        self.total_mass = float(base.inertia.mass + self.mass.sum())

        for a in (
            self.parent, self.arm_of, self.ee_link, self.mount_pos, self.mount_rot,
            self.axis_local, self.mass, self.com, self.inertia, self.q_max,
            self.qdot_max, self.tau_max, self.cap_a, self.cap_b, self.cap_radius,
            self.ee_tip,
        ):
            a.flags.writeable = False

    def home_state(self, q=None) -> RigidBodyState:
        """State with the base at the world origin and all velocities zero."""
        nb = self.n_links
        if q is None:
            q = np.zeros(nb)
        q = np.asarray(q, dtype=np.float64)
        if q.shape != (nb,):
            raise ModelError(f"home q must have shape ({nb},)")
        return RigidBodyState(
            pos=np.zeros(3),
            quat=np.array([1.0, 0.0, 0.0, 0.0]),
            lin_vel=np.zeros(3),
            ang_vel=np.zeros(3),
            q=q.copy(),
            qdot=np.zeros(nb),
        )
