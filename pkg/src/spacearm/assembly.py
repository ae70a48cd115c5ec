"""Policy containers, binary checkpoints, and cross-task reassembly.

A PolicySet maps agent ids to frozen actor (and optionally critic) networks
together with provenance: which robot, which task, which seed, how many
environment steps. Sets round-trip through a little-endian binary container
byte-exactly, and sets trained on different tasks can be recombined arm by
arm into one composite set for the mixed task without touching a single
parameter.
"""

from __future__ import annotations

import hashlib
import io
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from .env.tasks import TASK_KINDS, TaskSpec
from .errors import CheckpointError, CompositionError
from .nn import GaussianPolicy, Mlp

log = logging.getLogger(__name__)

MAGIC = b"SPACEARM"
FORMAT_VERSION = 1

_ROLES = ("position", "orientation", "base", "central")


@dataclass
class PolicyEntry:
    agent_id: int
    arm: int
    role: str
    joints: tuple
    actor: GaussianPolicy
    critic: Mlp = None

    def param_bytes(self) -> bytes:
        buf = io.BytesIO()
        for p in self.actor.params:
            buf.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
        if self.critic is not None:
            for p in self.critic.params:
                buf.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
        return buf.getvalue()

    def param_hash(self) -> str:
        return hashlib.sha256(self.param_bytes()).hexdigest()


@dataclass
class PolicySet:
    robot_hash: str
    task_kind: str
    arm_tasks: tuple = ()
    seed: int = 0
    env_steps: int = 0
    entries: list = field(default_factory=list)

    def __post_init__(self):
        ids = [e.agent_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise CompositionError("duplicate agent ids in policy set")

    @property
    def agent_ids(self) -> list:
        return [e.agent_id for e in self.entries]

    def entry(self, agent_id: int) -> PolicyEntry:
        for e in self.entries:
            if e.agent_id == agent_id:
                return e
        raise CompositionError(f"no policy for agent {agent_id}")

    def arm_entries(self, arm: int) -> list:
        return [e for e in self.entries if e.arm == arm]

    def param_hashes(self) -> dict:
        return {e.agent_id: e.param_hash() for e in self.entries}

    def without_critics(self) -> "PolicySet":
        """Execution needs actors only; critics are training-time machinery."""
        entries = [PolicyEntry(e.agent_id, e.arm, e.role, e.joints,
                               e.actor, None) for e in self.entries]
        return PolicySet(self.robot_hash, self.task_kind, self.arm_tasks,
                         self.seed, self.env_steps, entries)

    def check_matches_env(self, env) -> None:
        """Every env agent must resolve to an entry with the same wiring."""
        for a in env.agents:
            e = self.entry(a.agent_id)
            if e.arm != a.arm or tuple(e.joints) != tuple(a.joints):
                raise CompositionError(
                    f"agent {a.agent_id}: checkpoint wiring (arm {e.arm}, "
                    f"joints {e.joints}) does not match the environment")
            if e.actor.obs_dim != env.obs_dim:
                raise CompositionError(
                    f"agent {a.agent_id}: actor expects {e.actor.obs_dim} "
                    f"inputs, environment provides {env.obs_dim}")
        if self.robot_hash != env.model.config_hash:
            raise CompositionError("policy set was trained on a different "
                                   "robot configuration")


# ----------------------------------------------------------- binary format


def _pack_net(buf, sizes, params):
    buf.write(struct.pack("<I", len(sizes)))
    buf.write(struct.pack(f"<{len(sizes)}I", *sizes))
    for p in params:
        buf.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def _read(buf, n: int) -> bytes:
    b = buf.read(n)
    if len(b) != n:
        raise CheckpointError("truncated checkpoint file")
    return b


def _unpack_net_arrays(buf):
    (n,) = struct.unpack("<I", _read(buf, 4))
    if not 2 <= n <= 64:
        raise CheckpointError("corrupt layer table")
    sizes = struct.unpack(f"<{n}I", _read(buf, 4 * n))
    params = []
    for i in range(n - 1):
        w = np.frombuffer(_read(buf, 8 * sizes[i + 1] * sizes[i]),
                          dtype="<f8").reshape(sizes[i + 1], sizes[i]).copy()
        b = np.frombuffer(_read(buf, 8 * sizes[i + 1]), dtype="<f8").copy()
        params.extend([w, b])
    return sizes, params


def _mlp_from_arrays(sizes, params) -> Mlp:
    net = object.__new__(Mlp)
    net.sizes = tuple(int(s) for s in sizes)
    net.activation = "tanh"
    net.params = params
    return net


def save_policies(pset: PolicySet, path) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(pset.robot_hash.encode("ascii"))
    buf.write(struct.pack("<I", TASK_KINDS.index(pset.task_kind)))
    buf.write(struct.pack("<I", len(pset.arm_tasks)))
    for k in pset.arm_tasks:
        buf.write(struct.pack("<I", TASK_KINDS.index(k)))
    buf.write(struct.pack("<qq", int(pset.seed), int(pset.env_steps)))
    buf.write(struct.pack("<I", len(pset.entries)))
    for e in pset.entries:
        buf.write(struct.pack("<Ii", e.agent_id, e.arm))
        buf.write(struct.pack("<I", _ROLES.index(e.role)))
        buf.write(struct.pack("<I", len(e.joints)))
        for j in e.joints:
            buf.write(struct.pack("<I", j))
        _pack_net(buf, e.actor.net.sizes, e.actor.net.params)
        buf.write(np.ascontiguousarray(e.actor.log_std, dtype="<f8")
                  .tobytes())
        buf.write(struct.pack("<B", 1 if e.critic is not None else 0))
        if e.critic is not None:
            _pack_net(buf, e.critic.sizes, e.critic.params)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_policies(path, expect_robot_hash: str = None) -> PolicySet:
    with open(path, "rb") as f:
        buf = io.BytesIO(f.read())
    if _read(buf, len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a policy checkpoint")
    (version,) = struct.unpack("<I", _read(buf, 4))
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: model_version {version} is not supported "
            f"(expected {FORMAT_VERSION})")
    robot_hash = _read(buf, 64).decode("ascii")
    (kind_idx,) = struct.unpack("<I", _read(buf, 4))
    if kind_idx >= len(TASK_KINDS):
        raise CheckpointError("corrupt task kind")
    (n_arm_tasks,) = struct.unpack("<I", _read(buf, 4))
    arm_tasks = []
    for _ in range(n_arm_tasks):
        (k,) = struct.unpack("<I", _read(buf, 4))
        if k >= len(TASK_KINDS):
            raise CheckpointError("corrupt task kind")
        arm_tasks.append(TASK_KINDS[k])
    seed, env_steps = struct.unpack("<qq", _read(buf, 16))
    (n_agents,) = struct.unpack("<I", _read(buf, 4))
    entries = []
    for _ in range(n_agents):
        agent_id, arm = struct.unpack("<Ii", _read(buf, 8))
        (role_idx,) = struct.unpack("<I", _read(buf, 4))
        if role_idx >= len(_ROLES):
            raise CheckpointError("corrupt role tag")
        (nj,) = struct.unpack("<I", _read(buf, 4))
        joints = struct.unpack(f"<{nj}I", _read(buf, 4 * nj))
        sizes, params = _unpack_net_arrays(buf)
        act_dim = sizes[-1]
        log_std = np.frombuffer(_read(buf, 8 * act_dim), dtype="<f8").copy()
        actor = object.__new__(GaussianPolicy)
        actor.obs_dim = int(sizes[0])
        actor.act_dim = int(act_dim)
        actor.net = _mlp_from_arrays(sizes, params)
        actor.log_std = log_std
        (has_critic,) = struct.unpack("<B", _read(buf, 1))
        critic = None
        if has_critic:
            critic = _mlp_from_arrays(*_unpack_net_arrays(buf))
        entries.append(PolicyEntry(agent_id, arm, _ROLES[role_idx],
                                   tuple(int(j) for j in joints), actor,
                                   critic))
    if buf.read(1):
        raise CheckpointError(f"{path}: trailing bytes after last agent")
    pset = PolicySet(robot_hash, TASK_KINDS[kind_idx], tuple(arm_tasks),
                     seed, env_steps, entries)
    if expect_robot_hash is not None and robot_hash != expect_robot_hash:
        log.warning("%s: robot hash %s does not match expected %s",
                    path, robot_hash[:12], expect_robot_hash[:12])
    return pset


# -------------------------------------------------------------- reassembly


def reassemble(assignment: dict) -> tuple:
    """Compose donor policies arm by arm into one set for the mixed task.

    assignment: arm index -> (PolicySet, task kind the donor was trained
    for). Donor parameters are shared by reference, never copied or
    modified. Returns (composite PolicySet, mixed TaskSpec).
    """
    if not assignment:
        raise CompositionError("empty arm assignment")
    arms = sorted(assignment)
    if arms != list(range(len(arms))):
        raise CompositionError(f"arm assignment {arms} must cover arms "
                               f"0..{len(arms) - 1} exactly")
    robot_hash = None
    entries = []
    arm_kinds = []
    for arm in arms:
        donor, kind = assignment[arm]
        if kind not in ("trajectory", "reorientation"):
            raise CompositionError(f"arm {arm}: invalid task kind {kind!r}")
        if robot_hash is None:
            robot_hash = donor.robot_hash
        elif donor.robot_hash != robot_hash:
            raise CompositionError(
                f"arm {arm}: donor robot configuration differs")
        picked = donor.arm_entries(arm)
        if not picked:
            raise CompositionError(f"arm {arm}: donor has no policy for it")
        entries.extend(picked)
        arm_kinds.append(kind)
    task = TaskSpec("mixed", arm_tasks=tuple(arm_kinds))
    composite = PolicySet(robot_hash, "mixed", tuple(arm_kinds),
                          entries=sorted(entries, key=lambda e: e.agent_id))
    return composite, task
