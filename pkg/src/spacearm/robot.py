"""Robot model files: schema, loader and built-in presets.

A model file is YAML with a top-level ``model_version`` (currently 1), a
``base`` body, per-joint PD gains, and a list of arms. Each arm gives a
mount pose on the base, an ordered chain of links (offset/rpy are the joint
frame in the parent link frame, rpy being intrinsic X-Y-Z Euler angles), an
end-effector tip point in the last link frame, and a cubic target volume in
the base frame used for goal sampling.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .dynamics.types import BaseSpec, JointLimits, KinematicTree, LinkSpec, SpatialInertia
from .errors import ModelError
from .rotations import euler_xyz_to_matrix

MODEL_VERSION = 1
PRESETS = ("full4", "desk2")


@dataclass
class RobotModel:
    """A kinematic tree plus everything the environment layer needs:
    home configuration, PD gains and per-arm goal volumes."""

    name: str
    tree: KinematicTree
    home_q: np.ndarray
    kp: np.ndarray
    kd: np.ndarray
    target_centers: np.ndarray
    target_half: np.ndarray
    config_hash: str

    @property
    def n_arms(self) -> int:
        return self.tree.n_arms

    @property
    def n_joints(self) -> int:
        return self.tree.n_links

    def arm_joint_indices(self, arm: int) -> np.ndarray:
        """Packed joint indices belonging to one arm, chain order."""
        return self.tree.arm_links[arm]

    def home_state(self):
        return self.tree.home_state(self.home_q)


def _inertia(entry: dict) -> SpatialInertia:
    mass = float(entry["mass"])
    com = np.array(entry.get("com", [0.0, 0.0, 0.0]), dtype=np.float64)
    if "inertia_diag" in entry:
        I = np.diag(np.array(entry["inertia_diag"], dtype=np.float64))
    else:
        I = np.array(entry["inertia"], dtype=np.float64)
    return SpatialInertia(mass, com, I)


def build_space_robot(cfg: dict) -> KinematicTree:
    """Build a validated KinematicTree from a parsed model dictionary."""
    version = cfg.get("model_version")
    if version != MODEL_VERSION:
        raise ModelError(
            f"unsupported model_version {version!r}, expected {MODEL_VERSION}")
    base_cfg = cfg["base"]
    base = BaseSpec(
        inertia=_inertia(base_cfg),
        half_extents=np.array(base_cfg["half_extents"], dtype=np.float64),
    )
    links: list[LinkSpec] = []
    ee_tips = []
    for arm in cfg["arms"]:
        mount_R = euler_xyz_to_matrix(np.array(arm["mount_rpy"], dtype=np.float64))
        mount_p = np.array(arm["mount_pos"], dtype=np.float64)
        parent = -1
        for k, lc in enumerate(arm["links"]):
            off = np.array(lc["offset"], dtype=np.float64)
            R = euler_xyz_to_matrix(np.array(lc["rpy"], dtype=np.float64))
            if k == 0:
                pos = mount_p + mount_R @ off
                rot = mount_R @ R
            else:
                pos = off
                rot = R
            links.append(LinkSpec(
                name=f"{arm['name']}/{lc['name']}",
                parent=parent,
                mount_pos=pos,
                mount_rot=rot,
                axis=np.array(lc["axis"], dtype=np.float64),
                inertia=_inertia(lc),
                limits=JointLimits(float(lc["q_max"]), float(lc["qdot_max"]),
                                   float(lc["tau_max"])),
                cap_a=np.array(lc["cap_a"], dtype=np.float64),
                cap_b=np.array(lc["cap_b"], dtype=np.float64),
                cap_radius=float(lc["cap_radius"]),
            ))
            parent = len(links) - 1
        ee_tips.append(np.array(arm["tip"], dtype=np.float64))
    return KinematicTree(base, links, np.stack(ee_tips))


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def model_from_dict(cfg: dict) -> RobotModel:
    tree = build_space_robot(cfg)
    n_arms = len(cfg["arms"])
    home_arm = np.array(cfg["home_q_arm"], dtype=np.float64)
    joints_per_arm = tree.n_links // n_arms
    if home_arm.shape != (joints_per_arm,):
        raise ModelError("home_q_arm length must match joints per arm")
    home_q = np.tile(home_arm, n_arms)
    kp_arm = np.array(cfg["pd"]["kp"], dtype=np.float64)
    kd_arm = np.array(cfg["pd"]["kd"], dtype=np.float64)
    if kp_arm.shape != (joints_per_arm,) or kd_arm.shape != (joints_per_arm,):
        raise ModelError("pd gain length must match joints per arm")
    if np.any(kp_arm <= 0.0) or np.any(kd_arm < 0.0):
        raise ModelError("pd gains must be positive (kd may be zero)")
    centers = np.array([a["target_center"] for a in cfg["arms"]], dtype=np.float64)
    halfs = np.array([float(a["target_half"]) for a in cfg["arms"]])
    if np.any(halfs <= 0.0):
        raise ModelError("target_half must be positive")
    return RobotModel(
        name=str(cfg.get("name", "unnamed")),
        tree=tree,
        home_q=home_q,
        kp=np.tile(kp_arm, n_arms),
        kd=np.tile(kd_arm, n_arms),
        target_centers=centers,
        target_half=halfs,
        config_hash=_config_hash(cfg),
    )


def load_model(path) -> RobotModel:
    text = Path(path).read_text()
    cfg = yaml.safe_load(text)
    if not isinstance(cfg, dict):
        raise ModelError(f"model file {path} did not parse to a mapping")
    return model_from_dict(cfg)


def load_preset(name: str) -> RobotModel:
    if name not in PRESETS:
        raise ModelError(f"unknown preset {name!r}, choose from {PRESETS}")
    ref = resources.files("spacearm") / "model_files" / f"{name}.yaml"
    cfg = yaml.safe_load(ref.read_text())
    return model_from_dict(cfg)


def raw_config(spec: str) -> dict:
    """Parsed model dictionary for a preset name or a file path."""
    if spec in PRESETS:
        ref = resources.files("spacearm") / "model_files" / f"{spec}.yaml"
        cfg = yaml.safe_load(ref.read_text())
    else:
        p = Path(spec)
        if not p.exists():
            raise ModelError(
                f"{spec!r} is neither a preset nor an existing file")
        cfg = yaml.safe_load(p.read_text())
    if not isinstance(cfg, dict):
        raise ModelError(f"model file {spec} did not parse to a mapping")
    return cfg


def resolve_model(spec: str) -> RobotModel:
    """Accept either a preset name or a path to a model file."""
    if spec in PRESETS:
        return load_preset(spec)
    p = Path(spec)
    if p.exists():
        return load_model(p)
    raise ModelError(f"{spec!r} is neither a preset nor an existing file")


def model_with_base_mass_scale(spec: str, factor: float) -> RobotModel:
    """Same robot with the base body's mass scaled by factor.

    Geometry is unchanged and density assumed uniform, so the base inertia
    scales with the mass and the center of mass stays put."""
    if factor <= 0.0:
        raise ModelError("mass scale must be positive")
    cfg = copy.deepcopy(raw_config(spec))
    base = cfg["base"]
    base["mass"] = float(base["mass"]) * factor
    if "inertia_diag" in base:
        base["inertia_diag"] = [float(v) * factor
                                for v in base["inertia_diag"]]
    elif "inertia" in base:
        base["inertia"] = [[float(v) * factor for v in row]
                           for row in base["inertia"]]
    return model_from_dict(cfg)


def default_target_volume(model: RobotModel, arm: int):
    """Goal-sampling cube for one arm: (center (3,), half_side) in the base
    frame at reset."""
    if not (0 <= arm < model.n_arms):
        raise ModelError(f"arm index {arm} out of range")
    return model.target_centers[arm].copy(), float(model.target_half[arm])
