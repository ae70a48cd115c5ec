from ..errors import SimulationDivergenceError
from .types import (
    BaseSpec,
    ExternalWrench,
    JointLimits,
    KinematicTree,
    LinkSpec,
    RigidBodyState,
    SpatialInertia,
)
from .engine import (
    BatchState,
    CollisionResult,
    ControlStepResult,
    FrameSet,
    advance_control_step,
    bias_forces,
    check_collision,
    collision_pairs,
    forward_dynamics,
    forward_kinematics,
    kinetic_energy,
    mass_matrix,
    momentum_about_origin,
    step,
    system_com,
    total_momentum,
)

__all__ = [
    "BaseSpec", "ExternalWrench", "JointLimits", "KinematicTree", "LinkSpec",
    "RigidBodyState", "SpatialInertia", "BatchState", "CollisionResult",
    "ControlStepResult", "FrameSet", "advance_control_step", "bias_forces",
    "check_collision", "collision_pairs", "forward_dynamics",
    "forward_kinematics", "kinetic_energy", "mass_matrix",
    "momentum_about_origin", "step", "system_com", "total_momentum",
    "SimulationDivergenceError",
]
