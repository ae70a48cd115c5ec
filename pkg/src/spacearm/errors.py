"""Exception types shared across the package."""


class SpacearmError(Exception):
    """Base class for all package-specific errors."""


class ModelError(SpacearmError):
    """Invalid robot model description (topology, inertia, limits)."""


class SimulationDivergenceError(SpacearmError):
    """State left the numerically sane region (NaN/inf or runaway values)."""


class CheckpointError(SpacearmError):
    """Checkpoint file is malformed or incompatible with the requested model."""


class CompositionError(SpacearmError):
    """Policy reassembly failed (missing agents, shape or robot mismatch)."""


class TrainingError(SpacearmError):
    """Optimization produced non-finite quantities; the run must abort."""
