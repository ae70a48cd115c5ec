from .adam import Adam
from .layers import Mlp, glorot_uniform
from .policy import (
    LOG_STD_MAX,
    LOG_STD_MIN,
    GaussianPolicy,
    softplus,
    tanh_log_det,
)

__all__ = [
    "Adam", "GaussianPolicy", "LOG_STD_MAX", "LOG_STD_MIN", "Mlp",
    "glorot_uniform", "softplus", "tanh_log_det",
]
