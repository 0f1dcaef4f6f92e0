"""Attribution-guided deep-unfolding infrared/visible image fusion."""

from .errors import (ConfigError, ContractError, DataError, DomainError,
                     EmptyClassRegion, FusionError, NumericAbort, ShapeError)
from .fusion import (AblationFlags, FusionModel, FusionTrajectory, ModelConfig,
                     StageParams, fidelity_gradient, infer, init_fused, run_stage, unroll)
from .tensor import Tensor, backward

__all__ = [
    "AblationFlags", "ConfigError", "ContractError", "DataError", "DomainError",
    "EmptyClassRegion", "FusionError", "FusionModel", "FusionTrajectory",
    "ModelConfig", "NumericAbort", "ShapeError", "StageParams", "Tensor",
    "backward", "fidelity_gradient", "infer", "init_fused", "run_stage", "unroll",
]
