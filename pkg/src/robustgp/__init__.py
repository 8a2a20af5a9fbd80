"""Robust Gaussian-process regression with sparse, data-point-specific noise variances."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DimensionError,
    EnumerationBudgetExceeded,
    InputError,
    NotPositiveDefinite,
    NumericalError,
    OptimizationFailed,
    ParseError,
    PursuitFailed,
    RobustGPError,
)
from .kernels import Dataset, Hyperparameters  # noqa: E402
from .model import RobustGPModel  # noqa: E402
from .pursuit import (  # noqa: E402
    DetectConfig,
    PursuitConfig,
    Schedule,
    SizePrior,
    backward_pursuit,
    detect_outliers,
    forward_pursuit,
)

__all__ = [
    "Dataset",
    "DetectConfig",
    "DimensionError",
    "EnumerationBudgetExceeded",
    "Hyperparameters",
    "InputError",
    "NotPositiveDefinite",
    "NumericalError",
    "OptimizationFailed",
    "ParseError",
    "PursuitConfig",
    "PursuitFailed",
    "RobustGPError",
    "RobustGPModel",
    "Schedule",
    "SizePrior",
    "backward_pursuit",
    "detect_outliers",
    "forward_pursuit",
]
