"""Neural SDE with drift/diffusion nets, uncertainty decomposition, and
detection/active-learning experiment harness."""

from .errors import (ConfigError, InsufficientSamplesError, NumericError,
                     SdeNetError, UndefinedMetricError)
from .model import SdeNet, PathSample, PredictiveBatch
from .solver import SolverConfig
from .tensor import Tensor

__all__ = [
    "ConfigError",
    "InsufficientSamplesError",
    "NumericError",
    "PathSample",
    "PredictiveBatch",
    "SdeNet",
    "SdeNetError",
    "SolverConfig",
    "Tensor",
    "UndefinedMetricError",
]

__version__ = "0.1.0"
