"""Counterfactual outcome estimation for basket-trial-style multi-group data.

A multi-head outcome generator with per-feature gating layers and
elastic-net penalties is trained against a true/false discriminator in a
minimax game; the trained generator imputes every unit's outcome under
every group. The package also ships the matching synthetic basket-trial
simulator (hub-Toeplitz correlation structure, cosine outcome surfaces),
evaluation metrics, nearest-neighbor/group-mean baselines, loaders, and a
command-line workflow (simulate / train / evaluate / gradcheck / sweep).
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    FormatError,
    MtalError,
    NumericError,
    ShapeError,
    SimulationError,
    ValidationError,
)

__all__ = [
    "__version__",
    "MtalError",
    "ConfigError",
    "ShapeError",
    "NumericError",
    "DataError",
    "ValidationError",
    "SimulationError",
    "FormatError",
]
