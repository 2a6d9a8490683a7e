"""Finite-horizon LQ control synthesis: H2, H-infinity, offline-noncausal and
regret-optimal controllers, with a dense operator oracle for verification."""

from .system_model import (
    LqSystem,
    Trajectory,
    validate_system,
    normalize_control_weight,
    evaluate_cost,
)
from . import riccati, operator_oracle, controllers, augmentation, sim_bench

__all__ = [
    "LqSystem",
    "Trajectory",
    "validate_system",
    "normalize_control_weight",
    "evaluate_cost",
    "riccati",
    "operator_oracle",
    "controllers",
    "augmentation",
    "sim_bench",
]

__version__ = "0.1.0"
