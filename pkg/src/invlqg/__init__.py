"""Invariant and conventional LQG observer-controllers for a noisy unicycle."""

from .closedloop import (
    LOST_THRESHOLD,
    TrialConfig,
    TrialResult,
    is_lost,
    monte_carlo_grid,
    run_conventional_lqg,
    run_invariant_lqg,
)
from .controllers import CostWeights, Flavor, GainSchedule, riccati_conventional, riccati_invariant
from .estimators import Belief, Frame, ekf_predict, ekf_update, iekf_predict, iekf_update
from .geometry import Pose
from .model import ControlInput, NoiseModel, ReferenceTrajectory, generate_reference, mixed_reference
from .prediction import predict_conventional, predict_invariant, symmetric_kl

__version__ = "0.1.0"

__all__ = [
    "LOST_THRESHOLD",
    "Belief",
    "ControlInput",
    "CostWeights",
    "Flavor",
    "Frame",
    "GainSchedule",
    "NoiseModel",
    "Pose",
    "ReferenceTrajectory",
    "TrialConfig",
    "TrialResult",
    "ekf_predict",
    "ekf_update",
    "generate_reference",
    "iekf_predict",
    "iekf_update",
    "is_lost",
    "mixed_reference",
    "monte_carlo_grid",
    "predict_conventional",
    "predict_invariant",
    "riccati_conventional",
    "riccati_invariant",
    "run_conventional_lqg",
    "run_invariant_lqg",
    "symmetric_kl",
]
