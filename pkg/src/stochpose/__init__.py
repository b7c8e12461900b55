"""Stochastic pose filtering on SE(3) with IMU and landmark measurements."""

from .filters import FilterState, Gains, PoseFilter
from .liegroup import Pose
from .sim import MeasurementFrame, NoiseModel, Scene, Simulator
from .wahba import reconstruct_pose, solve_wahba

__version__ = "0.1.0"

__all__ = [
    "FilterState",
    "Gains",
    "MeasurementFrame",
    "NoiseModel",
    "Pose",
    "PoseFilter",
    "Scene",
    "Simulator",
    "reconstruct_pose",
    "solve_wahba",
]
