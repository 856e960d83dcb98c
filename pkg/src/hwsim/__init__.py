"""Deterministic multi-lane highway traffic simulator with an
affordance-indicator overtaking controller."""

from .core import (
    ControlCommand,
    ControllerParams,
    Segment,
    TrackSpec,
    VehicleState,
    WorldState,
    track_pose,
)
from .controller import AgentState, ControllerState, control_step
from .dynamics import DynamicsParams, VehicleGeometry, detect_collisions, step_vehicle
from .engine import RunMetrics, compute_dmae, run
from .scenario import ScenarioError, ScenarioSpec, load_scenario
from .sensors import (
    NOISE_PRESETS,
    Indicators,
    NoiseModel,
    OpponentReading,
    PerceptionState,
    ground_truth_indicators,
    opponents,
    perceive,
)

__all__ = [
    "AgentState",
    "ControlCommand",
    "ControllerParams",
    "ControllerState",
    "DynamicsParams",
    "Indicators",
    "NOISE_PRESETS",
    "NoiseModel",
    "OpponentReading",
    "PerceptionState",
    "RunMetrics",
    "ScenarioError",
    "ScenarioSpec",
    "Segment",
    "TrackSpec",
    "VehicleGeometry",
    "VehicleState",
    "WorldState",
    "compute_dmae",
    "control_step",
    "detect_collisions",
    "ground_truth_indicators",
    "load_scenario",
    "opponents",
    "perceive",
    "run",
    "step_vehicle",
    "track_pose",
]

__version__ = "0.1.0"
