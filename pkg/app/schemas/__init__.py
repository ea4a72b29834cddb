"""Pydantic schemas for scenarios, experiment configs and reports."""

from app.schemas.scenario import (
    ExitSpec,
    RoomScenario,
    ScenarioFamily,
    ScenarioParams,
    WallSide,
)
from app.schemas.config import (
    ExperimentConfig,
    NetworkConfig,
    RewardWeights,
    ScenarioSamplerConfig,
    SimulationParams,
    TrainConfig,
)
from app.schemas.report import (
    EvalReport,
    EventRecord,
    PolicyHandle,
    PolicyKind,
    TraceFrame,
)

__all__ = [
    # Scenario
    "ExitSpec",
    "RoomScenario",
    "ScenarioFamily",
    "ScenarioParams",
    "WallSide",
    # Config
    "ExperimentConfig",
    "NetworkConfig",
    "RewardWeights",
    "ScenarioSamplerConfig",
    "SimulationParams",
    "TrainConfig",
    # Report
    "EvalReport",
    "EventRecord",
    "PolicyHandle",
    "PolicyKind",
    "TraceFrame",
]
