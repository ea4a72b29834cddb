"""Service Layer - simulation, observation and learning."""

from app.services.environment import EvacuationEnvironment, build_scenario, world_step
from app.services.network import NoiseMode, RainbowNetwork
from app.services.replay import NStepAccumulator, PriorityBuffer
from app.services.sampler import ScenarioSampler
from app.services.trainer import RainbowTrainer

__all__ = [
    "EvacuationEnvironment",
    "build_scenario",
    "world_step",
    "NoiseMode",
    "RainbowNetwork",
    "NStepAccumulator",
    "PriorityBuffer",
    "ScenarioSampler",
    "RainbowTrainer",
]
