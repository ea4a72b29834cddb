"""Runtime simulation and learning models."""

from app.models.pedestrian import HalfPlaneConstraint, ObstacleSegment, PedestrianState, Vec2
from app.models.simulation import EventKind, PedestrianEvent, SimulationState
from app.models.observation import STACK_DEPTH, StateTensor
from app.models.transition import PrioritizedTransition, RawStep

__all__ = [
    "Vec2",
    "PedestrianState",
    "ObstacleSegment",
    "HalfPlaneConstraint",
    "EventKind",
    "PedestrianEvent",
    "SimulationState",
    "STACK_DEPTH",
    "StateTensor",
    "RawStep",
    "PrioritizedTransition",
]
