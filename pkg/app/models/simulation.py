"""Simulation state and per-frame events."""

import enum
from dataclasses import dataclass
from typing import Optional, Tuple

from app.models.pedestrian import PedestrianState, Vec2
from app.schemas.scenario import RoomScenario


class EventKind(str, enum.Enum):
    """What happened to a pedestrian during one frame."""
    MOVED = "moved"
    EVACUATED = "evacuated"  # crossed an open exit, now inactive
    TRUNCATED = "truncated"  # still inside when the horizon was reached


@dataclass(frozen=True, slots=True)
class PedestrianEvent:
    """Outcome of one frame for one pedestrian, with what the reward needs."""
    pedestrian_id: int
    kind: EventKind
    previous_position: Vec2
    position: Vec2
    previous_optimal_velocity: Vec2
    optimal_velocity: Vec2
    exit_index: Optional[int] = None

    @property
    def terminal(self) -> bool:
        return self.kind is EventKind.EVACUATED

    @property
    def episode_over(self) -> bool:
        return self.kind is not EventKind.MOVED


@dataclass(frozen=True)
class SimulationState:
    """Immutable world snapshot at frame ``frame``."""
    frame: int
    pedestrians: Tuple[PedestrianState, ...]
    scenario: RoomScenario
    exit_counts: Tuple[int, ...]
    horizon: int = 200

    @property
    def active(self) -> Tuple[PedestrianState, ...]:
        return tuple(p for p in self.pedestrians if p.active)

    @property
    def n_l(self) -> int:
        return self.exit_counts[0]

    @property
    def n_b(self) -> int:
        return self.exit_counts[1] if len(self.exit_counts) > 1 else 0

    @property
    def done(self) -> bool:
        return self.frame >= self.horizon or not any(p.active for p in self.pedestrians)

    def pedestrian(self, pedestrian_id: int) -> PedestrianState:
        for ped in self.pedestrians:
            if ped.id == pedestrian_id:
                return ped
        raise KeyError(pedestrian_id)
