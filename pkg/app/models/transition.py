"""Replay transitions."""

from dataclasses import dataclass
from typing import Optional

from app.models.observation import StateTensor


@dataclass(frozen=True, slots=True)
class RawStep:
    """Single-frame experience of one pedestrian before n-step folding."""
    state: StateTensor
    action: int
    reward: float
    next_state: StateTensor
    done: bool


@dataclass(slots=True)
class PrioritizedTransition:
    """n-step transition; ``next_state`` is ignored in targets when ``done``."""
    state: StateTensor
    action: int
    n_step_reward: float
    discount_power: float
    next_state: Optional[StateTensor]
    done: bool
    priority: float = 1.0

    def __post_init__(self) -> None:
        if self.priority <= 0:
            raise ValueError("transition priority must be positive")
