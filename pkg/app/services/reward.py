"""
Reward Model
Per-pedestrian, per-frame reward: progress toward the nearest open exit,
alignment of the collision-free velocity with an exit direction, velocity
smoothness and a constant time penalty.
"""

import math
from dataclasses import dataclass
from typing import Sequence

from app.core.exceptions import NumericalError
from app.models.pedestrian import Vec2
from app.models.simulation import PedestrianEvent
from app.schemas.config import RewardWeights
from app.schemas.scenario import RoomScenario


@dataclass(frozen=True, slots=True)
class RewardComponents:
    goal: float
    alignment: float
    smooth: float


def _closeness(p: Vec2, exits: Sequence[Vec2], w4: float) -> float:
    return max(1.0 - math.hypot(p[0] - e[0], p[1] - e[1]) ** w4 for e in exits)


def goal_reward(p_now: Vec2, p_prev: Vec2, open_exits: Sequence[Vec2], w4: float) -> float:
    """Change of ``max_j (1 - dist_j ** w4)`` between two positions; 0 with no open exit."""
    if not open_exits:
        return 0.0
    return _closeness(p_now, open_exits, w4) - _closeness(p_prev, open_exits, w4)


def alignment_reward(opt_v: Vec2, p: Vec2, open_exits: Sequence[Vec2], v_max: float) -> float:
    """Best cosine-like agreement of ``opt_v`` with a unit exit direction, scaled by v_max."""
    if v_max <= 0:
        raise ValueError("v_max must be positive")
    best = None
    for e in open_exits:
        dx, dy = e[0] - p[0], e[1] - p[1]
        dist = math.hypot(dx, dy)
        if dist == 0.0:
            continue
        value = (opt_v[0] * dx + opt_v[1] * dy) / dist / v_max
        best = value if best is None else max(best, value)
    return 0.0 if best is None else best


def smooth_reward(opt_v_now: Vec2, opt_v_prev: Vec2) -> float:
    """Dot product of consecutive collision-free velocities (not normalized)."""
    return opt_v_now[0] * opt_v_prev[0] + opt_v_now[1] * opt_v_prev[1]


def total_reward(components: RewardComponents, weights: RewardWeights, terminal: bool) -> float:
    """Weighted sum with the time penalty subtracted on every non-terminal frame."""
    value = (
        weights.w1 * components.goal
        + weights.w2 * components.alignment
        + weights.w3 * components.smooth
    )
    if not terminal:
        value -= weights.penalty
    return value


def event_reward(
    event: PedestrianEvent,
    scenario: RoomScenario,
    frame: int,
    weights: RewardWeights,
    v_max: float,
) -> float:
    """
    Reward of one pedestrian for the frame that produced ``event``.

    Args:
        event: Outcome of the frame
        scenario: Room the pedestrian is in
        frame: Frame index the step was taken at (decides which exits are open)
        weights: Reward weights
        v_max: Maximum pedestrian speed

    Raises:
        NumericalError: The reward is not finite
    """
    exits = [e.center for e in scenario.exits if e.is_open(frame)]
    components = RewardComponents(
        goal=goal_reward(event.position, event.previous_position, exits, weights.w4),
        alignment=alignment_reward(event.optimal_velocity, event.previous_position, exits, v_max),
        smooth=smooth_reward(event.optimal_velocity, event.previous_optimal_velocity),
    )
    reward = total_reward(components, weights, event.terminal)
    if not math.isfinite(reward):
        raise NumericalError(
            "Non-finite reward",
            details={"pedestrian_id": event.pedestrian_id, "frame": frame, "components": str(components)},
        )
    return reward
