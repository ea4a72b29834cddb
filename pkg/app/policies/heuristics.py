"""
Stand-in Baseline Policies
Simple exit-choice heuristics used as comparison points. They are labelled
stand-ins and do not reproduce any published model.
"""

import math
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.core.exceptions import PolicyError
from app.models.pedestrian import PedestrianState, Vec2
from app.models.simulation import SimulationState
from app.policies.base import BasePolicy
from app.schemas.report import PolicyHandle, PolicyKind
from app.services.environment import N_ACTIONS, action_direction, open_exits

DEFAULT_WIDTH_WEIGHT = 2.0
DEFAULT_CROWD_WEIGHT = 1.0


def _distance(a: Vec2, b: Vec2) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def direction_action(position: Vec2, goal: Vec2) -> int:
    """The direction index best aligned with ``goal - position``; ties to the lower index."""
    dx, dy = goal[0] - position[0], goal[1] - position[1]
    best, best_score = 0, -math.inf
    for action in range(N_ACTIONS):
        ux, uy = action_direction(action)
        score = ux * dx + uy * dy
        if score > best_score + 1e-12:
            best, best_score = action, score
    return best


def _candidate_exits(state: SimulationState) -> List[Tuple[int, Vec2, float]]:
    exits = open_exits(state.scenario, state.frame)
    if not exits:
        exits = list(enumerate(state.scenario.exits))
    return [(index, spec.center, spec.width) for index, spec in exits]


def nearest_exit_choice(ped: PedestrianState, state: SimulationState) -> int:
    """Index of the nearest open exit (all exits if none is open)."""
    best, best_dist = -1, math.inf
    for index, center, _ in _candidate_exits(state):
        dist = _distance(ped.position, center)
        if dist < best_dist:
            best, best_dist = index, dist
    return best


def multi_factor_choice(
    ped: PedestrianState,
    state: SimulationState,
    width_weight: float = DEFAULT_WIDTH_WEIGHT,
    crowd_weight: float = DEFAULT_CROWD_WEIGHT,
) -> int:
    """Exit minimizing distance - width_weight * width + crowd_weight * (pedestrians nearer it)."""
    others = [p for p in state.pedestrians if p.active and p.id != ped.id]
    best, best_score = -1, math.inf
    for index, center, width in _candidate_exits(state):
        dist = _distance(ped.position, center)
        crowd = sum(1 for p in others if _distance(p.position, center) < dist)
        score = dist - width_weight * width + crowd_weight * crowd
        if score < best_score:
            best, best_score = index, score
    return best


def baseline_action(
    handle: PolicyHandle,
    ped: PedestrianState,
    state: SimulationState,
    rng: Optional[np.random.Generator] = None,
) -> int:
    """Action of one pedestrian under a stand-in baseline."""
    if handle.kind is PolicyKind.NEAREST_EXIT:
        exit_index = nearest_exit_choice(ped, state)
    elif handle.kind is PolicyKind.MULTI_FACTOR:
        exit_index = multi_factor_choice(
            ped,
            state,
            width_weight=float(handle.params.get("width_weight", DEFAULT_WIDTH_WEIGHT)),
            crowd_weight=float(handle.params.get("crowd_weight", DEFAULT_CROWD_WEIGHT)),
        )
    elif handle.kind is PolicyKind.UNIFORM_RANDOM:
        if rng is None:
            raise PolicyError("uniform_random needs a random generator", kind=handle.kind.value)
        return int(rng.integers(0, N_ACTIONS))
    else:
        raise PolicyError(f"'{handle.kind.value}' is not a baseline", kind=handle.kind.value)
    return direction_action(ped.position, state.scenario.exits[exit_index].center)


class _HeuristicPolicy(BasePolicy):
    kind: PolicyKind

    def __init__(self, handle: PolicyHandle):
        super().__init__(handle)
        self._rng: Optional[np.random.Generator] = None

    @property
    def policy_name(self) -> str:
        return self.kind.value

    def act(self, state: SimulationState) -> Dict[int, int]:
        return {
            ped.id: baseline_action(self.handle, ped, state, self._rng)
            for ped in state.pedestrians
            if ped.active
        }


class NearestExitPolicy(_HeuristicPolicy):
    """Walk straight toward the closest open exit."""
    kind = PolicyKind.NEAREST_EXIT


class MultiFactorPolicy(_HeuristicPolicy):
    """Trade distance against exit width and the crowd ahead."""
    kind = PolicyKind.MULTI_FACTOR


class UniformRandomPolicy(_HeuristicPolicy):
    """Uniformly random direction every frame."""
    kind = PolicyKind.UNIFORM_RANDOM

    def reset(self, seed: int) -> None:
        self._rng = np.random.default_rng(seed)

    def act(self, state: SimulationState) -> Dict[int, int]:
        if self._rng is None:
            self.reset(0)
        return super().act(state)
