"""
Evacuation Environment
Room geometry, scenario construction, pedestrian spawning and the per-frame
world step.
"""

import math
from dataclasses import replace
from functools import lru_cache
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import ScenarioError
from app.core.logging import get_logger
from app.models.pedestrian import ObstacleSegment, PedestrianState, Vec2
from app.models.simulation import EventKind, PedestrianEvent, SimulationState
from app.schemas.config import SimulationParams
from app.schemas.scenario import (
    ExitSpec,
    RoomScenario,
    ScenarioFamily,
    ScenarioParams,
    WallSide,
)
from app.services.orca import step_velocities

logger = get_logger(__name__)

N_ACTIONS = 8

# Published variant values per family
WIDTH_RATIOS = (1.0, 1.5, 2.0)
DISTRIBUTION_RATIOS = ((1, 1), (1, 2), (1, 3))
OPEN_FRAMES = (15, 30, 45)

SPAWN_MARGIN = 0.5  # extra clearance to walls and between pedestrians
MAX_SPAWN_ATTEMPTS = 20_000


def _to_world(side: WallSide, depth: float, lateral: float, outer: float) -> Vec2:
    """Map (depth from the outer wall line, position along the wall) to ECS."""
    if side is WallSide.LEFT:
        return (depth, lateral)
    if side is WallSide.BOTTOM:
        return (lateral, depth)
    if side is WallSide.RIGHT:
        return (outer - depth, lateral)
    return (lateral, outer - depth)


def _to_local(side: WallSide, position: Vec2, outer: float) -> Tuple[float, float]:
    x, y = position
    if side is WallSide.LEFT:
        return x, y
    if side is WallSide.BOTTOM:
        return y, x
    if side is WallSide.RIGHT:
        return outer - x, y
    return outer - y, x


def exit_at(side: WallSide, width: float, side_length: float, wall_width: float,
            open_frame: int = 0) -> ExitSpec:
    """Exit centered on ``side``; its center sits on the outer wall line."""
    outer = side_length + 2.0 * wall_width
    center = _to_world(side, 0.0, wall_width + side_length / 2.0, outer)
    return ExitSpec(center=center, width=width, open_frame=open_frame, wall_side=side)


def build_scenario(
    family: ScenarioFamily | str,
    params: Optional[ScenarioParams] = None,
    seed: int = 0,
) -> RoomScenario:
    """
    Build one scenario of a family.

    Args:
        family: width_ratio, distribution_ratio or delayed_open
        params: Family parameters (defaults give the 12-pedestrian room)
        seed: Spawn seed stored on the scenario

    Returns:
        A frozen RoomScenario with Exit_l first and Exit_b second

    Raises:
        ScenarioError: Variant value outside the published set, or a
            pedestrian count that the distribution ratio cannot split
    """
    family = ScenarioFamily(family)
    params = params or ScenarioParams()
    r = params.pedestrian_radius
    w_b = params.exit_width_factor * r
    w_l = w_b
    distribution = (1, 1)
    open_l = 0

    if family is ScenarioFamily.WIDTH_RATIO:
        if not any(math.isclose(params.width_ratio, v) for v in WIDTH_RATIOS):
            raise ScenarioError(
                f"width ratio {params.width_ratio} not in {WIDTH_RATIOS}",
                details={"family": family.value},
            )
        w_l = params.width_ratio * w_b
    elif family is ScenarioFamily.DISTRIBUTION_RATIO:
        if tuple(params.distribution_ratio) not in DISTRIBUTION_RATIOS:
            raise ScenarioError(
                f"distribution ratio {params.distribution_ratio} not in {DISTRIBUTION_RATIOS}",
                details={"family": family.value},
            )
        distribution = tuple(params.distribution_ratio)
    else:
        if params.open_frame not in OPEN_FRAMES:
            raise ScenarioError(
                f"open frame {params.open_frame} not in {OPEN_FRAMES}",
                details={"family": family.value},
            )
        open_l = params.open_frame

    parts = sum(distribution)
    if params.pedestrian_count % parts != 0:
        raise ScenarioError(
            f"{params.pedestrian_count} pedestrians cannot be split {distribution[0]}:{distribution[1]}",
            details={"pedestrian_count": params.pedestrian_count, "ratio": list(distribution)},
        )

    exits = (
        exit_at(WallSide.LEFT, w_l, params.side_length, params.wall_width, open_l),
        exit_at(WallSide.BOTTOM, w_b, params.side_length, params.wall_width, 0),
    )
    try:
        scenario = RoomScenario(
            family=family,
            side_length=params.side_length,
            wall_width=params.wall_width,
            exits=exits,
            pedestrian_count=params.pedestrian_count,
            pedestrian_radius=r,
            distribution_ratio=distribution,
            width_ratio=(1.0, w_l / w_b),
            seed=seed,
        )
    except ValueError as e:
        raise ScenarioError("Scenario geometry is invalid", details={"error": str(e)})

    logger.debug(
        "Scenario built",
        family=family.value,
        w_l=w_l,
        w_b=w_b,
        pedestrians=params.pedestrian_count,
        seed=seed,
    )
    return scenario


def scenario_label(scenario: RoomScenario) -> str:
    """Short human label such as ``width_ratio[1:1.5]``."""
    if scenario.family is ScenarioFamily.WIDTH_RATIO:
        variant = f"1:{scenario.width_ratio[1] / scenario.width_ratio[0]:g}"
    elif scenario.family is ScenarioFamily.DISTRIBUTION_RATIO:
        variant = f"{scenario.distribution_ratio[0]}:{scenario.distribution_ratio[1]}"
    else:
        variant = f"open{scenario.exits[0].open_frame}"
    return f"{scenario.family.value}[{variant}]m{scenario.pedestrian_count}"


def nearest_exit_index(position: Vec2, exits: Sequence[ExitSpec]) -> int:
    """Index of the closest exit center; ties go to the lower index."""
    best, best_dist = 0, math.inf
    for index, exit_spec in enumerate(exits):
        dist = math.hypot(position[0] - exit_spec.center[0], position[1] - exit_spec.center[1])
        if dist < best_dist:
            best, best_dist = index, dist
    return best


def spawn_pedestrians(
    scenario: RoomScenario,
    max_speed: float = 2.5,
) -> Tuple[PedestrianState, ...]:
    """
    Rejection-sample non-overlapping pedestrians.

    Each group spawns in the region nearest its exit, with group sizes
    following the distribution ratio. Ids run through the Exit_l group first.
    """
    rng = np.random.default_rng(scenario.seed)
    r = scenario.pedestrian_radius
    lo, hi = scenario.interior_bounds
    lo, hi = lo + r + SPAWN_MARGIN, hi - r - SPAWN_MARGIN
    if lo >= hi:
        raise ScenarioError("Room too small for its pedestrians")
    spacing_sq = (2.0 * r + SPAWN_MARGIN) ** 2

    parts = sum(scenario.distribution_ratio)
    per_part = scenario.pedestrian_count // parts
    group_sizes = [part * per_part for part in scenario.distribution_ratio]
    # single-exit rooms put everyone in one group
    group_sizes = group_sizes[: len(scenario.exits)]
    group_sizes[-1] += scenario.pedestrian_count - sum(group_sizes)

    placed: List[Vec2] = []
    for group, size in enumerate(group_sizes):
        for _ in range(size):
            for _attempt in range(MAX_SPAWN_ATTEMPTS):
                x, y = rng.uniform(lo, hi, size=2)
                candidate = (float(x), float(y))
                if nearest_exit_index(candidate, scenario.exits) != group:
                    continue
                if all(
                    (candidate[0] - p[0]) ** 2 + (candidate[1] - p[1]) ** 2 >= spacing_sq
                    for p in placed
                ):
                    placed.append(candidate)
                    break
            else:
                raise ScenarioError(
                    "Could not place pedestrians without overlap",
                    details={"placed": len(placed), "requested": scenario.pedestrian_count},
                )

    return tuple(
        PedestrianState(id=i, position=pos, radius=r, max_speed=max_speed)
        for i, pos in enumerate(placed)
    )


@lru_cache(maxsize=256)
def _room_segments(scenario: RoomScenario, open_mask: Tuple[bool, ...]) -> Tuple[ObstacleSegment, ...]:
    w, side, outer = scenario.wall_width, scenario.side_length, scenario.outer_size
    lo, hi = w, w + side
    room_center = (outer / 2.0, outer / 2.0)
    segments: List[ObstacleSegment] = []

    def oriented(a: Vec2, b: Vec2, free: Vec2) -> ObstacleSegment:
        cross = (b[0] - a[0]) * (free[1] - a[1]) - (b[1] - a[1]) * (free[0] - a[0])
        return ObstacleSegment(a, b, ccw=True) if cross > 0 else ObstacleSegment(b, a, ccw=True)

    for wall in WallSide:
        gaps = sorted(
            exit_spec.lateral_span
            for exit_spec, is_open in zip(scenario.exits, open_mask)
            if is_open and exit_spec.wall_side is wall
        )
        start = lo
        for g0, g1 in gaps:
            if g0 - start > 1e-12:
                segments.append(oriented(
                    _to_world(wall, w, start, outer), _to_world(wall, w, g0, outer), room_center
                ))
            mid = (g0 + g1) / 2.0
            for jamb in (g0, g1):
                free = _to_world(wall, w / 2.0, mid, outer)
                segments.append(oriented(
                    _to_world(wall, 0.0, jamb, outer), _to_world(wall, w, jamb, outer), free
                ))
            start = g1
        if hi - start > 1e-12:
            segments.append(oriented(
                _to_world(wall, w, start, outer), _to_world(wall, w, hi, outer), room_center
            ))
    return tuple(segments)


def room_obstacles(scenario: RoomScenario, frame: int) -> Tuple[ObstacleSegment, ...]:
    """Wall segments at ``frame``: inner faces minus open gaps, plus gap jambs."""
    open_mask = tuple(exit_spec.is_open(frame) for exit_spec in scenario.exits)
    return _room_segments(scenario, open_mask)


def apply_action(ped: PedestrianState, action: int) -> Vec2:
    """Preferred velocity for direction ``action``: k * 45 degrees from +x at full speed."""
    if not isinstance(action, (int, np.integer)) or not 0 <= action < N_ACTIONS:
        raise ValueError(f"action {action!r} outside [0, {N_ACTIONS - 1}]")
    if not ped.active:
        raise ValueError(f"pedestrian {ped.id} is inactive")
    angle = int(action) * math.pi / 4.0
    return (math.cos(angle) * ped.max_speed, math.sin(angle) * ped.max_speed)


def action_direction(action: int) -> Vec2:
    angle = action * math.pi / 4.0
    return (math.cos(angle), math.sin(angle))


def is_evacuated(ped: PedestrianState, exit_spec: ExitSpec, frame: int, outer_size: float) -> bool:
    """Center on or past the exit's outer wall line, inside the gap, exit open."""
    if not exit_spec.is_open(frame):
        return False
    depth, lateral = _to_local(exit_spec.wall_side, ped.position, outer_size)
    g0, g1 = exit_spec.lateral_span
    return depth <= 0.0 and g0 <= lateral <= g1


def open_exits(scenario: RoomScenario, frame: int) -> List[Tuple[int, ExitSpec]]:
    return [(i, e) for i, e in enumerate(scenario.exits) if e.is_open(frame)]


def initial_state(
    scenario: RoomScenario,
    params: Optional[SimulationParams] = None,
    horizon: int = 200,
) -> SimulationState:
    params = params or SimulationParams()
    return SimulationState(
        frame=0,
        pedestrians=spawn_pedestrians(scenario, params.max_speed),
        scenario=scenario,
        exit_counts=(0,) * len(scenario.exits),
        horizon=horizon,
    )


def world_step(
    state: SimulationState,
    actions: Mapping[int, int],
    params: Optional[SimulationParams] = None,
) -> Tuple[SimulationState, List[PedestrianEvent]]:
    """
    Advance the world by one frame.

    Args:
        state: Current snapshot (not mutated)
        actions: Action index for every active pedestrian id
        params: Kinematics and avoidance settings

    Returns:
        (next state, one event per pedestrian active at the start of the frame)
    """
    params = params or SimulationParams()
    if state.frame >= state.horizon:
        raise ValueError(f"frame {state.frame} already at horizon {state.horizon}")

    scenario = state.scenario
    frame = state.frame
    with_preferred: List[PedestrianState] = []
    for ped in state.pedestrians:
        if not ped.active:
            with_preferred.append(ped)
            continue
        if ped.id not in actions:
            raise ValueError(f"no action for active pedestrian {ped.id}")
        with_preferred.append(replace(ped, preferred_velocity=apply_action(ped, actions[ped.id])))

    solved = step_velocities(with_preferred, room_obstacles(scenario, frame), params)

    counts = list(state.exit_counts)
    next_frame = frame + 1
    truncating = next_frame >= state.horizon
    moved: List[PedestrianState] = []
    events: List[PedestrianEvent] = []
    for before, ped in zip(state.pedestrians, solved):
        if not ped.active:
            moved.append(ped)
            continue
        vx, vy = ped.optimal_velocity
        position = (
            ped.position[0] + vx * params.time_step,
            ped.position[1] + vy * params.time_step,
        )
        ped = replace(ped, position=position, velocity=ped.optimal_velocity)

        exit_index: Optional[int] = None
        for index, exit_spec in enumerate(scenario.exits):
            if is_evacuated(ped, exit_spec, frame, scenario.outer_size):
                exit_index = index
                break

        if exit_index is not None:
            counts[exit_index] += 1
            ped = replace(ped, active=False)
            kind = EventKind.EVACUATED
        elif truncating:
            kind = EventKind.TRUNCATED
        else:
            kind = EventKind.MOVED

        events.append(PedestrianEvent(
            pedestrian_id=ped.id,
            kind=kind,
            previous_position=before.position,
            position=position,
            previous_optimal_velocity=before.optimal_velocity,
            optimal_velocity=ped.optimal_velocity,
            exit_index=exit_index,
        ))
        moved.append(ped)

    next_state = SimulationState(
        frame=next_frame,
        pedestrians=tuple(moved),
        scenario=scenario,
        exit_counts=tuple(counts),
        horizon=state.horizon,
    )
    return next_state, events


class EvacuationEnvironment:
    """
    Stateful wrapper around ``world_step`` for one scenario.
    Keeps the current snapshot and the run's event history.
    """

    def __init__(
        self,
        scenario: RoomScenario,
        params: Optional[SimulationParams] = None,
        horizon: int = 200,
    ):
        self.scenario = scenario
        self.params = params or SimulationParams()
        self.horizon = horizon
        self.state = initial_state(scenario, self.params, horizon)

    def reset(self) -> SimulationState:
        self.state = initial_state(self.scenario, self.params, self.horizon)
        return self.state

    @property
    def done(self) -> bool:
        return self.state.done

    def step(self, actions: Dict[int, int]) -> List[PedestrianEvent]:
        self.state, events = world_step(self.state, actions, self.params)
        for event in events:
            if event.kind is EventKind.EVACUATED:
                logger.debug(
                    "Pedestrian evacuated",
                    pedestrian_id=event.pedestrian_id,
                    exit_index=event.exit_index,
                    frame=self.state.frame,
                )
        return events
