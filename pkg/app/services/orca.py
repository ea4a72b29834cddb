"""
ORCA Collision Avoidance
Reciprocal velocity-obstacle half-planes and the 2D linear program that picks
the collision-free velocity closest to each pedestrian's preferred one.

Everything here is a pure function of one immutable snapshot. Vectors are
plain float tuples; numpy is only used for the neighbor search.
"""

import math
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.models.pedestrian import HalfPlaneConstraint, ObstacleSegment, PedestrianState, Vec2
from app.schemas.config import SimulationParams

EPSILON = 1e-9

# Internal line form: (point, direction); feasible side is left of direction.
_Line = Tuple[Vec2, Vec2]


def _det(a: Vec2, b: Vec2) -> float:
    return a[0] * b[1] - a[1] * b[0]


def _dot(a: Vec2, b: Vec2) -> float:
    return a[0] * b[0] + a[1] * b[1]


def _normalize(v: Vec2) -> Vec2:
    length = math.hypot(v[0], v[1])
    return (v[0] / length, v[1] / length)


def _to_line(constraint: HalfPlaneConstraint) -> _Line:
    return constraint.point, constraint.direction


def _from_direction(point: Vec2, direction: Vec2) -> HalfPlaneConstraint:
    return HalfPlaneConstraint(point=point, normal=(-direction[1], direction[0]))


def _closest_point_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2:
    ab = (b[0] - a[0], b[1] - a[1])
    t = _dot((p[0] - a[0], p[1] - a[1]), ab) / _dot(ab, ab)
    t = min(max(t, 0.0), 1.0)
    return (a[0] + t * ab[0], a[1] + t * ab[1])


def obstacle_constraint(
    subject: PedestrianState,
    segment: ObstacleSegment,
    obstacle_horizon: float,
    time_step: float = 1.0,
) -> Optional[HalfPlaneConstraint]:
    """Half-plane keeping ``subject`` off one wall segment.

    Returns None when the segment cannot be reached within the horizon.
    """
    px, py = subject.position
    cx, cy = _closest_point_on_segment(subject.position, segment.endpoint_a, segment.endpoint_b)
    dx, dy = px - cx, py - cy
    dist = math.hypot(dx, dy)
    if dist > obstacle_horizon * subject.max_speed + subject.radius:
        return None

    normal = (dx / dist, dy / dist) if dist > EPSILON else segment.free_normal
    if dist > subject.radius:
        # approach speed toward the wall limited to the gap over the horizon
        slack = (dist - subject.radius) / obstacle_horizon
        point = (-normal[0] * slack, -normal[1] * slack)
    else:
        push = (subject.radius - dist) / time_step
        point = (normal[0] * push, normal[1] * push)
    return HalfPlaneConstraint(point=point, normal=normal)


def agent_constraint(
    subject: PedestrianState,
    other: PedestrianState,
    time_horizon: float,
    time_step: float = 1.0,
) -> HalfPlaneConstraint:
    """Reciprocal half-plane: ``subject`` takes half of the needed correction."""
    rel_pos = (other.position[0] - subject.position[0], other.position[1] - subject.position[1])
    rel_vel = (subject.velocity[0] - other.velocity[0], subject.velocity[1] - other.velocity[1])
    dist_sq = _dot(rel_pos, rel_pos)
    combined_radius = subject.radius + other.radius
    combined_radius_sq = combined_radius * combined_radius

    if dist_sq > combined_radius_sq:
        inv_tau = 1.0 / time_horizon
        w = (rel_vel[0] - inv_tau * rel_pos[0], rel_vel[1] - inv_tau * rel_pos[1])
        w_length_sq = _dot(w, w)
        dot_product = _dot(w, rel_pos)

        if dot_product < 0.0 and dot_product * dot_product > combined_radius_sq * w_length_sq:
            # project on the cutoff circle
            w_length = math.sqrt(w_length_sq)
            unit_w = (w[0] / w_length, w[1] / w_length)
            direction = (unit_w[1], -unit_w[0])
            scale = combined_radius * inv_tau - w_length
            u = (scale * unit_w[0], scale * unit_w[1])
        else:
            # project on a leg
            leg = math.sqrt(dist_sq - combined_radius_sq)
            if _det(rel_pos, w) > 0.0:
                direction = (
                    (rel_pos[0] * leg - rel_pos[1] * combined_radius) / dist_sq,
                    (rel_pos[0] * combined_radius + rel_pos[1] * leg) / dist_sq,
                )
            else:
                direction = (
                    -(rel_pos[0] * leg + rel_pos[1] * combined_radius) / dist_sq,
                    -(-rel_pos[0] * combined_radius + rel_pos[1] * leg) / dist_sq,
                )
            along = _dot(rel_vel, direction)
            u = (along * direction[0] - rel_vel[0], along * direction[1] - rel_vel[1])
    else:
        # overlapping: resolve within one time step
        inv_dt = 1.0 / time_step
        w = (rel_vel[0] - inv_dt * rel_pos[0], rel_vel[1] - inv_dt * rel_pos[1])
        w_length = math.hypot(w[0], w[1])
        if w_length > EPSILON:
            unit_w = (w[0] / w_length, w[1] / w_length)
        elif dist_sq > EPSILON * EPSILON:
            unit_w = _normalize((-rel_pos[0], -rel_pos[1]))
        else:
            unit_w = (-1.0, 0.0) if subject.id > other.id else (1.0, 0.0)
        direction = (unit_w[1], -unit_w[0])
        scale = combined_radius * inv_dt - w_length
        u = (scale * unit_w[0], scale * unit_w[1])

    point = (subject.velocity[0] + 0.5 * u[0], subject.velocity[1] + 0.5 * u[1])
    return _from_direction(point, direction)


def contact_constraint(
    subject: PedestrianState,
    other: PedestrianState,
    time_step: float = 1.0,
) -> HalfPlaneConstraint:
    """Half-plane letting ``subject`` close at most half of the gap to ``other`` in one frame.

    Both sides of a pair holding their contact constraint cannot end the
    frame overlapping.
    """
    dx = other.position[0] - subject.position[0]
    dy = other.position[1] - subject.position[1]
    dist = math.hypot(dx, dy)
    if dist > EPSILON:
        n = (dx / dist, dy / dist)
    else:
        n = (1.0, 0.0) if subject.id < other.id else (-1.0, 0.0)
    limit = 0.5 * (dist - subject.radius - other.radius) / time_step
    # v . n <= limit
    return HalfPlaneConstraint(point=(n[0] * limit, n[1] * limit), normal=(-n[0], -n[1]))


def compute_constraints(
    subject: PedestrianState,
    neighbors: Sequence[PedestrianState],
    obstacles: Sequence[ObstacleSegment],
    time_horizon: float,
    obstacle_horizon: float,
    time_step: float = 1.0,
    neighbor_distance: Optional[float] = None,
) -> List[HalfPlaneConstraint]:
    """
    Build the velocity constraints of one pedestrian.

    Obstacle constraints come first, then one constraint per neighbor in
    ascending id. Neighbors farther than ``neighbor_distance`` are skipped.

    Args:
        subject: Active pedestrian being solved
        neighbors: Other pedestrians (must not contain ``subject``)
        obstacles: Wall segments of the room
        time_horizon: Agent look-ahead in frames
        obstacle_horizon: Wall look-ahead in frames
        time_step: Frame duration used by the overlap branch
        neighbor_distance: Optional cutoff on center distance

    Returns:
        Half-planes; obstacles first
    """
    if not subject.active:
        raise ValueError(f"pedestrian {subject.id} is inactive")
    if time_horizon <= 0 or obstacle_horizon <= 0:
        raise ValueError("horizons must be positive")

    constraints: List[HalfPlaneConstraint] = []
    for segment in obstacles:
        constraint = obstacle_constraint(subject, segment, obstacle_horizon, time_step)
        if constraint is not None:
            constraints.append(constraint)

    cutoff_sq = None if neighbor_distance is None else neighbor_distance * neighbor_distance
    for other in sorted(neighbors, key=lambda p: p.id):
        if other.id == subject.id:
            raise ValueError("neighbors must exclude the subject")
        if not other.active:
            continue
        if cutoff_sq is not None:
            dx = other.position[0] - subject.position[0]
            dy = other.position[1] - subject.position[1]
            if dx * dx + dy * dy > cutoff_sq:
                continue
        constraints.append(agent_constraint(subject, other, time_horizon, time_step))
    return constraints


def _linear_program1(
    lines: Sequence[_Line],
    line_no: int,
    radius: float,
    opt_velocity: Vec2,
    direction_opt: bool,
) -> Optional[Vec2]:
    point, direction = lines[line_no]
    dot_product = _dot(point, direction)
    discriminant = dot_product * dot_product + radius * radius - _dot(point, point)
    if discriminant < 0.0:
        # speed disc misses this line
        return None

    sqrt_discriminant = math.sqrt(discriminant)
    t_left = -dot_product - sqrt_discriminant
    t_right = -dot_product + sqrt_discriminant

    for i in range(line_no):
        other_point, other_direction = lines[i]
        denominator = _det(direction, other_direction)
        numerator = _det(other_direction, (point[0] - other_point[0], point[1] - other_point[1]))
        if abs(denominator) <= EPSILON:
            if numerator < 0.0:
                return None
            continue
        t = numerator / denominator
        if denominator >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return None

    if direction_opt:
        t = t_right if _dot(opt_velocity, direction) > 0.0 else t_left
    else:
        t = _dot(direction, (opt_velocity[0] - point[0], opt_velocity[1] - point[1]))
        t = min(max(t, t_left), t_right)
    return (point[0] + t * direction[0], point[1] + t * direction[1])


def _linear_program2(
    lines: Sequence[_Line],
    radius: float,
    opt_velocity: Vec2,
    direction_opt: bool,
) -> Tuple[int, Vec2]:
    if direction_opt:
        result = (opt_velocity[0] * radius, opt_velocity[1] * radius)
    elif _dot(opt_velocity, opt_velocity) > radius * radius:
        unit = _normalize(opt_velocity)
        result = (unit[0] * radius, unit[1] * radius)
    else:
        result = opt_velocity

    for i, (point, direction) in enumerate(lines):
        if _det(direction, (point[0] - result[0], point[1] - result[1])) > 0.0:
            candidate = _linear_program1(lines, i, radius, opt_velocity, direction_opt)
            if candidate is None:
                return i, result
            result = candidate
    return len(lines), result


def _linear_program3(
    lines: Sequence[_Line],
    num_hard: int,
    begin_line: int,
    radius: float,
    result: Vec2,
) -> Vec2:
    # minimize the largest violation of the soft lines, keeping the hard ones
    distance = 0.0
    for i in range(begin_line, len(lines)):
        point_i, direction_i = lines[i]
        if _det(direction_i, (point_i[0] - result[0], point_i[1] - result[1])) > distance:
            projected: List[_Line] = list(lines[:num_hard])
            for j in range(num_hard, i):
                point_j, direction_j = lines[j]
                determinant = _det(direction_i, direction_j)
                if abs(determinant) <= EPSILON:
                    if _dot(direction_i, direction_j) > 0.0:
                        continue
                    new_point = (
                        0.5 * (point_i[0] + point_j[0]),
                        0.5 * (point_i[1] + point_j[1]),
                    )
                else:
                    t = (
                        _det(direction_j, (point_i[0] - point_j[0], point_i[1] - point_j[1]))
                        / determinant
                    )
                    new_point = (point_i[0] + t * direction_i[0], point_i[1] + t * direction_i[1])
                new_direction = _normalize(
                    (direction_j[0] - direction_i[0], direction_j[1] - direction_i[1])
                )
                projected.append((new_point, new_direction))

            fail, candidate = _linear_program2(
                projected, radius, (-direction_i[1], direction_i[0]), True
            )
            if fail >= len(projected):
                result = candidate
            distance = _det(direction_i, (point_i[0] - result[0], point_i[1] - result[1]))
    return result


def solve_velocity(
    constraints: Sequence[HalfPlaneConstraint],
    preferred: Vec2,
    max_speed: float,
    num_hard: int = 0,
) -> Vec2:
    """
    Velocity closest to ``preferred`` inside every half-plane and the speed disc.

    When the constraints are infeasible, the velocity minimizing the largest
    violation is returned; the first ``num_hard`` constraints are kept exact
    in that fallback. If the hard constraints alone are infeasible, the
    largest violation among them is minimized and the rest are ignored.
    """
    if max_speed <= 0:
        raise ValueError("max_speed must be positive")
    lines = [_to_line(c) for c in constraints]
    fail, result = _linear_program2(lines, max_speed, preferred, False)
    if fail < num_hard:
        result = _linear_program3(lines[:num_hard], 0, fail, max_speed, result)
    elif fail < len(lines):
        result = _linear_program3(lines, num_hard, fail, max_speed, result)

    speed = math.hypot(result[0], result[1])
    if speed > max_speed:
        result = (result[0] * max_speed / speed, result[1] * max_speed / speed)
    return result


def _pairwise_distances(active: Sequence[PedestrianState]) -> np.ndarray:
    positions = np.array([p.position for p in active], dtype=np.float64)
    deltas = positions[:, None, :] - positions[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", deltas, deltas))


def nearest_neighbors(
    pedestrians: Sequence[PedestrianState],
    neighbor_distance_factor: float,
    max_neighbors: int,
) -> Dict[int, List[PedestrianState]]:
    """Up to ``max_neighbors`` nearest active pedestrians within range of each active one."""
    active = [p for p in pedestrians if p.active]
    result: Dict[int, List[PedestrianState]] = {p.id: [] for p in active}
    if len(active) < 2 or max_neighbors == 0:
        return result

    ids = np.array([p.id for p in active])
    distances = _pairwise_distances(active)

    for row, subject in enumerate(active):
        cutoff = neighbor_distance_factor * subject.radius
        # nearest first, ties by id
        order = np.lexsort((ids, distances[row]))
        chosen = [
            active[col]
            for col in order
            if col != row and distances[row, col] <= cutoff
        ][:max_neighbors]
        result[subject.id] = chosen
    return result


def contact_neighbors(
    pedestrians: Sequence[PedestrianState],
    time_step: float = 1.0,
) -> Dict[int, List[PedestrianState]]:
    """Every active pedestrian each active one could touch within one frame, by ascending id.

    Not capped by ``max_neighbors``; the relation is symmetric.
    """
    active = sorted((p for p in pedestrians if p.active), key=lambda p: p.id)
    result: Dict[int, List[PedestrianState]] = {p.id: [] for p in active}
    if len(active) < 2:
        return result

    distances = _pairwise_distances(active)
    radii = np.array([p.radius for p in active])
    speeds = np.array([p.max_speed for p in active])
    reach = radii[:, None] + radii[None, :] + (speeds[:, None] + speeds[None, :]) * time_step
    within = distances <= reach
    np.fill_diagonal(within, False)
    for row, subject in enumerate(active):
        result[subject.id] = [active[col] for col in np.flatnonzero(within[row])]
    return result


def step_velocities(
    pedestrians: Sequence[PedestrianState],
    obstacles: Sequence[ObstacleSegment],
    params: SimulationParams,
) -> Tuple[PedestrianState, ...]:
    """
    Solve every active pedestrian against the same snapshot.

    Wall constraints and contact constraints are hard; the reciprocal
    neighbor constraints are relaxed first when the program is infeasible.

    Returns:
        The pedestrians with ``optimal_velocity`` set for active ones;
        inactive ones are returned unchanged
    """
    neighbors = nearest_neighbors(pedestrians, params.neighbor_distance_factor, params.max_neighbors)
    contacts = contact_neighbors(pedestrians, params.time_step)
    updated: List[PedestrianState] = []
    for ped in pedestrians:
        if not ped.active:
            updated.append(ped)
            continue
        constraints = compute_constraints(
            ped,
            neighbors[ped.id],
            obstacles,
            time_horizon=params.time_horizon,
            obstacle_horizon=params.obstacle_horizon,
            time_step=params.time_step,
        )
        num_walls = len(constraints) - len(neighbors[ped.id])
        hard = constraints[:num_walls] + [
            contact_constraint(ped, other, params.time_step) for other in contacts[ped.id]
        ]
        optimal = solve_velocity(
            hard + constraints[num_walls:], ped.preferred_velocity, ped.max_speed, len(hard)
        )
        updated.append(replace(ped, optimal_velocity=optimal))
    return tuple(updated)
