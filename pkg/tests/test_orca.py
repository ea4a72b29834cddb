"""
Tests for ORCA collision avoidance
"""

import math
from dataclasses import replace

import numpy as np
import pytest

from app.models.pedestrian import HalfPlaneConstraint, ObstacleSegment, PedestrianState
from app.schemas.config import SimulationParams
from app.services.orca import (
    agent_constraint,
    compute_constraints,
    contact_constraint,
    contact_neighbors,
    nearest_neighbors,
    obstacle_constraint,
    solve_velocity,
    step_velocities,
)


def _advance(pedestrians):
    """Move every pedestrian by its solved velocity for one frame."""
    return tuple(
        replace(
            p,
            position=(p.position[0] + p.optimal_velocity[0], p.position[1] + p.optimal_velocity[1]),
            velocity=p.optimal_velocity,
        )
        for p in pedestrians
    )


def _min_pair_distance(pedestrians) -> float:
    positions = np.array([p.position for p in pedestrians])
    deltas = positions[:, None, :] - positions[None, :, :]
    distances = np.sqrt((deltas**2).sum(axis=-1))
    np.fill_diagonal(distances, np.inf)
    return float(distances.min())


def _min_wall_clearance(pedestrians, segments) -> float:
    clearance = math.inf
    for p in pedestrians:
        point = np.array(p.position)
        for segment in segments:
            a, b = np.array(segment.endpoint_a), np.array(segment.endpoint_b)
            t = np.clip(np.dot(point - a, b - a) / np.dot(b - a, b - a), 0.0, 1.0)
            clearance = min(clearance, float(np.linalg.norm(point - (a + t * (b - a)))))
    return clearance


def _box(side: float):
    """Closed square room [0, side]^2, free space inside."""
    corners = [(0.0, 0.0), (side, 0.0), (side, side), (0.0, side)]
    return [ObstacleSegment(corners[i], corners[(i + 1) % 4]) for i in range(4)]


def _toward(pedestrians, goal):
    """Full-speed preferred velocities toward ``goal``."""
    result = []
    for p in pedestrians:
        dx, dy = goal[0] - p.position[0], goal[1] - p.position[1]
        dist = math.hypot(dx, dy)
        scale = p.max_speed / dist if dist > 1e-9 else 0.0
        result.append(replace(p, preferred_velocity=(dx * scale, dy * scale)))
    return result


class TestSolveVelocity:
    """Test suite for the 2D linear program."""

    def test_unconstrained_inside_disc(self):
        assert solve_velocity([], (1.0, 0.0), 2.0) == (1.0, 0.0)

    def test_unconstrained_projects_to_disc(self):
        vx, vy = solve_velocity([], (5.0, 0.0), 2.0)
        assert vx == pytest.approx(2.0)
        assert vy == pytest.approx(0.0)

    def test_single_half_plane_projection(self):
        constraint = HalfPlaneConstraint(point=(0.0, 0.0), normal=(0.0, 1.0))
        vx, vy = solve_velocity([constraint], (1.0, -1.0), 2.0)
        assert vx == pytest.approx(1.0, abs=1e-12)
        assert vy == pytest.approx(0.0, abs=1e-12)

    def test_feasible_preferred_returned_exactly(self):
        constraints = [
            HalfPlaneConstraint(point=(0.0, -1.0), normal=(0.0, 1.0)),
            HalfPlaneConstraint(point=(-1.0, 0.0), normal=(1.0, 0.0)),
        ]
        assert solve_velocity(constraints, (0.3, 0.4), 2.0) == (0.3, 0.4)

    def test_infeasible_falls_back_within_speed(self):
        """Two contradicting half-planes still yield a bounded velocity."""
        constraints = [
            HalfPlaneConstraint(point=(1.0, 0.0), normal=(1.0, 0.0)),
            HalfPlaneConstraint(point=(-1.0, 0.0), normal=(-1.0, 0.0)),
        ]
        vx, vy = solve_velocity(constraints, (0.0, 1.0), 2.0)
        assert math.hypot(vx, vy) <= 2.0 + 1e-9
        # the violation is shared evenly
        assert abs(vx) == pytest.approx(0.0, abs=1e-9)

    def test_hard_constraints_kept_when_soft_relaxed(self):
        hard = HalfPlaneConstraint(point=(0.5, 0.0), normal=(1.0, 0.0))
        soft = HalfPlaneConstraint(point=(-1.0, 0.0), normal=(-1.0, 0.0))
        vx, vy = solve_velocity([hard, soft], (-2.0, 0.0), 2.0, num_hard=1)
        assert vx == pytest.approx(0.5, abs=1e-9)
        assert math.hypot(vx, vy) <= 2.0 + 1e-9

    def test_infeasible_hard_constraints_share_violation(self):
        """Soft constraints are dropped once the hard ones contradict each other."""
        constraints = [
            HalfPlaneConstraint(point=(1.0, 0.0), normal=(1.0, 0.0)),
            HalfPlaneConstraint(point=(-1.0, 0.0), normal=(-1.0, 0.0)),
            HalfPlaneConstraint(point=(1.5, 0.0), normal=(1.0, 0.0)),
        ]
        vx, vy = solve_velocity(constraints, (0.0, 1.0), 2.0, num_hard=2)
        assert math.hypot(vx, vy) <= 2.0 + 1e-9
        assert abs(vx) == pytest.approx(0.0, abs=1e-9)

    def test_rejects_non_positive_speed(self):
        with pytest.raises(ValueError):
            solve_velocity([], (1.0, 0.0), 0.0)


class TestConstraints:
    """Test suite for constraint construction."""

    def test_no_neighbors_no_obstacles(self):
        subject = PedestrianState(id=0, position=(0.0, 0.0))
        assert compute_constraints(subject, [], [], 10.0, 5.0) == []

    def test_subject_in_neighbors_rejected(self):
        subject = PedestrianState(id=0, position=(0.0, 0.0))
        with pytest.raises(ValueError):
            compute_constraints(subject, [subject], [], 10.0, 5.0)

    def test_inactive_subject_rejected(self):
        subject = PedestrianState(id=0, position=(0.0, 0.0), active=False)
        with pytest.raises(ValueError):
            compute_constraints(subject, [], [], 10.0, 5.0)

    def test_inactive_and_distant_neighbors_skipped(self):
        subject = PedestrianState(id=0, position=(0.0, 0.0))
        gone = PedestrianState(id=1, position=(5.0, 0.0), active=False)
        far = PedestrianState(id=2, position=(100.0, 0.0))
        near = PedestrianState(id=3, position=(10.0, 0.0))
        constraints = compute_constraints(
            subject, [far, gone, near], [], 10.0, 5.0, neighbor_distance=30.0
        )
        assert len(constraints) == 1

    def test_head_on_constraints_are_point_symmetric(self):
        """Both discs dodge to the same side: B's half-plane is A's rotated by 180 degrees."""
        a = PedestrianState(id=0, position=(-10.0, 0.0), velocity=(2.5, 0.0))
        b = PedestrianState(id=1, position=(10.0, 0.0), velocity=(-2.5, 0.0))
        ca = agent_constraint(a, b, 10.0)
        cb = agent_constraint(b, a, 10.0)

        assert abs(ca.normal[1]) > 0.1
        assert math.hypot(*ca.normal) == pytest.approx(1.0, abs=1e-9)
        assert cb.normal[0] == pytest.approx(-ca.normal[0], abs=1e-12)
        assert cb.normal[1] == pytest.approx(-ca.normal[1], abs=1e-12)
        assert cb.point[0] == pytest.approx(-ca.point[0], abs=1e-12)
        assert cb.point[1] == pytest.approx(-ca.point[1], abs=1e-12)

    def test_reciprocal_half_correction(self):
        """Each side moves its velocity by exactly half the relative correction."""
        a = PedestrianState(id=0, position=(-10.0, 0.0), velocity=(0.85, 0.3))
        b = PedestrianState(id=1, position=(10.0, 0.0), velocity=(-0.85, 0.3))
        ca = agent_constraint(a, b, 10.0)
        # the relative velocity overshoots the cutoff circle by 0.1 along x
        assert ca.point[0] == pytest.approx(0.85 - 0.05)
        assert ca.point[1] == pytest.approx(0.3)
        assert ca.normal == pytest.approx((-1.0, 0.0))

    def test_overlapping_discs_push_apart(self):
        a = PedestrianState(id=0, position=(0.0, 0.0))
        b = PedestrianState(id=1, position=(3.0, 0.0))
        constraint = agent_constraint(a, b, 10.0)
        # staying still is forbidden, moving away is allowed
        assert constraint.violation((0.0, 0.0)) > 0
        assert constraint.violation((-1.0, 0.0)) <= 0

    def test_wall_constraint_matches_time_to_collision(self):
        """Velocities reaching the wall within the obstacle horizon are forbidden."""
        wall = ObstacleSegment((-100.0, 0.0), (100.0, 0.0))
        subject = PedestrianState(id=0, position=(5.0, 3.0), preferred_velocity=(2.5, 0.0))
        constraint = obstacle_constraint(subject, wall, obstacle_horizon=5.0)

        assert constraint.normal == pytest.approx((0.0, 1.0))
        for vx in np.linspace(-2.5, 2.5, 11):
            for vy in np.linspace(-2.45, 2.45, 15):
                y_at_horizon = 3.0 + vy * 5.0
                collides = y_at_horizon < subject.radius
                assert (constraint.violation((vx, vy)) > 0) == collides

        # parallel motion is untouched
        assert solve_velocity([constraint], (2.5, 0.0), 2.5) == (2.5, 0.0)

    def test_wall_out_of_range_ignored(self):
        wall = ObstacleSegment((-100.0, 0.0), (100.0, 0.0))
        subject = PedestrianState(id=0, position=(0.0, 50.0))
        assert obstacle_constraint(subject, wall, obstacle_horizon=5.0) is None


class TestNeighbors:
    """Test suite for the neighbor search."""

    def test_nearest_first_and_capped(self):
        peds = [PedestrianState(id=i, position=(float(i) * 5.0, 0.0)) for i in range(6)]
        neighbors = nearest_neighbors(peds, neighbor_distance_factor=15.0, max_neighbors=2)
        assert [p.id for p in neighbors[0]] == [1, 2]
        assert [p.id for p in neighbors[3]] == [2, 4]

    def test_ties_broken_by_id(self):
        peds = [
            PedestrianState(id=0, position=(0.0, 0.0)),
            PedestrianState(id=2, position=(-5.0, 0.0)),
            PedestrianState(id=1, position=(5.0, 0.0)),
        ]
        neighbors = nearest_neighbors(peds, 15.0, 10)
        assert [p.id for p in neighbors[0]] == [1, 2]

    def test_inactive_excluded(self):
        peds = [
            PedestrianState(id=0, position=(0.0, 0.0)),
            PedestrianState(id=1, position=(5.0, 0.0), active=False),
        ]
        neighbors = nearest_neighbors(peds, 15.0, 10)
        assert neighbors == {0: []}


class TestContacts:
    """Test suite for the one-frame contact constraints."""

    def test_touching_pair_cannot_approach(self):
        a = PedestrianState(id=0, position=(0.0, 0.0))
        b = PedestrianState(id=1, position=(4.0, 0.0))
        constraint = contact_constraint(a, b)
        assert constraint.violation((0.1, 0.0)) > 0
        assert constraint.violation((0.0, 0.0)) <= 0
        # sliding past is allowed
        assert constraint.violation((0.0, 2.5)) <= 0

    def test_half_the_gap_per_frame(self):
        a = PedestrianState(id=0, position=(0.0, 0.0))
        b = PedestrianState(id=1, position=(6.0, 0.0))
        constraint = contact_constraint(a, b)
        assert constraint.violation((1.0, 0.0)) == pytest.approx(0.0, abs=1e-12)
        assert constraint.violation((1.1, 0.0)) > 0
        assert contact_constraint(b, a).violation((-1.0, 0.0)) == pytest.approx(0.0, abs=1e-12)

    def test_coincident_pair_split_by_id(self):
        a = PedestrianState(id=0, position=(1.0, 1.0))
        b = PedestrianState(id=1, position=(1.0, 1.0))
        ca, cb = contact_constraint(a, b), contact_constraint(b, a)
        assert ca.normal == pytest.approx((-1.0, 0.0))
        assert cb.normal == pytest.approx((1.0, 0.0))

    def test_reach_is_symmetric_and_uncapped(self):
        peds = [PedestrianState(id=i, position=(float(i) * 4.5, 0.0)) for i in range(5)]
        peds.append(PedestrianState(id=5, position=(2.0, 3.0), active=False))
        contacts = contact_neighbors(peds)
        # reach is 2 + 2 + (2.5 + 2.5) = 9
        assert [p.id for p in contacts[0]] == [1, 2]
        assert [p.id for p in contacts[2]] == [0, 1, 3, 4]
        assert 5 not in contacts
        for pid, others in contacts.items():
            for other in others:
                assert pid in [p.id for p in contacts[other.id]]


class TestStepVelocities:
    """Test suite for the simultaneous update."""

    def test_lone_pedestrian_keeps_preferred(self):
        ped = PedestrianState(id=0, position=(0.0, 0.0), preferred_velocity=(1.0, 2.0))
        (solved,) = step_velocities([ped], [], SimulationParams())
        assert solved.optimal_velocity == (1.0, 2.0)

    def test_mirror_configuration_gives_mirror_velocities(self):
        a = PedestrianState(
            id=0, position=(-10.0, 0.0), velocity=(0.85, 0.3), preferred_velocity=(0.85, 0.3)
        )
        b = PedestrianState(
            id=1, position=(10.0, 0.0), velocity=(-0.85, 0.3), preferred_velocity=(-0.85, 0.3)
        )
        sa, sb = step_velocities([a, b], [], SimulationParams())
        assert sa.optimal_velocity[0] == pytest.approx(0.8, abs=1e-9)
        assert sa.optimal_velocity[1] == pytest.approx(0.3, abs=1e-9)
        assert sb.optimal_velocity[0] == pytest.approx(-sa.optimal_velocity[0], abs=1e-6)
        assert sb.optimal_velocity[1] == pytest.approx(sa.optimal_velocity[1], abs=1e-6)

    def test_inactive_returned_unchanged(self):
        gone = PedestrianState(id=0, position=(0.0, 0.0), active=False, preferred_velocity=(1, 0))
        (result,) = step_velocities([gone], [], SimulationParams())
        assert result is gone

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        peds = [
            PedestrianState(
                id=i,
                position=(float(x), float(y)),
                preferred_velocity=(float(vx), float(vy)),
            )
            for i, (x, y, vx, vy) in enumerate(
                zip(
                    np.arange(8) * 6.0,
                    rng.uniform(-2, 2, 8),
                    rng.uniform(-2, 2, 8),
                    rng.uniform(-2, 2, 8),
                )
            )
        ]
        first = step_velocities(peds, [], SimulationParams())
        second = step_velocities(peds, [], SimulationParams())
        assert [p.optimal_velocity for p in first] == [p.optimal_velocity for p in second]

    def test_head_on_never_penetrates(self):
        params = SimulationParams()
        peds = (
            PedestrianState(id=0, position=(-10.0, 0.0), preferred_velocity=(2.5, 0.0)),
            PedestrianState(id=1, position=(10.0, 0.0), preferred_velocity=(-2.5, 0.0)),
        )
        closest = math.inf
        for _ in range(200):
            peds = _advance(step_velocities(peds, [], params))
            closest = min(closest, _min_pair_distance(peds))
            for p in peds:
                assert math.hypot(*p.optimal_velocity) <= p.max_speed + 1e-9
        assert closest >= 4.0 - 1e-3

    @pytest.mark.slow
    def test_random_crowd_never_penetrates(self):
        """50 agents with random goals for 500 frames."""
        params = SimulationParams()
        rng = np.random.default_rng(2024)
        positions = []
        while len(positions) < 50:
            candidate = rng.uniform(0.0, 150.0, 2)
            if all(np.hypot(*(candidate - p)) >= 5.0 for p in positions):
                positions.append(candidate)
        goals = rng.uniform(0.0, 150.0, (50, 2))
        peds = tuple(
            PedestrianState(id=i, position=(float(p[0]), float(p[1])))
            for i, p in enumerate(positions)
        )

        for _ in range(500):
            with_preferred = []
            for p, goal in zip(peds, goals):
                dx, dy = goal[0] - p.position[0], goal[1] - p.position[1]
                dist = math.hypot(dx, dy)
                scale = min(p.max_speed, dist) / dist if dist > 1e-9 else 0.0
                with_preferred.append(replace(p, preferred_velocity=(dx * scale, dy * scale)))
            peds = _advance(step_velocities(with_preferred, [], params))
            assert _min_pair_distance(peds) >= 4.0 - 1e-3 * 2.0

    def test_pinned_against_wall(self):
        """A column pushing into a wall neither overlaps nor crosses the wall."""
        params = SimulationParams()
        wall = [ObstacleSegment((-50.0, 0.0), (50.0, 0.0))]
        peds = tuple(
            PedestrianState(id=i, position=(0.3 * i, 2.5 + 4.5 * i)) for i in range(6)
        )
        for _ in range(60):
            peds = _advance(step_velocities(_toward(peds, (0.0, -10.0)), wall, params))
            assert _min_pair_distance(peds) >= 4.0 - 1e-3
            assert _min_wall_clearance(peds, wall) >= 2.0 - 1e-3

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_crowd_in_corner_stays_separated(self, seed):
        """A boxed crowd squeezing into one corner keeps its spacing and stays inside."""
        params = SimulationParams()
        walls = _box(40.0)
        rng = np.random.default_rng(seed)
        positions = []
        while len(positions) < 20:
            candidate = rng.uniform(3.0, 37.0, 2)
            if all(np.hypot(*(candidate - p)) >= 4.5 for p in positions):
                positions.append(candidate)
        peds = tuple(
            PedestrianState(id=i, position=(float(p[0]), float(p[1])))
            for i, p in enumerate(positions)
        )
        for _ in range(80):
            peds = _advance(step_velocities(_toward(peds, (0.0, 0.0)), walls, params))
            assert _min_pair_distance(peds) >= 4.0 - 1e-3
            assert _min_wall_clearance(peds, walls) >= 2.0 - 1e-3
