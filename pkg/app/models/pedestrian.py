"""Pedestrian and obstacle models used by the collision-avoidance solver."""

from dataclasses import dataclass
from typing import Tuple

Vec2 = Tuple[float, float]

ZERO: Vec2 = (0.0, 0.0)


@dataclass(frozen=True, slots=True)
class PedestrianState:
    """One disc agent at one frame."""
    id: int
    position: Vec2
    velocity: Vec2 = ZERO
    optimal_velocity: Vec2 = ZERO
    preferred_velocity: Vec2 = ZERO
    radius: float = 2.0
    max_speed: float = 2.5
    active: bool = True

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise ValueError(f"pedestrian {self.id}: radius must be positive")
        if self.max_speed <= 0:
            raise ValueError(f"pedestrian {self.id}: max_speed must be positive")


@dataclass(frozen=True, slots=True)
class ObstacleSegment:
    """Wall segment; free space lies to the left of a -> b when ``ccw`` is set."""
    endpoint_a: Vec2
    endpoint_b: Vec2
    ccw: bool = True

    def __post_init__(self) -> None:
        if self.endpoint_a == self.endpoint_b:
            raise ValueError("obstacle segment endpoints must differ")

    @property
    def free_normal(self) -> Vec2:
        """Unit normal pointing into free space."""
        dx = self.endpoint_b[0] - self.endpoint_a[0]
        dy = self.endpoint_b[1] - self.endpoint_a[1]
        length = (dx * dx + dy * dy) ** 0.5
        nx, ny = -dy / length, dx / length
        return (nx, ny) if self.ccw else (-nx, -ny)


@dataclass(frozen=True, slots=True)
class HalfPlaneConstraint:
    """Velocities v with ``normal . (v - point) >= 0`` are permitted."""
    point: Vec2
    normal: Vec2

    @property
    def direction(self) -> Vec2:
        # free side is to the left of the direction
        return (self.normal[1], -self.normal[0])

    def violation(self, velocity: Vec2) -> float:
        """Signed distance into the forbidden side (<= 0 when satisfied)."""
        return -(
            self.normal[0] * (velocity[0] - self.point[0])
            + self.normal[1] * (velocity[1] - self.point[1])
        )
