"""Scenario Pydantic Schemas"""

import enum
from typing import Any, Tuple

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from app.core.exceptions import ConfigError


class ScenarioFamily(str, enum.Enum):
    """The three experiment families."""
    WIDTH_RATIO = "width_ratio"  # vary w_l against a fixed w_b
    DISTRIBUTION_RATIO = "distribution_ratio"  # vary who is nearest to which exit
    DELAYED_OPEN = "delayed_open"  # Exit_l opens late


class WallSide(str, enum.Enum):
    """Wall an exit is cut into."""
    LEFT = "left"
    BOTTOM = "bottom"
    RIGHT = "right"
    TOP = "top"


def _parse_ratio(value: Any) -> Any:
    """Accept "1:3" style strings alongside two-element sequences."""
    if isinstance(value, str):
        parts = value.replace("/", ":").split(":")
        if len(parts) != 2:
            raise ValueError(f"ratio '{value}' must look like 'a:b'")
        return tuple(float(p) for p in parts)
    return value


class ExitSpec(BaseModel):
    """An exit gap cut into one wall.

    ``center`` is the midpoint of the gap on the outer wall line; the gap spans
    ``width`` along the wall and the full wall thickness inward.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    center: Tuple[float, float]
    width: float = Field(..., gt=0)
    open_frame: int = Field(default=0, ge=0, description="0 = open from start")
    wall_side: WallSide

    def is_open(self, frame: int) -> bool:
        return frame >= self.open_frame

    @property
    def lateral_axis(self) -> int:
        """Index of the coordinate running along the wall."""
        return 1 if self.wall_side in (WallSide.LEFT, WallSide.RIGHT) else 0

    @property
    def lateral_span(self) -> Tuple[float, float]:
        mid = self.center[self.lateral_axis]
        return mid - self.width / 2.0, mid + self.width / 2.0


class RoomScenario(BaseModel):
    """Square room with walls, two exits and a seeded pedestrian population."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    family: ScenarioFamily = ScenarioFamily.WIDTH_RATIO
    side_length: float = Field(default=100.0, gt=0)
    wall_width: float = Field(default=2.0, gt=0)
    exits: Tuple[ExitSpec, ...]
    pedestrian_count: int = Field(default=12, ge=0)
    pedestrian_radius: float = Field(default=2.0, gt=0)
    distribution_ratio: Tuple[int, int] = (1, 1)
    width_ratio: Tuple[float, float] = (1.0, 1.0)
    seed: int = Field(default=0, ge=0)

    @field_validator("distribution_ratio", mode="before")
    @classmethod
    def _ratio_ints(cls, value: Any) -> Any:
        value = _parse_ratio(value)
        return tuple(int(round(float(v))) for v in value)

    @field_validator("width_ratio", mode="before")
    @classmethod
    def _ratio_floats(cls, value: Any) -> Any:
        return _parse_ratio(value)

    @model_validator(mode="after")
    def _check_geometry(self) -> "RoomScenario":
        if any(part <= 0 for part in self.distribution_ratio):
            raise ValueError("distribution_ratio parts must be positive")
        if len(self.exits) < 1:
            raise ValueError("a room needs at least one exit")
        outer = self.outer_size
        lo, hi = self.wall_width, self.wall_width + self.side_length
        for index, exit_spec in enumerate(self.exits):
            depth_axis = 1 - exit_spec.lateral_axis
            expected = 0.0 if exit_spec.wall_side in (WallSide.LEFT, WallSide.BOTTOM) else outer
            if abs(exit_spec.center[depth_axis] - expected) > 1e-9:
                raise ValueError(f"exit {index} center is not on the outer {exit_spec.wall_side.value} wall line")
            g0, g1 = exit_spec.lateral_span
            if g0 < lo - 1e-9 or g1 > hi + 1e-9:
                raise ValueError(f"exit {index} gap [{g0}, {g1}] leaves its wall [{lo}, {hi}]")
        return self

    @property
    def outer_size(self) -> float:
        """Edge of the bounding box including both walls."""
        return self.side_length + 2.0 * self.wall_width

    @property
    def interior_bounds(self) -> Tuple[float, float]:
        return self.wall_width, self.wall_width + self.side_length

    @property
    def exit_widths(self) -> Tuple[float, ...]:
        return tuple(e.width for e in self.exits)


class ScenarioParams(BaseModel):
    """Family parameters accepted by ``build_scenario``."""

    model_config = ConfigDict(extra="forbid")

    pedestrian_count: int = Field(default=12, ge=0)
    side_length: float = Field(default=100.0, gt=0)
    wall_width: float = Field(default=2.0, gt=0)
    pedestrian_radius: float = Field(default=2.0, gt=0)
    exit_width_factor: float = Field(default=4.0, gt=0, description="w_b in units of r")
    width_ratio: float = Field(default=1.0, description="w_l / w_b for the width_ratio family")
    distribution_ratio: Tuple[int, int] = (1, 1)
    open_frame: int = Field(default=15, ge=0, description="Exit_l opening for delayed_open")

    @field_validator("distribution_ratio", mode="before")
    @classmethod
    def _ratio_ints(cls, value: Any) -> Any:
        value = _parse_ratio(value)
        return tuple(int(round(float(v))) for v in value)

    @field_validator("width_ratio", mode="before")
    @classmethod
    def _width_ratio(cls, value: Any) -> Any:
        # "1:1.5" means w_b : w_l
        if isinstance(value, str) and ":" in value:
            b, l = _parse_ratio(value)
            return l / b
        return value

    @classmethod
    def from_cli(cls, text: str) -> "ScenarioParams":
        """Parse ``k=v,k=v`` as given on the command line."""
        raw: dict = {}
        for item in filter(None, (part.strip() for part in text.split(","))):
            key, sep, value = item.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"Scenario parameter '{item}' is not key=value")
            raw[key.strip()] = value.strip()
        try:
            return cls.model_validate(raw)
        except (ValidationError, ValueError) as e:
            raise ConfigError("Invalid scenario parameters", details={"params": text, "error": str(e)})
