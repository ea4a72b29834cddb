"""Experiment Configuration Schemas

Every field defaults to the published hyperparameters, so an empty JSON
object is a complete configuration.
"""

import json
from pathlib import Path
from typing import List, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.core.exceptions import ConfigError
from app.schemas.scenario import ScenarioFamily, _parse_ratio


class TrainConfig(BaseModel):
    """Learning hyperparameters."""

    model_config = ConfigDict(extra="forbid")

    learning_rate: float = Field(default=1e-4, gt=0)
    gamma: float = Field(default=0.99, gt=0, le=1)
    horizon: int = Field(default=200, gt=0, description="T, frames per episode")
    n_step: int = Field(default=3, ge=1)
    batch_size: int = Field(default=128, ge=1)
    target_sync_interval: int = Field(default=1000, ge=1, description="F_u, in updates")
    buffer_capacity: int = Field(default=100_000, ge=1)
    n_atoms: int = Field(default=51, ge=2)
    v_min: float = -10.0
    v_max: float = 10.0
    learning_start: int = Field(default=50_000, ge=0, description="L_s, in environment frames")
    total_train_frames: int = Field(default=5_000_000, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)

    # Prioritized replay
    priority_alpha: float = Field(default=0.5, ge=0)
    beta_start: float = Field(default=0.4, ge=0, le=1)
    beta_end: float = Field(default=1.0, ge=0, le=1)
    priority_epsilon: float = Field(default=1e-6, gt=0)

    # Optimizer
    grad_clip_norm: float = Field(default=10.0, gt=0)
    adam_betas: Tuple[float, float] = (0.9, 0.999)
    adam_eps: float = Field(default=1.5e-4, gt=0)

    @model_validator(mode="after")
    def _check_ranges(self) -> "TrainConfig":
        if self.v_min >= self.v_max:
            raise ValueError("v_min must be below v_max")
        if self.learning_start > self.total_train_frames:
            raise ValueError("learning_start cannot exceed total_train_frames")
        return self

    @property
    def delta_z(self) -> float:
        return (self.v_max - self.v_min) / (self.n_atoms - 1)

    def beta_at(self, frame: int) -> float:
        """Importance-sampling exponent linearly annealed over the run."""
        fraction = min(max(frame, 0) / self.total_train_frames, 1.0)
        return self.beta_start + fraction * (self.beta_end - self.beta_start)


class RewardWeights(BaseModel):
    """Weights of the goal, alignment and smoothness terms plus the frame penalty."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    w1: float = 15.0
    w2: float = 1.25
    w3: float = 0.5
    w4: float = Field(default=0.4, gt=0, le=1, description="distance exponent")
    penalty: float = 2.5

    @field_validator("w1", "w2", "w3", "penalty")
    @classmethod
    def _finite(cls, value: float) -> float:
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError("reward weights must be finite")
        return value


class SimulationParams(BaseModel):
    """Kinematics and collision-avoidance settings shared by every scenario."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    max_speed: float = Field(default=2.5, gt=0, description="units per frame")
    time_horizon: float = Field(default=10.0, gt=0)
    obstacle_horizon: float = Field(default=5.0, gt=0)
    neighbor_distance_factor: float = Field(default=15.0, gt=0, description="x radius")
    max_neighbors: int = Field(default=10, ge=0)
    time_step: float = Field(default=1.0, gt=0)
    raster_size: int = Field(default=84, ge=8)


class NetworkConfig(BaseModel):
    """Shape of the dueling noisy categorical network."""

    model_config = ConfigDict(extra="forbid")

    # (out_channels, kernel, stride)
    conv_layers: List[Tuple[int, int, int]] = [(32, 8, 4), (64, 4, 2), (64, 3, 1)]
    hidden_size: int = Field(default=512, ge=1)
    sigma_init: float = Field(default=0.5, ge=0)
    in_frames: int = Field(default=3, ge=1)
    n_actions: int = Field(default=8, ge=1)


class ScenarioSamplerConfig(BaseModel):
    """Which scenarios training episodes are drawn from."""

    model_config = ConfigDict(extra="forbid")

    family: ScenarioFamily = ScenarioFamily.WIDTH_RATIO
    mixed: bool = Field(default=False, description="draw the family per episode")
    width_ratios: List[float] = [1.0, 1.5, 2.0]
    distribution_ratios: List[Tuple[int, int]] = [(1, 1), (1, 2), (1, 3)]
    open_frames: List[int] = [15, 30, 45]
    pedestrian_counts: List[int] = [12, 24, 36]
    side_length: float = Field(default=100.0, gt=0)
    wall_width: float = Field(default=2.0, gt=0)
    pedestrian_radius: float = Field(default=2.0, gt=0)
    exit_width_factor: float = Field(default=4.0, gt=0)

    @field_validator("distribution_ratios", mode="before")
    @classmethod
    def _ratios(cls, value: object) -> object:
        if isinstance(value, list):
            return [_parse_ratio(v) for v in value]
        return value

    @field_validator("width_ratios", "open_frames", "pedestrian_counts")
    @classmethod
    def _non_empty(cls, value: list) -> list:
        if not value:
            raise ValueError("sampler lists cannot be empty")
        return value


class ExperimentConfig(BaseModel):
    """Top-level experiment file."""

    model_config = ConfigDict(extra="forbid")

    train: TrainConfig = Field(default_factory=TrainConfig)
    rewards: RewardWeights = Field(default_factory=RewardWeights)
    simulation: SimulationParams = Field(default_factory=SimulationParams)
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    sampler: ScenarioSamplerConfig = Field(default_factory=ScenarioSamplerConfig)
    log_interval: int = Field(default=1000, ge=1, description="frames between log rows")
    checkpoint_interval: int = Field(default=100_000, ge=1)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        """Read and validate a JSON config file."""
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read config '{path}'", details={"error": str(e)})
        try:
            return cls.model_validate(raw)
        except ValidationError as e:
            raise ConfigError(
                f"Invalid config '{path}'",
                details={"errors": e.errors(include_url=False)},
            )
