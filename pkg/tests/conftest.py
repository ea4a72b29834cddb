"""
Pytest Configuration and Fixtures
"""

from typing import Callable, Optional

import numpy as np
import pytest

from app.models.observation import StateTensor
from app.models.pedestrian import PedestrianState
from app.models.simulation import SimulationState
from app.models.transition import PrioritizedTransition
from app.schemas.config import (
    ExperimentConfig,
    NetworkConfig,
    ScenarioSamplerConfig,
    SimulationParams,
    TrainConfig,
)
from app.schemas.scenario import RoomScenario, ScenarioFamily, ScenarioParams
from app.services.environment import build_scenario
from app.services.network import RainbowNetwork

TINY_SIZE = 12
TINY_ATOMS = 8


@pytest.fixture
def tiny_network_config() -> NetworkConfig:
    """Downsized network: 12x12 input, one conv layer, 4 actions."""
    return NetworkConfig(conv_layers=[(4, 3, 2)], hidden_size=16, in_frames=3, n_actions=4)


@pytest.fixture
def tiny_network(tiny_network_config: NetworkConfig) -> RainbowNetwork:
    return RainbowNetwork(tiny_network_config, input_size=TINY_SIZE, n_atoms=TINY_ATOMS, seed=0)


@pytest.fixture
def default_scenario() -> RoomScenario:
    """12 pedestrians, equal exits, 100x100 room."""
    return build_scenario(ScenarioFamily.WIDTH_RATIO, ScenarioParams(), seed=0)


@pytest.fixture
def small_room_params() -> ScenarioParams:
    return ScenarioParams(pedestrian_count=2, side_length=20.0)


@pytest.fixture
def small_scenario(small_room_params: ScenarioParams) -> RoomScenario:
    return build_scenario(ScenarioFamily.WIDTH_RATIO, small_room_params, seed=0)


@pytest.fixture
def state_with() -> Callable[..., SimulationState]:
    """Build a snapshot with hand-placed pedestrians."""

    def _build(
        scenario: RoomScenario,
        positions: list,
        frame: int = 0,
        horizon: int = 200,
        radius: Optional[float] = None,
    ) -> SimulationState:
        r = radius or scenario.pedestrian_radius
        pedestrians = tuple(
            PedestrianState(id=i, position=tuple(p), radius=r) for i, p in enumerate(positions)
        )
        return SimulationState(
            frame=frame,
            pedestrians=pedestrians,
            scenario=scenario,
            exit_counts=(0,) * len(scenario.exits),
            horizon=horizon,
        )

    return _build


@pytest.fixture
def make_transition() -> Callable[..., PrioritizedTransition]:
    """Random-pixel transitions for the tiny network."""
    rng = np.random.default_rng(123)

    def _make(
        action: int = 0,
        reward: float = 0.0,
        done: bool = False,
        discount: float = 0.99**3,
        size: int = TINY_SIZE,
    ) -> PrioritizedTransition:
        def stack() -> StateTensor:
            frames = tuple(rng.integers(0, 256, (size, size), dtype=np.uint8) for _ in range(3))
            return StateTensor(frames=frames)

        return PrioritizedTransition(
            state=stack(),
            action=action,
            n_step_reward=reward,
            discount_power=discount,
            next_state=None if done else stack(),
            done=done,
        )

    return _make


@pytest.fixture
def tiny_experiment() -> Callable[..., ExperimentConfig]:
    """Experiment config small enough to train in seconds."""

    def _make(**train_overrides) -> ExperimentConfig:
        train = dict(
            horizon=60,
            batch_size=8,
            buffer_capacity=2_000,
            n_atoms=TINY_ATOMS,
            learning_start=50,
            total_train_frames=200,
            target_sync_interval=100,
            seed=7,
        )
        train.update(train_overrides)
        return ExperimentConfig(
            train=TrainConfig(**train),
            simulation=SimulationParams(raster_size=TINY_SIZE),
            network=NetworkConfig(conv_layers=[(4, 3, 2)], hidden_size=16, n_actions=8),
            sampler=ScenarioSamplerConfig(
                width_ratios=[1.0],
                pedestrian_counts=[2],
                side_length=20.0,
            ),
            log_interval=50,
            checkpoint_interval=100,
        )

    return _make
