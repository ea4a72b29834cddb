"""Scenario sampler for training episodes."""

from typing import Any, Dict, List

import numpy as np

from app.core.exceptions import ScenarioError
from app.schemas.config import ScenarioSamplerConfig
from app.schemas.scenario import RoomScenario, ScenarioFamily, ScenarioParams
from app.services.environment import build_scenario


class ScenarioSampler:
    """
    Draws one scenario per episode.

    The family is fixed unless ``mixed`` is set; the variant and the
    pedestrian count are drawn from the configured lists, keeping only
    counts the variant can split evenly.
    """

    def __init__(self, config: ScenarioSamplerConfig, seed: int = 0):
        self.config = config
        self._rng = np.random.default_rng(seed)
        uses_distribution = config.mixed or config.family is ScenarioFamily.DISTRIBUTION_RATIO
        for ratio in config.distribution_ratios if uses_distribution else []:
            if not self._counts_for(sum(ratio)):
                raise ScenarioError(
                    f"no pedestrian count in {config.pedestrian_counts} splits {ratio[0]}:{ratio[1]}"
                )
        if not self._counts_for(2):
            raise ScenarioError(f"no even pedestrian count in {config.pedestrian_counts}")

    def rng_state(self) -> Dict[str, Any]:
        """JSON-friendly state of the draw generator."""
        return self._rng.bit_generator.state

    def set_rng_state(self, state: Dict[str, Any]) -> None:
        self._rng.bit_generator.state = state

    def _counts_for(self, parts: int) -> List[int]:
        return [m for m in self.config.pedestrian_counts if m % parts == 0]

    def _pick(self, values: list):
        return values[int(self._rng.integers(0, len(values)))]

    def draw(self) -> RoomScenario:
        cfg = self.config
        family = self._pick(list(ScenarioFamily)) if cfg.mixed else cfg.family
        base = dict(
            side_length=cfg.side_length,
            wall_width=cfg.wall_width,
            pedestrian_radius=cfg.pedestrian_radius,
            exit_width_factor=cfg.exit_width_factor,
        )
        if family is ScenarioFamily.WIDTH_RATIO:
            variant = {"width_ratio": self._pick(cfg.width_ratios)}
            parts = 2
        elif family is ScenarioFamily.DISTRIBUTION_RATIO:
            ratio = tuple(self._pick(cfg.distribution_ratios))
            variant = {"distribution_ratio": ratio}
            parts = sum(ratio)
        else:
            variant = {"open_frame": self._pick(cfg.open_frames)}
            parts = 2
        count = self._pick(self._counts_for(parts))
        seed = int(self._rng.integers(0, 2**31 - 1))
        params = ScenarioParams(pedestrian_count=count, **base, **variant)
        return build_scenario(family, params, seed=seed)
