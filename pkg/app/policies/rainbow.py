"""
Rainbow Policy Adapter
Drives pedestrians with a trained value network over stacked egocentric rasters.
"""

from typing import Dict, List, Optional

import torch

from app.core.exceptions import PolicyError
from app.models.observation import StateTensor
from app.models.simulation import SimulationState
from app.policies.base import BasePolicy
from app.repositories.checkpoint import CheckpointRepository
from app.schemas.report import PolicyHandle, PolicyKind
from app.services.network import NoiseMode, RainbowNetwork, select_action, states_to_tensor
from app.services.rasterizer import rasterize_all


class RainbowPolicy(BasePolicy):
    """
    Greedy actions of a shared network; one frame stack per pedestrian.

    Action selection always uses running batch-norm statistics. ``noise_mode``
    is ZERO for evaluation and SAMPLE while training.
    """

    def __init__(
        self,
        handle: PolicyHandle,
        network: Optional[RainbowNetwork] = None,
        noise_mode: NoiseMode = NoiseMode.ZERO,
    ):
        super().__init__(handle)
        if network is None:
            if not handle.checkpoint:
                raise PolicyError("rainbow policy needs a checkpoint", kind=PolicyKind.RAINBOW.value)
            network = CheckpointRepository.load_network(handle.checkpoint)
        self.network = network
        self.noise_mode = noise_mode
        self.stacks: Dict[int, StateTensor] = {}

    @property
    def policy_name(self) -> str:
        return PolicyKind.RAINBOW.value

    def reset(self, seed: int) -> None:
        self.stacks = {}

    def observe(self, state: SimulationState) -> Dict[int, StateTensor]:
        """Push the current raster onto every active pedestrian's stack."""
        rasters = rasterize_all(state, self.network.input_size)
        stacks: Dict[int, StateTensor] = {}
        for ped_id, raster in rasters.items():
            previous = self.stacks.get(ped_id)
            stacks[ped_id] = (
                StateTensor.initial(raster) if previous is None else previous.push_frame(raster)
            )
        self.stacks = stacks
        return stacks

    def select(self, stacks: Dict[int, StateTensor]) -> Dict[int, int]:
        """Greedy action for each stacked observation."""
        if not stacks:
            return {}
        ids: List[int] = sorted(stacks)
        batch = states_to_tensor([stacks[i] for i in ids])
        was_training = self.network.training
        self.network.eval()
        try:
            with torch.no_grad():
                actions = select_action(self.network.distribution(batch, self.noise_mode))
        finally:
            self.network.train(was_training)
        return {ped_id: int(a) for ped_id, a in zip(ids, actions.tolist())}

    def act(self, state: SimulationState) -> Dict[int, int]:
        return self.select(self.observe(state))
