"""
Base Policy Adapter
Abstract base class for everything that picks pedestrian actions.
"""

from abc import ABC, abstractmethod
from typing import Dict

from app.models.simulation import SimulationState
from app.schemas.report import PolicyHandle


class BasePolicy(ABC):
    """
    Abstract base class for evacuation policies.
    One instance drives every pedestrian of an episode.
    """

    def __init__(self, handle: PolicyHandle):
        self.handle = handle

    @property
    @abstractmethod
    def policy_name(self) -> str:
        """Label used in reports (e.g., 'rainbow', 'nearest_exit')."""
        pass

    def reset(self, seed: int) -> None:
        """Prepare for a new episode. Stateless policies ignore it."""

    @abstractmethod
    def act(self, state: SimulationState) -> Dict[int, int]:
        """
        Choose an action for every active pedestrian.

        Args:
            state: Current world snapshot

        Returns:
            Mapping of pedestrian id to action index
        """
        pass
