"""
Policy Factory
Factory pattern for creating policy adapters from handles.
"""

from typing import Dict, Type

from app.core.exceptions import PolicyError
from app.policies.base import BasePolicy
from app.policies.heuristics import MultiFactorPolicy, NearestExitPolicy, UniformRandomPolicy
from app.policies.rainbow import RainbowPolicy
from app.schemas.report import PolicyHandle, PolicyKind


class PolicyFactory:
    """Factory for creating policy adapters."""

    _policies: Dict[PolicyKind, Type[BasePolicy]] = {
        PolicyKind.RAINBOW: RainbowPolicy,
        PolicyKind.NEAREST_EXIT: NearestExitPolicy,
        PolicyKind.MULTI_FACTOR: MultiFactorPolicy,
        PolicyKind.UNIFORM_RANDOM: UniformRandomPolicy,
    }

    @classmethod
    def create(cls, handle: PolicyHandle) -> BasePolicy:
        """
        Create a policy for the given handle.

        Args:
            handle: Policy kind plus checkpoint or parameters

        Returns:
            Ready-to-use policy

        Raises:
            PolicyError: If the kind is unsupported or its checkpoint is missing
        """
        policy_class = cls._policies.get(handle.kind)

        if not policy_class:
            raise PolicyError(
                f"Policy kind '{handle.kind}' is not supported",
                kind=str(handle.kind),
            )

        return policy_class(handle)

    @classmethod
    def get_supported_kinds(cls) -> list[str]:
        """Get list of supported policy kinds."""
        return [k.value for k in cls._policies.keys()]
