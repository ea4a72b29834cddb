"""Policy Adapters"""

from app.policies.base import BasePolicy
from app.policies.heuristics import MultiFactorPolicy, NearestExitPolicy, UniformRandomPolicy
from app.policies.rainbow import RainbowPolicy
from app.policies.factory import PolicyFactory

__all__ = [
    "BasePolicy",
    "MultiFactorPolicy",
    "NearestExitPolicy",
    "UniformRandomPolicy",
    "RainbowPolicy",
    "PolicyFactory",
]
