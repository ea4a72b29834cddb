"""
Rainbow Value Network
Convolutional encoder followed by dueling noisy streams whose per-atom logits
are combined before a softmax over the value support.
"""

import enum
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from app.core.exceptions import NumericalError
from app.models.observation import StateTensor
from app.schemas.config import NetworkConfig


class NoiseMode(str, enum.Enum):
    """How noisy layers treat their perturbation."""
    SAMPLE = "sample"  # draw fresh noise, then use it
    ZERO = "zero"  # mean weights only
    FROZEN = "frozen"  # reuse the last drawn noise


@dataclass
class NoisyLayerParams:
    mu_w: torch.Tensor
    sigma_w: torch.Tensor
    mu_b: torch.Tensor
    sigma_b: torch.Tensor
    noise_eps_w: torch.Tensor
    noise_eps_b: torch.Tensor

    def __post_init__(self) -> None:
        if not (self.mu_w.shape == self.sigma_w.shape == self.noise_eps_w.shape):
            raise ValueError("noisy weight shapes disagree")
        if not (self.mu_b.shape == self.sigma_b.shape == self.noise_eps_b.shape):
            raise ValueError("noisy bias shapes disagree")


def noisy_forward(x: torch.Tensor, params: NoisyLayerParams) -> torch.Tensor:
    """y = (mu_w + sigma_w * eps_w) x + mu_b + sigma_b * eps_b"""
    if x.shape[-1] != params.mu_w.shape[1]:
        raise ValueError(f"input width {x.shape[-1]} != layer width {params.mu_w.shape[1]}")
    weight = params.mu_w + params.sigma_w * params.noise_eps_w
    bias = params.mu_b + params.sigma_b * params.noise_eps_b
    return F.linear(x, weight, bias)


class NoisyLinear(nn.Module):
    """
    Linear layer with factorized Gaussian parameter noise.

    sigma starts at sigma_init / sqrt(fan_in); mu is uniform in +-1/sqrt(fan_in).
    """

    def __init__(self, in_features: int, out_features: int, sigma_init: float = 0.5):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.sigma_init = sigma_init

        self.weight_mu = nn.Parameter(torch.empty(out_features, in_features))
        self.weight_sigma = nn.Parameter(torch.empty(out_features, in_features))
        self.bias_mu = nn.Parameter(torch.empty(out_features))
        self.bias_sigma = nn.Parameter(torch.empty(out_features))

        self.register_buffer("weight_epsilon", torch.zeros(out_features, in_features))
        self.register_buffer("bias_epsilon", torch.zeros(out_features))

        self.reset_parameters()

    def reset_parameters(self) -> None:
        mu_range = 1.0 / math.sqrt(self.in_features)
        sigma = self.sigma_init / math.sqrt(self.in_features)
        with torch.no_grad():
            self.weight_mu.uniform_(-mu_range, mu_range)
            self.weight_sigma.fill_(sigma)
            self.bias_mu.uniform_(-mu_range, mu_range)
            self.bias_sigma.fill_(sigma)

    @staticmethod
    def _scale_noise(size: int, generator: torch.Generator) -> torch.Tensor:
        x = torch.randn(size, generator=generator, dtype=torch.float64)
        return x.sign() * x.abs().sqrt()

    def reset_noise(self, generator: torch.Generator) -> None:
        epsilon_in = self._scale_noise(self.in_features, generator)
        epsilon_out = self._scale_noise(self.out_features, generator)
        with torch.no_grad():
            self.weight_epsilon.copy_(torch.outer(epsilon_out, epsilon_in))
            self.bias_epsilon.copy_(epsilon_out)

    def params(self, zero_noise: bool = False) -> NoisyLayerParams:
        eps_w, eps_b = self.weight_epsilon, self.bias_epsilon
        if zero_noise:
            eps_w, eps_b = torch.zeros_like(eps_w), torch.zeros_like(eps_b)
        return NoisyLayerParams(
            mu_w=self.weight_mu,
            sigma_w=self.weight_sigma,
            mu_b=self.bias_mu,
            sigma_b=self.bias_sigma,
            noise_eps_w=eps_w,
            noise_eps_b=eps_b,
        )

    def forward(self, x: torch.Tensor, zero_noise: bool = False) -> torch.Tensor:
        if zero_noise:
            return F.linear(x, self.weight_mu, self.bias_mu)
        return noisy_forward(x, self.params())


@dataclass
class ValueDistribution:
    """Per-action categorical distributions over ``support``; probs is (batch, actions, atoms)."""
    probs: torch.Tensor
    support: torch.Tensor

    def q_values(self) -> torch.Tensor:
        return (self.probs * self.support).sum(dim=-1)


def q_values(dist: ValueDistribution) -> torch.Tensor:
    """Expected value per action."""
    return dist.q_values()


def select_action(dist: ValueDistribution) -> torch.Tensor:
    """Greedy action per row; ties go to the lowest index."""
    return torch.argmax(dist.q_values(), dim=-1)


def conv_output_size(input_size: int, conv_layers: Sequence[Sequence[int]]) -> int:
    size = input_size
    for _, kernel, stride in conv_layers:
        size = (size - kernel) // stride + 1
        if size < 1:
            raise ValueError(f"input of {input_size} pixels is too small for the conv stack")
    return size


class RainbowNetwork(nn.Module):
    """
    Dueling, noisy, categorical Q-network.

    Each conv layer is conv -> batch norm -> ReLU. The value stream yields one
    logit per atom, the advantage stream one per (action, atom); they are
    combined per atom as V + A - mean(A) and normalized by a softmax over atoms.
    """

    def __init__(
        self,
        config: Optional[NetworkConfig] = None,
        input_size: int = 84,
        n_atoms: int = 51,
        v_min: float = -10.0,
        v_max: float = 10.0,
        seed: int = 0,
    ):
        super().__init__()
        self.config = config or NetworkConfig()
        self.input_size = input_size
        self.n_atoms = n_atoms
        self.n_actions = self.config.n_actions
        self.v_min = v_min
        self.v_max = v_max
        self.seed = seed

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            layers: List[nn.Module] = []
            channels = self.config.in_frames
            for out_channels, kernel, stride in self.config.conv_layers:
                layers += [
                    nn.Conv2d(channels, out_channels, kernel_size=kernel, stride=stride),
                    nn.BatchNorm2d(out_channels),
                    nn.ReLU(),
                ]
                channels = out_channels
            self.features = nn.Sequential(*layers)

            side = conv_output_size(input_size, self.config.conv_layers)
            flat = channels * side * side
            hidden, sigma = self.config.hidden_size, self.config.sigma_init
            self.value_hidden = NoisyLinear(flat, hidden, sigma)
            self.value_out = NoisyLinear(hidden, n_atoms, sigma)
            self.advantage_hidden = NoisyLinear(flat, hidden, sigma)
            self.advantage_out = NoisyLinear(hidden, n_atoms * self.n_actions, sigma)

        self.register_buffer("support", torch.linspace(v_min, v_max, n_atoms))
        self._noise_generator = torch.Generator().manual_seed(seed + 1)
        self.reset_noise()

    @property
    def noisy_layers(self) -> Iterable[NoisyLinear]:
        return (self.value_hidden, self.value_out, self.advantage_hidden, self.advantage_out)

    def reset_noise(self) -> None:
        for layer in self.noisy_layers:
            layer.reset_noise(self._noise_generator)

    def noise_state(self) -> torch.Tensor:
        """Byte state of the noise generator, for training checkpoints."""
        return self._noise_generator.get_state()

    def set_noise_state(self, state: torch.Tensor) -> None:
        self._noise_generator.set_state(state.to(torch.uint8))

    def _check_finite(self, tensor: torch.Tensor, stage: str) -> None:
        if not torch.isfinite(tensor).all():
            raise NumericalError(
                f"Non-finite activations after {stage}",
                details={
                    "stage": stage,
                    "nan": int(torch.isnan(tensor).sum()),
                    "inf": int(torch.isinf(tensor).sum()),
                },
            )

    def forward(self, x: torch.Tensor, noise_mode: NoiseMode = NoiseMode.SAMPLE) -> torch.Tensor:
        """
        Action-value distributions for a batch of raw rasters.

        Args:
            x: (batch, frames, height, width) pixels in [0, 255]
            noise_mode: Noise handling for every noisy layer

        Returns:
            (batch, actions, atoms) probabilities
        """
        noise_mode = NoiseMode(noise_mode)
        if noise_mode is NoiseMode.SAMPLE:
            self.reset_noise()
        zero = noise_mode is NoiseMode.ZERO

        x = x.to(self.support.dtype) / 255.0
        features = self.features(x).flatten(start_dim=1)
        self._check_finite(features, "conv stack")

        value = self.value_out(F.relu(self.value_hidden(features, zero)), zero)
        advantage = self.advantage_out(F.relu(self.advantage_hidden(features, zero)), zero)
        value = value.view(-1, 1, self.n_atoms)
        advantage = advantage.view(-1, self.n_actions, self.n_atoms)
        logits = value + advantage - advantage.mean(dim=1, keepdim=True)
        self._check_finite(logits, "dueling head")
        return F.softmax(logits, dim=2)

    def distribution(
        self, x: torch.Tensor, noise_mode: NoiseMode = NoiseMode.SAMPLE
    ) -> ValueDistribution:
        return ValueDistribution(probs=self.forward(x, noise_mode), support=self.support)

    def clone_architecture(self) -> "RainbowNetwork":
        """Fresh network of identical shape; parameters must be loaded separately."""
        twin = RainbowNetwork(
            self.config, self.input_size, self.n_atoms, self.v_min, self.v_max, self.seed
        )
        return twin.to(self.support.dtype)

    def describe(self) -> dict:
        """JSON-friendly description used by checkpoints."""
        return {
            "network": self.config.model_dump(mode="json"),
            "input_size": self.input_size,
            "n_atoms": self.n_atoms,
            "v_min": self.v_min,
            "v_max": self.v_max,
            "seed": self.seed,
        }

    @classmethod
    def from_description(cls, description: dict) -> "RainbowNetwork":
        return cls(
            NetworkConfig.model_validate(description["network"]),
            input_size=description["input_size"],
            n_atoms=description["n_atoms"],
            v_min=description["v_min"],
            v_max=description["v_max"],
            seed=description.get("seed", 0),
        )


def states_to_tensor(states: Sequence[StateTensor]) -> torch.Tensor:
    """Stack observations into a (batch, frames, height, width) uint8 tensor."""
    return torch.from_numpy(np.stack([s.as_array() for s in states], axis=0))
