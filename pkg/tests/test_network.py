"""
Tests for the Rainbow value network
"""

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from app.core.exceptions import NumericalError
from app.models.observation import StateTensor
from app.schemas.config import NetworkConfig
from app.services.network import (
    NoiseMode,
    NoisyLayerParams,
    NoisyLinear,
    RainbowNetwork,
    ValueDistribution,
    conv_output_size,
    noisy_forward,
    select_action,
    states_to_tensor,
)
from tests.conftest import TINY_ATOMS, TINY_SIZE


def _pixels(batch: int = 2, seed: int = 0) -> torch.Tensor:
    rng = np.random.default_rng(seed)
    return torch.from_numpy(rng.integers(0, 256, (batch, 3, TINY_SIZE, TINY_SIZE), dtype=np.uint8))


class TestNoisyLinear:
    """Test suite for noisy layers."""

    def test_zero_noise_is_plain_linear(self):
        layer = NoisyLinear(5, 3)
        layer.reset_noise(torch.Generator().manual_seed(0))
        x = torch.randn(4, 5)
        expected = F.linear(x, layer.weight_mu, layer.bias_mu)
        torch.testing.assert_close(layer(x, zero_noise=True), expected)
        torch.testing.assert_close(noisy_forward(x, layer.params(zero_noise=True)), expected)

    def test_noise_perturbs_output(self):
        layer = NoisyLinear(5, 3)
        layer.reset_noise(torch.Generator().manual_seed(0))
        x = torch.randn(4, 5)
        assert not torch.allclose(layer(x), layer(x, zero_noise=True))

    def test_initial_sigma(self):
        layer = NoisyLinear(16, 4, sigma_init=0.5)
        assert torch.allclose(layer.weight_sigma, torch.full((4, 16), 0.125))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            NoisyLayerParams(
                mu_w=torch.zeros(3, 5),
                sigma_w=torch.zeros(3, 4),
                mu_b=torch.zeros(3),
                sigma_b=torch.zeros(3),
                noise_eps_w=torch.zeros(3, 5),
                noise_eps_b=torch.zeros(3),
            )
        layer = NoisyLinear(5, 3)
        with pytest.raises(ValueError):
            noisy_forward(torch.zeros(2, 4), layer.params())


class TestRainbowNetwork:
    """Test suite for the dueling categorical network."""

    def test_output_is_distribution(self, tiny_network: RainbowNetwork):
        probs = tiny_network(_pixels(3))
        assert probs.shape == (3, 4, TINY_ATOMS)
        torch.testing.assert_close(probs.sum(dim=-1), torch.ones(3, 4))
        assert (probs >= 0).all()

    def test_zero_sigma_matches_zero_noise(self, tiny_network_config: NetworkConfig):
        config = tiny_network_config.model_copy(update={"sigma_init": 0.0})
        net = RainbowNetwork(config, input_size=TINY_SIZE, n_atoms=TINY_ATOMS).eval()
        x = _pixels()
        torch.testing.assert_close(net(x, NoiseMode.SAMPLE), net(x, NoiseMode.ZERO))

    def test_dueling_combination(self, tiny_network: RainbowNetwork):
        net = tiny_network.eval()
        x = _pixels()
        with torch.no_grad():
            features = net.features(x.float() / 255.0).flatten(start_dim=1)
            value = net.value_out(F.relu(net.value_hidden(features, True)), True)
            advantage = net.advantage_out(F.relu(net.advantage_hidden(features, True)), True)
            value = value.view(-1, 1, TINY_ATOMS)
            advantage = advantage.view(-1, 4, TINY_ATOMS)
            expected = F.softmax(value + advantage - advantage.mean(dim=1, keepdim=True), dim=2)
            torch.testing.assert_close(net(x, NoiseMode.ZERO), expected)

    def test_noise_modes(self, tiny_network: RainbowNetwork):
        net = tiny_network.eval()
        x = _pixels()
        with torch.no_grad():
            sampled = net(x, NoiseMode.SAMPLE)
            frozen = net(x, NoiseMode.FROZEN)
            resampled = net(x, NoiseMode.SAMPLE)
        torch.testing.assert_close(sampled, frozen)
        assert not torch.allclose(sampled, resampled)

    def test_seeded_construction(self, tiny_network_config: NetworkConfig):
        first = RainbowNetwork(tiny_network_config, TINY_SIZE, TINY_ATOMS, seed=3)
        second = RainbowNetwork(tiny_network_config, TINY_SIZE, TINY_ATOMS, seed=3)
        other = RainbowNetwork(tiny_network_config, TINY_SIZE, TINY_ATOMS, seed=4)
        for name, tensor in first.state_dict().items():
            assert torch.equal(tensor, second.state_dict()[name])
        assert not torch.equal(first.value_out.weight_mu, other.value_out.weight_mu)

    def test_construction_leaves_global_rng(self, tiny_network_config: NetworkConfig):
        torch.manual_seed(99)
        expected = torch.rand(1)
        torch.manual_seed(99)
        RainbowNetwork(tiny_network_config, TINY_SIZE, TINY_ATOMS, seed=1)
        assert torch.equal(torch.rand(1), expected)

    def test_gradient_matches_finite_differences(self, tiny_network: RainbowNetwork):
        """Sampled elements of every parameter tensor, in float64."""
        net = tiny_network.double().eval()
        x = _pixels()
        actions = torch.tensor([0, 3])
        target = torch.softmax(torch.randn(2, TINY_ATOMS, generator=torch.Generator().manual_seed(1)), -1)
        target = target.to(torch.float64)

        def loss() -> torch.Tensor:
            probs = net(x, NoiseMode.FROZEN)[torch.arange(2), actions]
            return -(target * probs.log()).sum()

        net.zero_grad()
        loss().backward()
        eps = 1e-6
        picker = torch.Generator().manual_seed(0)
        checked = set()
        for name, param in net.named_parameters():
            assert param.dtype == torch.float64
            flat = param.data.view(-1)
            analytic = param.grad.reshape(-1).clone()
            for k in torch.randperm(flat.numel(), generator=picker)[:4].tolist():
                original = flat[k].item()
                with torch.no_grad():
                    flat[k] = original + eps
                    up = loss().item()
                    flat[k] = original - eps
                    down = loss().item()
                    flat[k] = original
                numeric = (up - down) / (2 * eps)
                scale = max(abs(numeric), abs(analytic[k].item()), 1e-3)
                assert abs(numeric - analytic[k].item()) / scale < 1e-4, f"{name}[{k}]"
            checked.add(name)

        assert checked == {name for name, _ in net.named_parameters()}
        assert {"features.1.weight", "features.1.bias", "value_out.bias_mu",
                "advantage_out.bias_sigma"} <= checked

    def test_non_finite_activations(self, tiny_network: RainbowNetwork):
        with torch.no_grad():
            tiny_network.value_out.weight_mu.fill_(float("nan"))
        with pytest.raises(NumericalError):
            tiny_network(_pixels(), NoiseMode.ZERO)

    def test_input_too_small(self, tiny_network_config: NetworkConfig):
        with pytest.raises(ValueError):
            conv_output_size(2, tiny_network_config.conv_layers)
        assert conv_output_size(84, [(32, 8, 4), (64, 4, 2), (64, 3, 1)]) == 7

    def test_description_round_trip(self, tiny_network: RainbowNetwork):
        twin = RainbowNetwork.from_description(tiny_network.describe())
        assert twin.describe() == tiny_network.describe()
        twin.load_state_dict(tiny_network.state_dict())


class TestActionSelection:
    """Test suite for greedy selection."""

    def test_ties_go_to_lowest_index(self):
        probs = torch.full((1, 4, 3), 1.0 / 3.0)
        dist = ValueDistribution(probs=probs, support=torch.tensor([-1.0, 0.0, 1.0]))
        assert select_action(dist).tolist() == [0]

    def test_picks_highest_expectation(self):
        probs = torch.tensor([[[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]])
        dist = ValueDistribution(probs=probs, support=torch.tensor([-1.0, 1.0]))
        torch.testing.assert_close(dist.q_values(), torch.tensor([[-1.0, 1.0, 0.0]]))
        assert select_action(dist).tolist() == [1]

    def test_sampled_noise_explores(self, tiny_network: RainbowNetwork):
        """Resampling the noise on a fixed input reaches more than one action."""
        net = tiny_network.eval()
        x = _pixels(1)
        with torch.no_grad():
            chosen = {
                int(select_action(net.distribution(x, NoiseMode.SAMPLE))[0])
                for _ in range(1000)
            }
        assert len(chosen) >= 2

    def test_states_to_tensor(self):
        stack = StateTensor.initial(np.zeros((TINY_SIZE, TINY_SIZE), dtype=np.uint8))
        batch = states_to_tensor([stack, stack])
        assert batch.shape == (2, 3, TINY_SIZE, TINY_SIZE)
        assert batch.dtype == torch.uint8
