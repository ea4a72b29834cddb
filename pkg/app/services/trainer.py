"""
Rainbow Trainer
Double-DQN action choice, categorical projection of n-step targets, the
cross-entropy loss, optimizer steps and target synchronization.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from app.core.exceptions import NumericalError
from app.core.logging import get_logger
from app.models.transition import PrioritizedTransition
from app.schemas.config import TrainConfig
from app.services.network import NoiseMode, RainbowNetwork, select_action, states_to_tensor
from app.services.replay import PriorityBuffer

logger = get_logger(__name__)

LOG_FLOOR = 1e-12
GRID_SNAP = 1e-9


@dataclass
class DualParams:
    """Online network, its target copy and the updates since the last copy."""
    online: RainbowNetwork
    target: RainbowNetwork
    updates_since_sync: int = 0
    syncs: int = 0

    @classmethod
    def from_online(cls, online: RainbowNetwork) -> "DualParams":
        target = online.clone_architecture()
        target.load_state_dict(online.state_dict())
        target.eval()
        for param in target.parameters():
            param.requires_grad_(False)
        return cls(online=online, target=target)

    def sync(self) -> None:
        self.target.load_state_dict(self.online.state_dict())
        self.updates_since_sync = 0
        self.syncs += 1


@dataclass
class UpdateResult:
    loss: float
    row_losses: np.ndarray
    mean_q: float
    ids: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))


class _evaluation:
    """Temporarily put networks in eval mode."""

    def __init__(self, *nets: nn.Module):
        self.nets = nets
        self.modes: List[bool] = []

    def __enter__(self) -> None:
        self.modes = [net.training for net in self.nets]
        for net in self.nets:
            net.eval()

    def __exit__(self, *exc: object) -> None:
        for net, mode in zip(self.nets, self.modes):
            net.train(mode)


def double_next_action(
    next_states: torch.Tensor, online: RainbowNetwork, target: RainbowNetwork
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Next actions chosen by the online network, valued by the target network.

    Returns:
        (actions per row, target probabilities at those actions)
    """
    with torch.no_grad(), _evaluation(online, target):
        actions = select_action(online.distribution(next_states, NoiseMode.ZERO))
        target_probs = target(next_states, NoiseMode.ZERO)
    rows = torch.arange(actions.shape[0])
    return actions, target_probs[rows, actions]


def project_distribution(
    rewards: torch.Tensor,
    discounts: torch.Tensor,
    dones: torch.Tensor,
    next_probs: torch.Tensor,
    support: torch.Tensor,
) -> torch.Tensor:
    """
    Project r + discount * z onto the fixed support.

    Computed in float64. Shifted atoms are clipped to the support range and
    split linearly between their two neighbors; done rows collapse to the
    projection of the reward alone.

    Args:
        rewards: (batch,) n-step rewards
        discounts: (batch,) discount powers
        dones: (batch,) terminal flags
        next_probs: (batch, atoms) distributions at the chosen next actions
        support: (atoms,) atom values

    Returns:
        (batch, atoms) probabilities
    """
    rewards = rewards.to(torch.float64)
    if not torch.isfinite(rewards).all():
        raise NumericalError("Non-finite rewards in target projection")
    next_probs = next_probs.to(torch.float64)
    n_atoms = support.shape[0]
    v_min, v_max = float(support[0]), float(support[-1])
    support = torch.linspace(v_min, v_max, n_atoms, dtype=torch.float64)
    delta_z = (v_max - v_min) / (n_atoms - 1)

    live = (~dones.to(torch.bool)).to(torch.float64)
    shifted = rewards[:, None] + (live * discounts.to(torch.float64))[:, None] * support[None, :]
    shifted = shifted.clamp(v_min, v_max)
    b = (shifted - v_min) / delta_z
    nearest = b.round()
    b = torch.where((b - nearest).abs() < GRID_SNAP, nearest, b)
    lower = b.floor().long().clamp(0, n_atoms - 1)
    upper = b.ceil().long().clamp(0, n_atoms - 1)

    lower_mass = next_probs * (upper.to(torch.float64) - b)
    upper_mass = next_probs * (b - lower.to(torch.float64))
    # exact grid hits put all mass on the lower index
    lower_mass = lower_mass + next_probs * (lower == upper).to(torch.float64)

    projected = torch.zeros_like(next_probs)
    projected.scatter_add_(1, lower, lower_mass)
    projected.scatter_add_(1, upper, upper_mass)
    return projected


def project_target(
    batch: Sequence[PrioritizedTransition],
    dual: DualParams,
    cfg: Optional[TrainConfig] = None,
) -> torch.Tensor:
    """Target distributions for a batch of n-step transitions."""
    online, target = dual.online, dual.target
    n_atoms = online.n_atoms
    rewards = torch.tensor([t.n_step_reward for t in batch], dtype=torch.float64)
    discounts = torch.tensor([t.discount_power for t in batch], dtype=torch.float64)
    dones = torch.tensor([t.done for t in batch], dtype=torch.bool)

    next_probs = torch.full((len(batch), n_atoms), 1.0 / n_atoms, dtype=torch.float64)
    live_rows = [i for i, t in enumerate(batch) if not t.done]
    if live_rows:
        next_states = states_to_tensor([batch[i].next_state for i in live_rows])  # type: ignore[misc]
        _, chosen = double_next_action(next_states, online, target)
        next_probs[live_rows] = chosen.to(torch.float64)
    return project_distribution(rewards, discounts, dones, next_probs, online.support)


def categorical_loss(
    predicted: torch.Tensor,
    target: torch.Tensor,
    weights: Optional[torch.Tensor] = None,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    Cross-entropy of predicted against target distributions.

    Returns:
        (mean of importance-weighted rows, unweighted per-row losses)
    """
    target = target.to(predicted.dtype)
    rows = -(target * predicted.clamp_min(LOG_FLOOR).log()).sum(dim=-1)
    if weights is None:
        return rows.mean(), rows
    return (weights.to(predicted.dtype) * rows).mean(), rows


class RainbowTrainer:
    """
    Owns the online/target pair and the optimizer.

    ``train_step`` samples the buffer, performs one gradient update, feeds the
    per-row losses back as priorities and syncs the target when due.
    """

    def __init__(self, online: RainbowNetwork, cfg: Optional[TrainConfig] = None):
        self.cfg = cfg or TrainConfig()
        self.dual = DualParams.from_online(online)
        self.optimizer = torch.optim.Adam(
            online.parameters(),
            lr=self.cfg.learning_rate,
            betas=self.cfg.adam_betas,
            eps=self.cfg.adam_eps,
        )
        self.update_count = 0

    @property
    def online(self) -> RainbowNetwork:
        return self.dual.online

    @property
    def target(self) -> RainbowNetwork:
        return self.dual.target

    def _gradient_dump(self) -> Dict[str, Dict[str, float]]:
        dump: Dict[str, Dict[str, float]] = {}
        for name, param in self.online.named_parameters():
            if param.grad is None:
                continue
            grad = param.grad
            dump[name] = {
                "param_norm": float(param.detach().norm()),
                "grad_nonfinite": int((~torch.isfinite(grad)).sum()),
            }
        return dump

    def update_step(
        self,
        batch: Sequence[PrioritizedTransition],
        weights: Optional[np.ndarray] = None,
    ) -> UpdateResult:
        """
        One optimizer step on ``batch``.

        Args:
            batch: n-step transitions
            weights: Importance weights (uniform when omitted)

        Returns:
            UpdateResult with the batch loss and the unweighted per-row losses

        Raises:
            NumericalError: Loss or gradients are not finite
        """
        online = self.online
        target_probs = project_target(batch, self.dual, self.cfg)

        online.train()
        states = states_to_tensor([t.state for t in batch])
        actions = torch.tensor([t.action for t in batch], dtype=torch.long)
        probs = online(states, NoiseMode.SAMPLE)
        rows = torch.arange(len(batch))
        chosen = probs[rows, actions]

        weight_tensor = None if weights is None else torch.as_tensor(weights)
        loss, row_losses = categorical_loss(chosen, target_probs, weight_tensor)
        if not torch.isfinite(loss):
            raise NumericalError(
                "Non-finite loss",
                details={"update": self.update_count, "row_losses": row_losses.detach().tolist()},
            )

        self.optimizer.zero_grad()
        loss.backward()
        if any(
            p.grad is not None and not torch.isfinite(p.grad).all() for p in online.parameters()
        ):
            raise NumericalError(
                "Non-finite gradient",
                details={"update": self.update_count, "parameters": self._gradient_dump()},
            )
        nn.utils.clip_grad_norm_(online.parameters(), self.cfg.grad_clip_norm)
        self.optimizer.step()

        self.update_count += 1
        self.dual.updates_since_sync += 1
        mean_q = float((chosen.detach() * online.support).sum(dim=-1).mean())
        return UpdateResult(
            loss=float(loss.detach()),
            row_losses=row_losses.detach().to(torch.float64).numpy(),
            mean_q=mean_q,
        )

    def maybe_sync_target(self) -> bool:
        before = self.dual.syncs
        maybe_sync_target(self.dual, self.cfg)
        return self.dual.syncs > before

    def train_step(self, buffer: PriorityBuffer, beta: float) -> UpdateResult:
        ids, batch, weights = buffer.sample(self.cfg.batch_size, beta)
        result = self.update_step(batch, weights)
        buffer.update_priorities(ids, result.row_losses)
        result.ids = ids
        maybe_sync_target(self.dual, self.cfg)
        return result

    def optimizer_state(self) -> Dict[str, torch.Tensor]:
        """Adam moments and step counts as flat named tensors."""
        flat: Dict[str, torch.Tensor] = {}
        for index, param in enumerate(self.online.parameters()):
            state = self.optimizer.state.get(param)
            if not state:
                continue
            for key, value in state.items():
                flat[f"{index}.{key}"] = torch.as_tensor(value).detach().clone()
        return flat

    def load_optimizer_state(self, flat: Dict[str, torch.Tensor]) -> None:
        params = list(self.online.parameters())
        for name, value in flat.items():
            index, key = name.split(".", 1)
            param = params[int(index)]
            state = self.optimizer.state[param]
            if key == "step":
                state[key] = torch.tensor(float(value.reshape(-1)[0]))
            else:
                state[key] = value.to(param.dtype).reshape(param.shape).clone()


def maybe_sync_target(dual: DualParams, cfg: TrainConfig) -> DualParams:
    """Copy online into target once ``target_sync_interval`` updates have accumulated."""
    if dual.updates_since_sync >= cfg.target_sync_interval:
        dual.sync()
        logger.info("Target network synced", syncs=dual.syncs)
    return dual
