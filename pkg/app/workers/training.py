"""
Training Pipeline
Shared-network Rainbow training over sampled evacuation episodes.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import torch

from app.core.logging import get_logger
from app.models.observation import StateTensor
from app.models.simulation import EventKind
from app.models.transition import RawStep
from app.policies.rainbow import RainbowPolicy
from app.repositories.checkpoint import FINAL, LATEST, CheckpointRepository
from app.repositories.run_store import RunStore
from app.schemas.config import ExperimentConfig
from app.schemas.report import PolicyHandle, PolicyKind
from app.services.environment import EvacuationEnvironment, scenario_label
from app.services.network import NoiseMode, RainbowNetwork
from app.services.replay import NStepAccumulator, PriorityBuffer
from app.services.reward import event_reward
from app.services.sampler import ScenarioSampler
from app.services.trainer import RainbowTrainer, UpdateResult

logger = get_logger(__name__)


@dataclass
class TrainingSummary:
    """Counters of a finished (or resumed and finished) run."""
    env_frames: int
    updates: int
    syncs: int
    episodes: int
    checkpoint: Path


class TrainingRunner:
    """
    Sequential environment / learner loop.

    Every active pedestrian of an episode acts through one shared network
    and contributes its own n-step transitions to the replay buffer. One
    gradient update follows every environment frame once ``learning_start``
    frames have passed and the buffer holds a full batch.
    """

    def __init__(self, config: ExperimentConfig, out_dir: str | Path):
        self.config = config
        self.store = RunStore(out_dir)
        self.checkpoints = CheckpointRepository(out_dir)
        cfg = config.train

        torch.manual_seed(cfg.seed)
        self.network = RainbowNetwork(
            config.network,
            input_size=config.simulation.raster_size,
            n_atoms=cfg.n_atoms,
            v_min=cfg.v_min,
            v_max=cfg.v_max,
            seed=cfg.seed,
        )
        self.trainer = RainbowTrainer(self.network, cfg)
        self.buffer = PriorityBuffer(
            cfg.buffer_capacity, cfg.priority_alpha, cfg.priority_epsilon, seed=cfg.seed
        )
        self.policy = RainbowPolicy(
            PolicyHandle(kind=PolicyKind.RAINBOW),
            network=self.network,
            noise_mode=NoiseMode.SAMPLE,
        )
        self.sampler = ScenarioSampler(config.sampler, seed=cfg.seed)

        self.env_frames = 0
        self.episodes_done = 0
        self._losses: List[float] = []
        self._q_values: List[float] = []
        self._episode_frames: List[int] = []

    # Checkpointing

    def _counters(self) -> Dict[str, Any]:
        return {"env_frames": self.env_frames, "episodes_done": self.episodes_done}

    def save(self, name: str = LATEST) -> Path:
        return self.checkpoints.save_training(
            self.trainer, self._counters(), name, sampler_state=self.sampler.rng_state()
        )

    def resume(self) -> bool:
        """
        Restore from ``latest.ckpt`` when present.

        Networks, optimizer, noise generator and scenario draws continue where
        the checkpoint left them; replay starts empty and the interrupted
        episode is not replayed.
        """
        path = self.checkpoints.path(LATEST)
        if not path.exists():
            logger.warning("No checkpoint to resume from", path=str(path))
            return False
        counters = CheckpointRepository.restore_training(path, self.trainer)
        self.env_frames = int(counters.get("env_frames", 0))
        self.episodes_done = int(counters.get("episodes_done", 0))
        sampler_state = counters.get("sampler_state")
        if sampler_state is not None:
            self.sampler.set_rng_state(sampler_state)
        else:
            self.sampler = ScenarioSampler(
                self.config.sampler, seed=self.config.train.seed + self.env_frames
            )
        self.store.truncate_train_log(self.env_frames)
        logger.info("Training resumed", env_frames=self.env_frames, episodes=self.episodes_done)
        return True

    # Loop

    def _should_update(self) -> bool:
        cfg = self.config.train
        return self.env_frames > cfg.learning_start and len(self.buffer) >= cfg.batch_size

    def _update(self) -> UpdateResult:
        result = self.trainer.train_step(self.buffer, self.config.train.beta_at(self.env_frames))
        self._losses.append(result.loss)
        self._q_values.append(result.mean_q)
        return result

    def _log_row(self) -> Dict[str, Any]:
        def mean(values: List[float]) -> Optional[float]:
            return sum(values) / len(values) if values else None

        row = {
            "env_frame": self.env_frames,
            "update_index": self.trainer.update_count,
            "mean_loss": mean(self._losses),
            "mean_q": mean(self._q_values),
            "buffer_size": len(self.buffer),
            "episodes_done": self.episodes_done,
            "mean_episode_frames": mean([float(f) for f in self._episode_frames]),
        }
        self._losses, self._q_values, self._episode_frames = [], [], []
        self.store.append_train_log([row])
        logger.info("Training progress", **row)
        return row

    def _after_frame(self) -> None:
        if self._should_update():
            self._update()
        if self.env_frames % self.config.log_interval == 0:
            self._log_row()
        if self.env_frames % self.config.checkpoint_interval == 0:
            self.save(LATEST)

    def run_episode(self) -> int:
        """Play one sampled episode (or until the frame budget runs out)."""
        cfg = self.config
        scenario = self.sampler.draw()
        env = EvacuationEnvironment(scenario, cfg.simulation, cfg.train.horizon)
        accumulator = NStepAccumulator(cfg.train.n_step, cfg.train.gamma)
        self.policy.reset(scenario.seed)
        stacks: Dict[int, StateTensor] = self.policy.observe(env.state)

        while not env.done and self.env_frames < cfg.train.total_train_frames:
            actions = self.policy.select(stacks)
            frame = env.state.frame
            events = env.step(actions)
            next_stacks = self.policy.observe(env.state)

            for event in events:
                ped_id = event.pedestrian_id
                reward = event_reward(
                    event, scenario, frame, cfg.rewards, cfg.simulation.max_speed
                )
                step = RawStep(
                    state=stacks[ped_id],
                    action=actions[ped_id],
                    reward=reward,
                    next_state=next_stacks.get(ped_id, stacks[ped_id]),
                    done=event.terminal,
                )
                emitted = accumulator.add(ped_id, step)
                if event.kind is EventKind.TRUNCATED:
                    emitted += accumulator.flush(ped_id)
                for transition in emitted:
                    self.buffer.push(transition)

            stacks = next_stacks
            self.env_frames += 1
            self._after_frame()

        for transition in accumulator.flush_all():
            self.buffer.push(transition)

        if env.done:
            self.episodes_done += 1
            self._episode_frames.append(env.state.frame)
            logger.debug(
                "Training episode finished",
                scenario=scenario_label(scenario),
                frames=env.state.frame,
                N_l=env.state.n_l,
                N_b=env.state.n_b,
            )
        return env.state.frame

    def run(self, resume: bool = False) -> TrainingSummary:
        """
        Full training pipeline.

        Pipeline:
        1. Write config.json and start (or resume) the train log
        2. Play sampled episodes until ``total_train_frames``
        3. Update, log and checkpoint on their frame intervals
        4. Write latest.ckpt and final.ckpt
        """
        self.store.ensure_dir()
        self.store.write_config(self.config.model_dump(mode="json"))
        if not (resume and self.resume()):
            self.store.reset_train_log()

        total = self.config.train.total_train_frames
        logger.info(
            "Training started",
            out=str(self.store.root),
            total_frames=total,
            env_frames=self.env_frames,
            seed=self.config.train.seed,
        )
        while self.env_frames < total:
            self.run_episode()

        self.save(LATEST)
        final = self.checkpoints.save_network(self.network, FINAL, extra=self._counters())
        summary = TrainingSummary(
            env_frames=self.env_frames,
            updates=self.trainer.update_count,
            syncs=self.trainer.dual.syncs,
            episodes=self.episodes_done,
            checkpoint=final,
        )
        logger.info(
            "Training complete",
            env_frames=summary.env_frames,
            updates=summary.updates,
            syncs=summary.syncs,
            episodes=summary.episodes,
        )
        return summary


def train(config: ExperimentConfig, out_dir: str | Path, resume: bool = False) -> TrainingSummary:
    """Train a shared policy network and write the run directory."""
    return TrainingRunner(config, out_dir).run(resume=resume)

