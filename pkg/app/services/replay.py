"""
Prioritized Replay
Segment trees, the fixed-capacity priority buffer and per-pedestrian n-step
assembly of transitions.
"""

import math
import operator
from collections import deque
from typing import Callable, Deque, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.exceptions import NumericalError, ReplayBufferError
from app.core.logging import get_logger
from app.models.transition import PrioritizedTransition, RawStep

logger = get_logger(__name__)


class SegmentTree:
    """Array-backed binary tree over a power-of-two number of leaves; root at index 1."""

    def __init__(self, capacity: int, operation: Callable[[float, float], float], neutral: float):
        tree_capacity = 1
        while tree_capacity < capacity:
            tree_capacity *= 2
        self._capacity = tree_capacity
        self._operation = operation
        self._neutral = neutral
        self._values = [neutral] * (2 * tree_capacity)

    @property
    def capacity(self) -> int:
        return self._capacity

    def __setitem__(self, idx: int, value: float) -> None:
        node = idx + self._capacity
        self._values[node] = value
        node //= 2
        while node >= 1:
            # parents are recomputed, never patched by deltas
            self._values[node] = self._operation(self._values[2 * node], self._values[2 * node + 1])
            node //= 2

    def __getitem__(self, idx: int) -> float:
        return self._values[idx + self._capacity]

    def reduce(self) -> float:
        return self._values[1]


class SumSegmentTree(SegmentTree):
    def __init__(self, capacity: int):
        super().__init__(capacity, operator.add, 0.0)

    def find_prefixsum_idx(self, mass: float) -> int:
        """Leaf where the running sum first exceeds ``mass``."""
        node = 1
        while node < self._capacity:
            left = self._values[2 * node]
            if mass < left:
                node = 2 * node
            else:
                mass -= left
                node = 2 * node + 1
        return node - self._capacity


class MinSegmentTree(SegmentTree):
    def __init__(self, capacity: int):
        super().__init__(capacity, min, math.inf)


class MaxSegmentTree(SegmentTree):
    def __init__(self, capacity: int):
        super().__init__(capacity, max, 0.0)


def n_step_fold(rewards: Sequence[float], gamma: float, n: int) -> Tuple[float, float]:
    """Discounted sum of up to ``n`` rewards and the matching discount power."""
    if not 1 <= len(rewards) <= n:
        raise ValueError(f"need between 1 and {n} rewards, got {len(rewards)}")
    total = 0.0
    discount = 1.0
    for reward in rewards:
        total += discount * reward
        discount *= gamma
    return total, discount


class PriorityBuffer:
    """
    Fixed-capacity proportional prioritized replay.

    Items are addressed by global insertion ids. An id older than the buffer
    size has been evicted; priority updates for it are skipped and counted.
    """

    def __init__(
        self,
        capacity: int = 100_000,
        alpha: float = 0.5,
        priority_epsilon: float = 1e-6,
        seed: int = 0,
    ):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        if alpha < 0:
            raise ValueError("alpha must be non-negative")
        self.capacity = capacity
        self.alpha = alpha
        self.priority_epsilon = priority_epsilon
        self._storage: List[Optional[PrioritizedTransition]] = [None] * capacity
        self._sum = SumSegmentTree(capacity)
        self._min = MinSegmentTree(capacity)
        self._max = MaxSegmentTree(capacity)
        self._rng = np.random.default_rng(seed)
        self.total_pushed = 0
        self.stale_updates = 0

    def __len__(self) -> int:
        return min(self.total_pushed, self.capacity)

    @property
    def max_priority(self) -> float:
        return self._max.reduce() if len(self) else 1.0

    def total_priority(self) -> float:
        """Root of the sum tree: the sum of priority ** alpha over stored items."""
        return self._sum.reduce()

    def _slot(self, item_id: int) -> int:
        return item_id % self.capacity

    def is_live(self, item_id: int) -> bool:
        return 0 <= item_id < self.total_pushed and self.total_pushed - item_id <= len(self)

    def _set_priority(self, slot: int, priority: float) -> None:
        scaled = priority ** self.alpha
        self._sum[slot] = scaled
        self._min[slot] = scaled
        self._max[slot] = priority

    def push(self, transition: PrioritizedTransition) -> int:
        """Store at the current max priority, evicting the oldest item when full."""
        item_id = self.total_pushed
        slot = self._slot(item_id)
        transition.priority = self.max_priority
        self._storage[slot] = transition
        self._set_priority(slot, transition.priority)
        self.total_pushed += 1
        return item_id

    def priority(self, item_id: int) -> float:
        if not self.is_live(item_id):
            raise ReplayBufferError(f"item {item_id} is not stored", details={"id": item_id})
        return self._max[self._slot(item_id)]

    def sample(
        self, batch_size: int = 128, beta: float = 0.4
    ) -> Tuple[np.ndarray, List[PrioritizedTransition], np.ndarray]:
        """
        Stratified proportional sample.

        Returns:
            (global ids, transitions, importance weights normalized by the
            largest weight any stored item could get)
        """
        size = len(self)
        if size < batch_size:
            raise ReplayBufferError(
                f"cannot sample {batch_size} from {size} stored transitions",
                details={"size": size, "batch_size": batch_size},
            )
        total = self._sum.reduce()
        segment = total / batch_size
        masses = (self._rng.random(batch_size) + np.arange(batch_size)) * segment

        oldest = self.total_pushed - size
        ids = np.empty(batch_size, dtype=np.int64)
        weights = np.empty(batch_size, dtype=np.float64)
        p_min = self._min.reduce() / total
        max_weight = (p_min * size) ** (-beta)
        transitions: List[PrioritizedTransition] = []
        for i, mass in enumerate(masses):
            slot = min(self._sum.find_prefixsum_idx(float(mass)), size - 1)
            p_sample = self._sum[slot] / total
            weights[i] = (p_sample * size) ** (-beta) / max_weight
            # recover the global id of the slot
            offset = (slot - oldest) % self.capacity
            ids[i] = oldest + offset
            transitions.append(self._storage[slot])  # type: ignore[arg-type]
        return ids, transitions, weights

    def update_priorities(self, ids: Sequence[int], losses: Sequence[float]) -> None:
        """Set priority = loss + epsilon for every still-stored id."""
        if len(ids) != len(losses):
            raise ValueError("ids and losses differ in length")
        for item_id, loss in zip(ids, losses):
            item_id = int(item_id)
            if not self.is_live(item_id):
                self.stale_updates += 1
                continue
            priority = float(loss) + self.priority_epsilon
            if not math.isfinite(priority) or priority <= 0:
                raise NumericalError(
                    "Invalid priority from loss",
                    details={"id": item_id, "loss": float(loss)},
                )
            slot = self._slot(item_id)
            self._storage[slot].priority = priority  # type: ignore[union-attr]
            self._set_priority(slot, priority)


class NStepAccumulator:
    """
    Sliding n-step windows, one per pedestrian.

    A full window emits its oldest transition; an episode end emits every
    remaining shorter window.
    """

    def __init__(self, n: int = 3, gamma: float = 0.99):
        if n < 1:
            raise ValueError("n must be at least 1")
        self.n = n
        self.gamma = gamma
        self._windows: Dict[int, Deque[RawStep]] = {}

    def __len__(self) -> int:
        return sum(len(w) for w in self._windows.values())

    def _emit(self, window: Sequence[RawStep]) -> PrioritizedTransition:
        first, last = window[0], window[-1]
        reward, discount = n_step_fold([s.reward for s in window], self.gamma, self.n)
        return PrioritizedTransition(
            state=first.state,
            action=first.action,
            n_step_reward=reward,
            discount_power=discount,
            next_state=None if last.done else last.next_state,
            done=last.done,
        )

    def add(self, pedestrian_id: int, step: RawStep) -> List[PrioritizedTransition]:
        window = self._windows.setdefault(pedestrian_id, deque())
        window.append(step)
        if step.done:
            return self.flush(pedestrian_id)
        if len(window) == self.n:
            emitted = self._emit(list(window))
            window.popleft()
            return [emitted]
        return []

    def flush(self, pedestrian_id: int) -> List[PrioritizedTransition]:
        """Emit all remaining windows of one pedestrian, oldest start first."""
        window = self._windows.pop(pedestrian_id, deque())
        steps = list(window)
        return [self._emit(steps[k:]) for k in range(len(steps))]

    def flush_all(self) -> List[PrioritizedTransition]:
        emitted: List[PrioritizedTransition] = []
        for pedestrian_id in sorted(self._windows):
            emitted.extend(self.flush(pedestrian_id))
        return emitted
