"""
Tests for prioritized replay and n-step assembly
"""

import numpy as np
import pytest

from app.core.exceptions import ReplayBufferError
from app.models.observation import StateTensor
from app.models.transition import RawStep
from app.services.replay import (
    MinSegmentTree,
    NStepAccumulator,
    PriorityBuffer,
    SumSegmentTree,
    n_step_fold,
)


def _frequencies(buffer: PriorityBuffer, draws: int = 100_000, batch: int = 100) -> np.ndarray:
    counts = np.zeros(len(buffer))
    for _ in range(draws // batch):
        ids, _, _ = buffer.sample(batch, beta=0.4)
        counts += np.bincount(ids, minlength=len(buffer))
    return counts / counts.sum()


def _leaf_sum(buffer: PriorityBuffer) -> float:
    return sum(buffer.priority(i) ** buffer.alpha for i in range(buffer.total_pushed - len(buffer), buffer.total_pushed))


class TestSegmentTrees:
    """Test suite for the sum and min trees."""

    def test_sum_and_prefix(self):
        tree = SumSegmentTree(5)
        for i, value in enumerate([1.0, 2.0, 3.0, 4.0]):
            tree[i] = value
        assert tree.capacity == 8
        assert tree.reduce() == 10.0
        assert tree.find_prefixsum_idx(0.5) == 0
        assert tree.find_prefixsum_idx(1.0) == 1
        assert tree.find_prefixsum_idx(9.99) == 3

    def test_min(self):
        tree = MinSegmentTree(4)
        tree[0], tree[1] = 3.0, 1.5
        assert tree.reduce() == 1.5


class TestNStepFold:
    """Test suite for discounted folding."""

    def test_three_ones(self):
        reward, discount = n_step_fold([1.0, 1.0, 1.0], 0.99, 3)
        assert reward == pytest.approx(2.9701)
        assert discount == pytest.approx(0.970299)

    def test_no_lookahead(self):
        assert n_step_fold([4.0, 9.0, 9.0], 0.0, 3)[0] == 4.0

    def test_zero_rewards(self):
        assert n_step_fold([0.0, 0.0, 0.0], 0.99, 3)[0] == 0.0

    def test_rejects_bad_lengths(self):
        with pytest.raises(ValueError):
            n_step_fold([], 0.99, 3)
        with pytest.raises(ValueError):
            n_step_fold([1.0] * 4, 0.99, 3)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            length = int(rng.integers(1, 4))
            rewards = rng.normal(size=length).tolist()
            gamma = float(rng.uniform(0, 1))
            reward, discount = n_step_fold(rewards, gamma, 3)
            assert abs(reward - sum(gamma**k * r for k, r in enumerate(rewards))) < 1e-12
            assert abs(discount - gamma**length) < 1e-12


class TestPriorityBuffer:
    """Test suite for the priority buffer."""

    def test_first_push(self, make_transition):
        buffer = PriorityBuffer(capacity=4)
        item = buffer.push(make_transition())
        assert len(buffer) == 1
        assert buffer.priority(item) == 1.0

    def test_fifo_eviction(self, make_transition):
        buffer = PriorityBuffer(capacity=4)
        for _ in range(5):
            buffer.push(make_transition())
        assert len(buffer) == 4
        assert not buffer.is_live(0)
        assert buffer.is_live(4)
        with pytest.raises(ReplayBufferError):
            buffer.priority(0)

    def test_root_accounting_on_eviction(self, make_transition):
        buffer = PriorityBuffer(capacity=2, alpha=0.5)
        buffer.push(make_transition())
        buffer.push(make_transition())
        buffer.update_priorities([0, 1], [1.0, 4.0])
        before = buffer.total_priority()
        evicted = buffer.priority(0)
        buffer.push(make_transition())
        new = buffer.priority(2)
        assert new == pytest.approx(4.0 + 1e-6)
        assert buffer.total_priority() - before == pytest.approx(new**0.5 - evicted**0.5)

    def test_sampling_refused_when_short(self, make_transition):
        buffer = PriorityBuffer(capacity=8)
        buffer.push(make_transition())
        with pytest.raises(ReplayBufferError):
            buffer.sample(2)

    def test_equal_priorities_sample_evenly(self, make_transition):
        buffer = PriorityBuffer(capacity=2, alpha=1.0, seed=1)
        buffer.push(make_transition())
        buffer.push(make_transition())
        np.testing.assert_allclose(_frequencies(buffer), [0.5, 0.5], atol=0.01)

    def test_proportional_sampling(self, make_transition):
        buffer = PriorityBuffer(capacity=2, alpha=1.0, seed=2)
        buffer.push(make_transition())
        buffer.push(make_transition())
        buffer.update_priorities([0, 1], [3.0, 1.0])
        np.testing.assert_allclose(_frequencies(buffer), [0.75, 0.25], atol=0.01)

    def test_updated_losses_set_ratio(self, make_transition):
        buffer = PriorityBuffer(capacity=2, alpha=1.0, seed=3)
        buffer.push(make_transition())
        buffer.push(make_transition())
        buffer.update_priorities([0, 1], [2.0, 4.0])
        np.testing.assert_allclose(_frequencies(buffer), [1 / 3, 2 / 3], atol=0.01)

    def test_uniform_weights(self, make_transition):
        buffer = PriorityBuffer(capacity=8, seed=4)
        for _ in range(8):
            buffer.push(make_transition())
        _, _, weights = buffer.sample(4, beta=0.7)
        np.testing.assert_allclose(weights, np.ones(4))

    def test_weight_formula(self, make_transition):
        buffer = PriorityBuffer(capacity=2, alpha=1.0, seed=5)
        buffer.push(make_transition())
        buffer.push(make_transition())
        buffer.update_priorities([0, 1], [3.0, 1.0])
        ids, _, weights = buffer.sample(2, beta=1.0)
        expected = {0: 1.0 / 3.0, 1: 1.0}
        for item, weight in zip(ids, weights):
            assert weight == pytest.approx(expected[int(item)], rel=1e-5)

    def test_zero_loss_floor(self, make_transition):
        buffer = PriorityBuffer(capacity=2)
        buffer.push(make_transition())
        buffer.update_priorities([0], [0.0])
        assert buffer.priority(0) == pytest.approx(1e-6)

    def test_stale_update_skipped(self, make_transition):
        buffer = PriorityBuffer(capacity=2)
        for _ in range(3):
            buffer.push(make_transition())
        buffer.update_priorities([0, 2], [5.0, 5.0])
        assert buffer.stale_updates == 1
        assert buffer.priority(2) == pytest.approx(5.0 + 1e-6)

    def test_tree_consistent_under_interleaving(self, make_transition):
        rng = np.random.default_rng(8)
        buffer = PriorityBuffer(capacity=16, alpha=0.5, seed=8)
        for step in range(200):
            op = rng.integers(0, 3)
            if op == 0 or len(buffer) < 4:
                buffer.push(make_transition())
            elif op == 1:
                ids, _, _ = buffer.sample(4)
                buffer.update_priorities(ids, rng.uniform(0, 5, size=4))
            else:
                buffer.sample(4)
            assert len(buffer) <= buffer.capacity
            assert buffer.total_priority() == pytest.approx(_leaf_sum(buffer), abs=1e-6)


def _raw(reward: float, done: bool = False) -> RawStep:
    stack = StateTensor.initial(np.zeros((4, 4), dtype=np.uint8))
    return RawStep(state=stack, action=1, reward=reward, next_state=stack, done=done)


class TestNStepAccumulator:
    """Test suite for per-pedestrian n-step windows."""

    def test_full_window_emits_oldest(self):
        acc = NStepAccumulator(n=3, gamma=0.5)
        assert acc.add(0, _raw(1.0)) == []
        assert acc.add(0, _raw(2.0)) == []
        (emitted,) = acc.add(0, _raw(4.0))
        assert emitted.n_step_reward == pytest.approx(1.0 + 0.5 * 2.0 + 0.25 * 4.0)
        assert emitted.discount_power == pytest.approx(0.125)
        assert not emitted.done
        assert len(acc) == 2

    def test_terminal_flushes_shorter_windows(self):
        acc = NStepAccumulator(n=3, gamma=0.5)
        acc.add(0, _raw(1.0))
        emitted = acc.add(0, _raw(2.0, done=True))
        assert [t.n_step_reward for t in emitted] == pytest.approx([2.0, 2.0])
        assert [t.discount_power for t in emitted] == pytest.approx([0.25, 0.5])
        assert all(t.done and t.next_state is None for t in emitted)
        assert len(acc) == 0

    def test_pedestrians_are_independent(self):
        acc = NStepAccumulator(n=2, gamma=1.0)
        acc.add(0, _raw(1.0))
        acc.add(1, _raw(10.0))
        (emitted,) = acc.add(0, _raw(1.0))
        assert emitted.n_step_reward == 2.0

    def test_truncation_keeps_bootstrap(self):
        acc = NStepAccumulator(n=3, gamma=0.99)
        acc.add(0, _raw(1.0))
        acc.add(1, _raw(1.0))
        emitted = acc.flush_all()
        assert len(emitted) == 2
        assert all(not t.done and t.next_state is not None for t in emitted)

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            NStepAccumulator(n=0)
