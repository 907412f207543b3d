"""
Tests for Replay Buffer

Unit tests for agent experience storage and SQIL batch composition.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "src"))

from grid_dispatch.env.transitions import Transition
from grid_dispatch.exceptions import EmptyBufferError, InsufficientDataError
from grid_dispatch.learn import replay
from grid_dispatch.learn.replay import Batch, ReplayBuffer

OBS_DIM = 3
ACT_DIM = 2


def demonstrations(count, reward=-5.0):
    return [
        Transition(state=np.full(OBS_DIM, k, dtype=float), action=np.zeros(ACT_DIM), reward=reward,
                   cost=0.0, next_state=np.zeros(OBS_DIM), done=False, demo=True)
        for k in range(count)
    ]


def fill(buffer, count, reward=0.7):
    for k in range(count):
        buffer.add(np.full(OBS_DIM, -k, dtype=float), np.ones(ACT_DIM), reward, 1.0, np.zeros(OBS_DIM), k % 5 == 4)


class TestReplayBuffer:
    """Test cases for ReplayBuffer"""

    def test_plain_sampling(self):
        """Test uniform batches from the agent pool keep rewards"""
        buffer = ReplayBuffer(OBS_DIM, ACT_DIM, seed=0)
        fill(buffer, 40)
        batch = buffer.sample(16)
        assert len(batch) == 16
        assert batch.states.shape == (16, OBS_DIM)
        assert np.all(batch.rewards == 0.7)
        assert not batch.demos.any()
        assert set(np.unique(batch.dones)) <= {0.0, 1.0}

    def test_plain_insufficient(self):
        """Test a batch larger than the pool is refused"""
        buffer = ReplayBuffer(OBS_DIM, ACT_DIM)
        fill(buffer, 3)
        with pytest.raises(InsufficientDataError):
            buffer.sample(4)

    def test_ring_capacity(self):
        """Test old transitions are overwritten"""
        buffer = ReplayBuffer(OBS_DIM, ACT_DIM, capacity=10)
        fill(buffer, 25)
        assert buffer.n_agent == 10
        assert len(buffer) == 10

    def test_demo_rewards_forced(self):
        """Test loaded demonstrations always carry reward one"""
        buffer = ReplayBuffer(OBS_DIM, ACT_DIM, sqil=True, seed=0)
        buffer.load_demonstrations(demonstrations(20))
        assert buffer.n_demo == 20
        assert np.all(buffer.demo.rewards[:20] == 1.0)

    def test_sqil_agent_rewards_zeroed(self):
        """Test agent rewards are stored as zero in SQIL mode"""
        buffer = ReplayBuffer(OBS_DIM, ACT_DIM, sqil=True)
        fill(buffer, 5, reward=3.0)
        assert np.all(buffer.agent.rewards[:5] == 0.0)

    def test_sqil_half_and_half(self):
        """Test a 256 batch holds 128 demonstration and 128 agent rows"""
        buffer = ReplayBuffer(OBS_DIM, ACT_DIM, sqil=True, seed=0)
        buffer.load_demonstrations(demonstrations(300))
        fill(buffer, 300)
        batch = buffer.sample(256)

        assert len(batch) == 256
        assert int(batch.demos.sum()) == 128
        assert np.all(batch.rewards[batch.demos] == 1.0)
        assert np.all(batch.rewards[~batch.demos] == 0.0)
        assert set(np.unique(batch.rewards)) <= {0.0, 1.0}
        assert np.all(batch.states[batch.demos][:, 0] >= 0.0)

    @pytest.mark.slow
    def test_sqil_discipline_over_many_batches(self):
        """Test every one of 10^4 batches is exactly half demonstrations with SQIL rewards"""
        buffer = ReplayBuffer(OBS_DIM, ACT_DIM, sqil=True, seed=11)
        buffer.load_demonstrations(demonstrations(200))
        fill(buffer, 200)

        for _ in range(10_000):
            batch = buffer.sample(64)
            assert int(batch.demos.sum()) == 32
            assert np.all(batch.rewards[batch.demos] == 1.0)
            assert np.all(batch.rewards[~batch.demos] == 0.0)

    def test_sqil_agent_pool_empty(self, mocker):
        """Test an empty agent pool falls back to demonstrations with a warning"""
        warning = mocker.patch.object(replay.logger, "warning")
        buffer = ReplayBuffer(OBS_DIM, ACT_DIM, sqil=True, seed=0)
        buffer.load_demonstrations(demonstrations(300))

        batch = buffer.sqil_sample(256)
        assert int(batch.demos.sum()) == 256
        warning.assert_called_once()

    def test_sqil_demo_pool_empty(self, mocker):
        """Test an empty demonstration pool falls back to agent experience"""
        warning = mocker.patch.object(replay.logger, "warning")
        buffer = ReplayBuffer(OBS_DIM, ACT_DIM, sqil=True, seed=0)
        fill(buffer, 50)
        batch = buffer.sqil_sample(32)
        assert not batch.demos.any()
        warning.assert_called_once()

    def test_sqil_both_empty(self):
        """Test sampling from two empty pools"""
        with pytest.raises(EmptyBufferError):
            ReplayBuffer(OBS_DIM, ACT_DIM, sqil=True).sqil_sample(2)

    def test_sqil_odd_batch(self):
        """Test SQIL batches must split evenly"""
        buffer = ReplayBuffer(OBS_DIM, ACT_DIM, sqil=True)
        buffer.load_demonstrations(demonstrations(10))
        with pytest.raises(ValueError):
            buffer.sqil_sample(5)

    def test_sqil_insufficient(self):
        """Test a batch larger than both pools is refused"""
        buffer = ReplayBuffer(OBS_DIM, ACT_DIM, sqil=True)
        buffer.load_demonstrations(demonstrations(3))
        fill(buffer, 3)
        with pytest.raises(InsufficientDataError):
            buffer.sqil_sample(8)

    def test_batch_concat(self):
        """Test concatenation keeps row order"""
        buffer = ReplayBuffer(OBS_DIM, ACT_DIM, seed=0)
        fill(buffer, 8)
        first, second = buffer.sample(4), buffer.sample(4)
        joined = Batch.concat(first, second)
        assert len(joined) == 8
        np.testing.assert_array_equal(joined.states[:4], first.states)
