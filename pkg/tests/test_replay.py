import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specrl.replay import EmptyBufferError, ReplayBuffer, Transition, replay_sample


def tr(i):
    return Transition(np.array([float(i)]), np.array([0.0]), float(i), np.array([float(i + 1)]))


class TestReplayBuffer:
    def test_single_record_repeated(self):
        buf = ReplayBuffer(4, 1, 1)
        buf.push(tr(7))
        out = replay_sample(buf, 4)
        assert len(out) == 4
        assert all(t.reward == 7.0 for t in out)

    def test_fifo_eviction(self):
        buf = ReplayBuffer(2, 1, 1)
        for i in range(3):
            buf.push(tr(i))
        assert len(buf) == 2
        assert [buf.entry(k).reward for k in range(2)] == [1.0, 2.0]

    def test_empty_buffer(self):
        with pytest.raises(EmptyBufferError, match="buffer empty"):
            replay_sample(ReplayBuffer(3, 1, 1), 1)

    def test_seeded_stream(self):
        # oracle: replay the same generator by hand
        buf = ReplayBuffer(10, 1, 1, rng_seed=123)
        for i in range(10):
            buf.push(tr(i))
        first = [t.reward for t in replay_sample(buf, 5)]
        second = [t.reward for t in replay_sample(buf, 5)]
        g = np.random.default_rng(123)
        assert first == [float(i) for i in g.integers(0, 10, size=5)]
        assert second == [float(i) for i in g.integers(0, 10, size=5)]
        assert first != second

    def test_defaults_for_discount_and_target(self):
        buf = ReplayBuffer(2, 1, 1, gamma=0.9)
        buf.push(tr(0))
        e = buf.entry(0)
        assert e.discount == 0.9
        np.testing.assert_array_equal(e.rep_target, e.next_state)

    @settings(max_examples=50, deadline=None)
    @given(capacity=st.integers(1, 20), n=st.integers(0, 60))
    def test_eviction_order_total(self, capacity, n):
        buf = ReplayBuffer(capacity, 1, 1)
        for i in range(n):
            buf.push(tr(i))
        assert len(buf) == min(n, capacity)
        held = [buf.entry(k).reward for k in range(len(buf))]
        assert held == [float(i) for i in range(max(0, n - capacity), n)]
