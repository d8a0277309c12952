"""Transition records and a bounded FIFO replay buffer."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np


class EmptyBufferError(LookupError):
    def __init__(self):
        super().__init__("buffer empty: cannot sample from a replay buffer with no entries")


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool = False
    # bootstrap multiplier for the TD target; gamma for one-step, gamma^L for L-step
    discount: Optional[float] = None
    # what the representation's next-state head sees; defaults to next_state
    rep_target: Optional[np.ndarray] = None


class Batch(NamedTuple):
    state: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_state: np.ndarray
    done: np.ndarray
    discount: np.ndarray
    rep_target: np.ndarray


class ReplayBuffer:
    """Ring buffer of transitions; the oldest entry is evicted first.

    Sampling draws indices uniformly with replacement from the entries
    currently held, using a generator seeded once at construction.
    """

    def __init__(self, capacity: int, state_dim: int, action_dim: int, rng_seed: int = 0,
                 rep_target_dim: Optional[int] = None, gamma: float = 0.99):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.rng_seed = rng_seed
        self.rng = np.random.default_rng(rng_seed)
        self.gamma = gamma
        rep_target_dim = state_dim if rep_target_dim is None else rep_target_dim
        self._s = np.zeros((capacity, state_dim))
        self._a = np.zeros((capacity, action_dim))
        self._r = np.zeros(capacity)
        self._s2 = np.zeros((capacity, state_dim))
        self._d = np.zeros(capacity, dtype=bool)
        self._g = np.zeros(capacity)
        self._rt = np.zeros((capacity, rep_target_dim))
        self._next = 0
        self._size = 0
        self._pushed = 0

    def __len__(self):
        return self._size

    @property
    def total_pushed(self):
        return self._pushed

    def push(self, t: Transition) -> None:
        i = self._next
        self._s[i] = t.state
        self._a[i] = t.action
        self._r[i] = t.reward
        self._s2[i] = t.next_state
        self._d[i] = t.done
        self._g[i] = self.gamma if t.discount is None else t.discount
        self._rt[i] = t.next_state if t.rep_target is None else t.rep_target
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self._pushed += 1

    def _order(self):
        # storage slots from oldest to newest
        if self._size < self.capacity:
            return np.arange(self._size)
        return (np.arange(self._size) + self._next) % self.capacity

    def entry(self, k: int) -> Transition:
        """The k-th oldest stored transition."""
        i = self._order()[k]
        return Transition(self._s[i].copy(), self._a[i].copy(), float(self._r[i]), self._s2[i].copy(),
                          bool(self._d[i]), float(self._g[i]), self._rt[i].copy())

    def sample_indices(self, batch_size: int) -> np.ndarray:
        if self._size == 0:
            raise EmptyBufferError()
        return self.rng.integers(0, self._size, size=batch_size)

    def gather(self, idx) -> Batch:
        return Batch(self._s[idx], self._a[idx], self._r[idx], self._s2[idx], self._d[idx],
                     self._g[idx], self._rt[idx])

    def sample(self, batch_size: int) -> Batch:
        return self.gather(self.sample_indices(batch_size))

    def next_states(self) -> np.ndarray:
        return self._rt[: self._size]


def replay_sample(buffer: ReplayBuffer, batch_size: int) -> list:
    """Draw ``batch_size`` transitions uniformly with replacement."""
    idx = buffer.sample_indices(batch_size)
    return [
        Transition(buffer._s[i].copy(), buffer._a[i].copy(), float(buffer._r[i]), buffer._s2[i].copy(),
                   bool(buffer._d[i]), float(buffer._g[i]), buffer._rt[i].copy())
        for i in idx
    ]
