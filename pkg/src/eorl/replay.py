"""Shared FIFO experience buffer holding Monte-Carlo returns."""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .nn import Batch

PRIORITY_EPS = 1e-6


class SamplingError(RuntimeError):
    pass


class Transition(NamedTuple):
    state: np.ndarray
    action: int
    mc_return: float


def suffix_sums(rewards) -> np.ndarray:
    """Undiscounted reward-to-go: out[t] = sum(rewards[t:])."""
    r = np.asarray(rewards, dtype=float)
    return np.cumsum(r[::-1])[::-1]


def finalize_episode(trajectory: Sequence) -> list[Transition]:
    """Turn ``(state, action, reward)`` steps into transitions carrying G_t (gamma = 1)."""
    if len(trajectory) == 0:
        raise ValueError("empty trajectory")
    returns = suffix_sums([r for _, _, r in trajectory])
    return [Transition(np.asarray(s), int(a), float(g))
            for (s, a, _), g in zip(trajectory, returns)]


class ReplayBuffer:
    """Ring buffer of (state, action, return) with optional proportional priorities.

    Every pushed transition gets a monotonically increasing id.  Sampling
    with priorities returns these ids so that priority updates for entries
    evicted in the meantime can be recognised and dropped.
    """

    def __init__(self, capacity: int, state_dim: int, prioritized: bool = False,
                 dtype=np.float64):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.state_dim = int(state_dim)
        self.prioritized = prioritized
        self.states = np.zeros((capacity, state_dim), dtype=dtype)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.returns = np.zeros(capacity, dtype=dtype)
        self.priorities = np.zeros(capacity) if prioritized else None
        self._size = 0
        self._pushed = 0  # total ever pushed == id of the next transition

    def __len__(self):
        return self._size

    @property
    def oldest_id(self) -> int:
        return self._pushed - self._size

    def push(self, transitions) -> None:
        if isinstance(transitions, Batch):
            states, actions, returns = transitions
        else:
            if len(transitions) == 0:
                return
            b = Batch.from_transitions(transitions)
            states, actions, returns = b
        states = np.asarray(states).reshape(-1, self.state_dim)
        k = len(states)
        if k == 0:
            return
        if self.prioritized:
            new_prio = self.priorities[:self._size].max() if self._size else 1.0
        # only the last `capacity` of an oversized push can survive
        if k > self.capacity:
            states, actions, returns = (states[-self.capacity:], np.asarray(actions)[-self.capacity:],
                                        np.asarray(returns)[-self.capacity:])
            self._pushed += k - self.capacity
            k = self.capacity
        slots = (self._pushed + np.arange(k)) % self.capacity
        self.states[slots] = states
        self.actions[slots] = actions
        self.returns[slots] = returns
        if self.prioritized:
            self.priorities[slots] = new_prio
        self._pushed += k
        self._size = min(self.capacity, self._size + k)

    def _slots(self, ids) -> np.ndarray:
        return np.asarray(ids) % self.capacity

    def _ids_from_positions(self, pos) -> np.ndarray:
        return self.oldest_id + np.asarray(pos)

    def _gather(self, ids) -> Batch:
        slots = self._slots(ids)
        return Batch(self.states[slots], self.actions[slots], self.returns[slots])

    def transitions(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        ids = self._ids_from_positions(np.arange(self._size))
        b = self._gather(ids)
        return [Transition(s, int(a), float(g)) for s, a, g in zip(*b)]

    def sample_uniform(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """``batch_size`` independent draws with replacement."""
        if self._size == 0:
            raise SamplingError("cannot sample from an empty buffer")
        pos = rng.integers(0, self._size, size=batch_size)
        return self._gather(self._ids_from_positions(pos))

    def sampling_probabilities(self, alpha: float) -> np.ndarray:
        """P(i) proportional to priority_i ** alpha, indexed oldest first."""
        ids = self._ids_from_positions(np.arange(self._size))
        p = self.priorities[self._slots(ids)] ** alpha
        return p / p.sum()

    def sample_prioritized(self, batch_size: int, alpha: float, beta: float,
                           rng: np.random.Generator):
        """Proportional prioritized sampling.

        Returns ``(batch, importance_weights, ids)`` where the weights are
        ``(N * P(i)) ** -beta`` divided by the largest such weight over the
        whole buffer.
        """
        if not self.prioritized:
            raise SamplingError("buffer was created without priorities")
        if self._size == 0:
            raise SamplingError("cannot sample from an empty buffer")
        probs = self.sampling_probabilities(alpha)
        cdf = np.cumsum(probs)
        u = rng.random(batch_size) * cdf[-1]
        pos = np.minimum(np.searchsorted(cdf, u, side="right"), self._size - 1)
        n = self._size
        max_w = (n * probs.min()) ** (-beta)
        weights = (n * probs[pos]) ** (-beta) / max_w
        ids = self._ids_from_positions(pos)
        return self._gather(ids), weights, ids

    def update_priorities(self, ids, errors) -> None:
        """priority <- |error| + 1e-6; ids that were evicted are ignored."""
        ids = np.asarray(ids)
        errors = np.abs(np.asarray(errors, dtype=float)) + PRIORITY_EPS
        live = (ids >= self.oldest_id) & (ids < self._pushed)
        self.priorities[self._slots(ids[live])] = errors[live]
