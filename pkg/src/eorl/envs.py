"""Bit-flipping and grid-navigation benchmark tasks.

Step rewards: every step that does not reach the goal costs a constant
penalty; the step that reaches the goal pays only the terminal reward.
Timeouts end the episode with no terminal reward.
"""
from __future__ import annotations

import enum
from typing import NamedTuple

import numpy as np


class EnvStateError(RuntimeError):
    pass


class DoneReason(str, enum.Enum):
    GOAL = "goal"
    TIMEOUT = "timeout"


class StepResult(NamedTuple):
    observation: np.ndarray
    reward: float
    done: bool
    done_reason: DoneReason | None


class BitFlipEnv:
    """m-bit string starting at all zeros; the goal is all ones.

    With ``subgoal=True`` the terminal reward is +10 only if the alternating
    pattern 0101... was visited on the way, +1 otherwise.  The visited flag
    is not part of the observation.
    """

    goal_reward = 10.0
    direct_goal_reward = 1.0

    def __init__(self, m: int, subgoal: bool = False):
        if m < 1:
            raise ValueError("m must be >= 1")
        self.m = int(m)
        self.subgoal_enabled = bool(subgoal)
        self.timeout = 5 * self.m
        self.step_penalty = 1.0 / (5 * self.m)
        self.subgoal_pattern = np.arange(self.m) % 2
        self.bits = np.zeros(self.m, dtype=np.int8)
        self.visited_subgoal = False
        self.steps_taken = 0
        self.done = True

    @property
    def n_actions(self) -> int:
        return self.m

    @property
    def obs_size(self) -> int:
        return self.m

    @property
    def max_terminal_reward(self) -> float:
        return self.goal_reward

    def goal_observation(self) -> np.ndarray:
        return np.ones(self.m)

    def observation(self) -> np.ndarray:
        return self.bits.astype(float)

    def reset(self, rng=None) -> np.ndarray:
        self.bits[:] = 0
        self.visited_subgoal = False
        self.steps_taken = 0
        self.done = False
        return self.observation()

    def step(self, action: int, rng=None) -> StepResult:
        if self.done:
            raise EnvStateError("step() called on a finished episode; call reset()")
        if not 0 <= action < self.m:
            raise ValueError(f"action {action} out of range for {self.m} bits")
        self.bits[action] ^= 1
        self.steps_taken += 1
        if self.subgoal_enabled and np.array_equal(self.bits, self.subgoal_pattern):
            self.visited_subgoal = True
        if self.bits.all():
            self.done = True
            if self.subgoal_enabled and not self.visited_subgoal:
                reward = self.direct_goal_reward
            else:
                reward = self.goal_reward
            return StepResult(self.observation(), reward, True, DoneReason.GOAL)
        if self.steps_taken >= self.timeout:
            self.done = True
            return StepResult(self.observation(), -self.step_penalty, True, DoneReason.TIMEOUT)
        return StepResult(self.observation(), -self.step_penalty, False, None)


class Subgoals(str, enum.Enum):
    SUB0 = "0"
    SUB1 = "1"
    SUB2_PLUS = "2+"
    SUB2_MINUS = "2-"


UP, DOWN, LEFT, RIGHT = range(4)
_MOVES = {UP: (0, 1), DOWN: (0, -1), LEFT: (-1, 0), RIGHT: (1, 0)}


def grid_terminal_reward(mode: Subgoals, visited_i1: bool, visited_i2: bool) -> float:
    mode = Subgoals(mode)
    if mode is Subgoals.SUB0:
        return 10.0
    if mode is Subgoals.SUB1:
        return 10.0 if visited_i1 else 1.0
    visited = int(visited_i1) + int(visited_i2)
    if visited == 2:
        return 10.0
    if visited == 0:
        return 1.0
    return 2.0 if mode is Subgoals.SUB2_PLUS else -1.0


class GridEnv:
    """m x m grid, start (1,1), goal (m,m), subgoals I1 = (1,m) and I2 = (m,1).

    Observation is ``[x/m, y/m, visited_I1, visited_I2]``.  With probability
    ``stochasticity`` the chosen action is replaced by one drawn uniformly
    from the four directions.  Moves off the grid leave the position as is.

    The timeout is ``timeout_factor`` times the optimal path length.  By
    default the direct path 2(m-1) is used for every mode; with
    ``timeout_path="subgoal"`` the two-subgoal modes use the path through
    both subgoals, 4(m-1).
    """

    goal_reward = 10.0

    def __init__(self, m: int, subgoals: Subgoals | str = Subgoals.SUB0,
                 stochasticity: float = 0.0, timeout_factor: int = 10,
                 timeout_path: str = "direct"):
        if m < 2:
            raise ValueError("grid side must be >= 2")
        if not 0.0 <= stochasticity <= 1.0:
            raise ValueError("stochasticity must lie in [0, 1]")
        if timeout_path not in ("direct", "subgoal"):
            raise ValueError("timeout_path must be 'direct' or 'subgoal'")
        self.m = int(m)
        self.mode = Subgoals(subgoals)
        self.stochasticity = float(stochasticity)
        path = 2 * (self.m - 1)
        if timeout_path == "subgoal" and self.mode in (Subgoals.SUB2_PLUS, Subgoals.SUB2_MINUS):
            path = 4 * (self.m - 1)
        self.timeout = timeout_factor * path
        self.step_penalty = 1.0 / self.timeout
        self.x = self.y = 1
        self.visited_i1 = self.visited_i2 = False
        self.steps_taken = 0
        self.last_action: int | None = None
        self.done = True

    n_actions = 4
    obs_size = 4

    @property
    def max_terminal_reward(self) -> float:
        return self.goal_reward

    def goal_observation(self) -> np.ndarray:
        """Terminal observation of the best-rewarded way of reaching the goal."""
        flags = {Subgoals.SUB0: (0.0, 0.0), Subgoals.SUB1: (1.0, 0.0)}.get(self.mode, (1.0, 1.0))
        return np.array([1.0, 1.0, *flags])

    def observation(self) -> np.ndarray:
        m = self.m
        return np.array([self.x / m, self.y / m, float(self.visited_i1), float(self.visited_i2)])

    def reset(self, rng=None) -> np.ndarray:
        self.x = self.y = 1
        self.visited_i1 = self.visited_i2 = False
        self.steps_taken = 0
        self.last_action = None
        self.done = False
        return self.observation()

    def step(self, action: int, rng: np.random.Generator | None = None) -> StepResult:
        if self.done:
            raise EnvStateError("step() called on a finished episode; call reset()")
        if action not in _MOVES:
            raise ValueError(f"action {action} is not one of UP, DOWN, LEFT, RIGHT")
        if self.stochasticity > 0.0:
            if rng is None:
                raise ValueError("a random generator is required when stochasticity > 0")
            if rng.random() < self.stochasticity:
                action = int(rng.integers(4))
        self.last_action = action
        dx, dy = _MOVES[action]
        m = self.m
        self.x = min(max(self.x + dx, 1), m)
        self.y = min(max(self.y + dy, 1), m)
        self.steps_taken += 1
        if (self.x, self.y) == (1, m):
            self.visited_i1 = True
        if (self.x, self.y) == (m, 1):
            self.visited_i2 = True
        if (self.x, self.y) == (m, m):
            self.done = True
            reward = grid_terminal_reward(self.mode, self.visited_i1, self.visited_i2)
            return StepResult(self.observation(), reward, True, DoneReason.GOAL)
        if self.steps_taken >= self.timeout:
            self.done = True
            return StepResult(self.observation(), -self.step_penalty, True, DoneReason.TIMEOUT)
        return StepResult(self.observation(), -self.step_penalty, False, None)


def make_env(kind: str, size: int, subgoals: str = "0", stochasticity: float = 0.0,
             timeout_path: str = "direct"):
    """Build an environment from the flat config keys."""
    if kind == "bitflip":
        if subgoals not in ("0", "1"):
            raise ValueError("bitflip supports subgoals=0 or 1")
        if stochasticity:
            raise ValueError("bitflip has no stochastic variant")
        return BitFlipEnv(size, subgoal=subgoals == "1")
    if kind == "grid":
        return GridEnv(size, Subgoals(subgoals), stochasticity, timeout_path=timeout_path)
    raise ValueError(f"unknown env kind {kind!r}")
