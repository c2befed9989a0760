"""Episode execution, the population training loop, and the baselines.

Every algorithm lets exactly one policy act per episode and regresses
Q(s, a) onto undiscounted Monte-Carlo returns from a replay buffer.

Randomness is split into independent streams (network init, action
choice, environment noise, minibatch sampling, evolution/selection) so
that switching a component off does not shift the draws of the others.
In particular a population of one with no evolution reproduces the
vanilla DQN run exactly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .evolution import (EvoConfig, Population, Scheme, maybe_evolve, parent_pool,
                        select_policy, update_fitness, update_reset_point)
from .nn import Batch, MlpSpec, QNetwork, forward, init_network, make_optimizer, train_step
from .replay import ReplayBuffer, suffix_sums


class Streams(NamedTuple):
    init: np.random.Generator
    action: np.random.Generator
    env: np.random.Generator
    sample: np.random.Generator
    evo: np.random.Generator


def make_streams(seed) -> Streams:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return Streams(*(np.random.default_rng(s) for s in ss.spawn(5)))


@dataclass(frozen=True)
class EpsilonSchedule:
    """epsilon_e = max(floor, initial * decay**e) for 0-based episode e."""

    decay: float
    initial: float = 1.0
    floor: float = 0.0

    def __call__(self, episode: int) -> float:
        return max(self.floor, self.initial * self.decay ** episode)


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 400
    decay: float = 0.99
    batch_size: int = 4096
    batches_per_episode: int = 2
    learning_rate: float = 0.01
    optimizer: str = "adam"
    buffer_factor: int = 100
    hidden_sizes: tuple[int, ...] = (32, 8)
    dtype: str = "float32"
    per_alpha: float = 0.6
    per_beta_start: float = 0.4
    per_beta_end: float = 1.0
    cbe_beta: float = 1.0
    goal_buffer_size: int = 8
    cem_replace_prob: float = 0.5


class LogRow(NamedTuple):
    episode: int
    policy_index: int
    episode_return: float
    epsilon: float
    evo_event: str


@dataclass
class Episode:
    states: np.ndarray  # network inputs, goal appended for goal-conditioned policies
    actions: np.ndarray
    rewards: np.ndarray  # terminal reward already folded into the last step
    final_observation: np.ndarray
    done_reason: object

    @property
    def episode_return(self) -> float:
        return float(np.sum(self.rewards))

    @property
    def trajectory(self) -> list[tuple]:
        return list(zip(self.states, self.actions.tolist(), self.rewards.tolist()))

    def __len__(self):
        return len(self.actions)

    def batch(self, rewards=None) -> Batch:
        r = self.rewards if rewards is None else rewards
        return Batch(self.states, self.actions, suffix_sums(r))


def epsilon_greedy_action(net: QNetwork, state, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform random action w.p. epsilon, else argmax Q (lowest index on ties)."""
    if rng.random() < epsilon:
        return int(rng.integers(net.spec.output_size))
    return int(np.argmax(forward(net, state)))


def run_episode(net: QNetwork, env, epsilon: float, rng: np.random.Generator,
                env_rng: np.random.Generator | None = None, goal=None) -> Episode:
    env_rng = rng if env_rng is None else env_rng
    obs = env.reset(env_rng)
    states, actions, rewards = [], [], []
    while True:
        x = obs if goal is None else np.concatenate([obs, goal])
        a = epsilon_greedy_action(net, x, epsilon, rng)
        res = env.step(a, env_rng)
        states.append(x)
        actions.append(a)
        rewards.append(res.reward)
        if res.done:
            break
        obs = res.observation
    return Episode(np.array(states), np.array(actions, dtype=np.int64), np.array(rewards),
                   res.observation, res.done_reason)


def _network_spec(env, cfg: TrainConfig, input_size: int | None = None) -> MlpSpec:
    return MlpSpec(input_size or env.obs_size, cfg.hidden_sizes, env.n_actions)


def _optimizers(nets, cfg: TrainConfig):
    return [make_optimizer(cfg.optimizer, net.n_params, cfg.learning_rate) for net in nets]


def _train_uniform(nets, optimizers, buffer: ReplayBuffer, cfg: TrainConfig, rng, episode: int):
    for net, opt in zip(nets, optimizers):
        for _ in range(cfg.batches_per_episode):
            train_step(net, buffer.sample_uniform(cfg.batch_size, rng), opt, episode=episode)


# ---------------------------------------------------------------------------
# population training loop


def eorl_train(env, cfg: TrainConfig, evo: EvoConfig, seed,
               on_episode: Callable[[LogRow], None] | None = None) -> list[LogRow]:
    """n Q-networks sharing one buffer; one of them acts per episode.

    Per episode: pick a policy, run it, store its Monte-Carlo transitions,
    train every policy on its own minibatches, update the runner's fitness
    and the reset point, then maybe replace the weakest policy.
    """
    streams = make_streams(seed)
    spec = _network_spec(env, cfg)
    pop = Population([init_network(spec, streams.init, cfg.dtype) for _ in range(evo.n)])
    opts = _optimizers(pop.policies, cfg)
    buffer = ReplayBuffer(cfg.buffer_factor * env.timeout, env.obs_size, dtype=cfg.dtype)
    schedule = EpsilonSchedule(cfg.decay)
    total = cfg.episodes
    log = []
    for e in range(1, total + 1):
        eps = schedule(e - 1)
        k = select_policy(pop, eps, streams.evo)
        ep = run_episode(pop.policies[k], env, eps, streams.action, streams.env)
        buffer.push(ep.batch())
        _train_uniform(pop.policies, opts, buffer, cfg, streams.sample, e)
        ret = ep.episode_return
        pop.fitness[k] = update_fitness(pop.fitness[k], ret, evo.q)
        update_reset_point(pop, e, ret)
        event = maybe_evolve(pop, evo, e, total, eps, streams.evo)
        if event:
            opts[event.child].reset()
        row = LogRow(e, k, ret, eps, event.kind.value if event else "")
        log.append(row)
        if on_episode:
            on_episode(row)
    return log


# ---------------------------------------------------------------------------
# single-policy baselines


class VisitCounts:
    """Lifetime visit counts N(s, a) over exact (rounded) observations."""

    def __init__(self):
        self.counts: dict = {}

    @staticmethod
    def key(state, action: int):
        return np.round(np.asarray(state, dtype=float), 6).tobytes(), int(action)

    def __getitem__(self, sa) -> int:
        return self.counts.get(self.key(*sa), 0)

    def bonus_and_increment(self, state, action: int, beta: float = 1.0) -> float:
        key = self.key(state, action)
        n = self.counts.get(key, 0)
        self.counts[key] = n + 1
        return beta / np.sqrt(1.0 + n)


def cbe_augment(reward: float, state, action: int, counts: VisitCounts, beta: float = 1.0) -> float:
    """r + beta / sqrt(1 + N(s, a)); N(s, a) is incremented afterwards."""
    return reward + counts.bonus_and_increment(state, action, beta)


def per_beta(e: int, total: int, start: float = 0.4, end: float = 1.0) -> float:
    """Importance-sampling exponent, linear from start (first episode) to end (last)."""
    if total <= 1:
        return end
    return start + (end - start) * (e - 1) / (total - 1)


def dqn_train(env, cfg: TrainConfig, seed, variant: str = "van",
              on_episode: Callable[[LogRow], None] | None = None) -> list[LogRow]:
    """Single Q-network baselines: ``van`` (vanilla), ``cbe`` (count bonus), ``per``."""
    if variant not in ("van", "cbe", "per"):
        raise ValueError(f"unknown single-policy variant {variant!r}")
    streams = make_streams(seed)
    net = init_network(_network_spec(env, cfg), streams.init, cfg.dtype)
    opts = _optimizers([net], cfg)
    buffer = ReplayBuffer(cfg.buffer_factor * env.timeout, env.obs_size,
                          prioritized=variant == "per", dtype=cfg.dtype)
    counts = VisitCounts()
    schedule = EpsilonSchedule(cfg.decay)
    log = []
    for e in range(1, cfg.episodes + 1):
        eps = schedule(e - 1)
        ep = run_episode(net, env, eps, streams.action, streams.env)
        if variant == "cbe":
            shaped = np.array([cbe_augment(r, s, a, counts, cfg.cbe_beta)
                               for s, a, r in ep.trajectory])
            buffer.push(ep.batch(shaped))
        else:
            buffer.push(ep.batch())
        if variant == "per":
            beta = per_beta(e, cfg.episodes, cfg.per_beta_start, cfg.per_beta_end)
            for _ in range(cfg.batches_per_episode):
                batch, weights, ids = buffer.sample_prioritized(
                    cfg.batch_size, cfg.per_alpha, beta, streams.sample)
                _, residuals = train_step(net, batch, opts[0], weights, episode=e)
                buffer.update_priorities(ids, residuals)
        else:
            _train_uniform([net], opts, buffer, cfg, streams.sample, e)
        row = LogRow(e, 0, ep.episode_return, eps, "")
        log.append(row)
        if on_episode:
            on_episode(row)
    return log


class GoalBuffer:
    """Terminal observations of the best-returning episodes seen so far."""

    def __init__(self, size: int = 8):
        self.size = size
        self.entries: list[tuple[np.ndarray, float]] = []

    def __len__(self):
        return len(self.entries)

    def add(self, terminal_state, episode_return: float) -> bool:
        entry = (np.array(terminal_state, dtype=float), float(episode_return))
        if len(self.entries) < self.size:
            self.entries.append(entry)
            return True
        worst = min(range(len(self.entries)), key=lambda i: self.entries[i][1])
        if episode_return > self.entries[worst][1]:
            self.entries[worst] = entry
            return True
        return False

    def sample(self, count: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.integers(len(self.entries), size=count)
        return np.array([self.entries[i][0] for i in idx])


def her_relabel(ep: Episode, goals: np.ndarray, true_goal, step_penalty: float,
                goal_reward: float) -> Batch:
    """One relabeled copy of every transition of ``ep``, transition t paired with goals[t].

    When goals[t] is the true goal the real rewards are kept.  Otherwise the
    return is recomputed as if goals[t] were the target: step penalties up
    to the first later step whose successor observation equals the goal,
    plus ``goal_reward`` there, or penalties to the end of the episode if
    the goal is never reached from t on.
    """
    true_goal = np.asarray(true_goal, dtype=float)
    d = len(true_goal)
    obs = ep.states[:, :d]
    next_obs = np.vstack([obs[1:], ep.final_observation[None, :]])
    true_returns = suffix_sums(ep.rewards)
    T = len(ep)
    returns = np.empty(T)
    for t in range(T):
        g = goals[t]
        if np.array_equal(g, true_goal):
            returns[t] = true_returns[t]
            continue
        hits = np.flatnonzero(np.all(next_obs[t:] == g, axis=1))
        if len(hits):
            returns[t] = goal_reward - step_penalty * hits[0]
        else:
            returns[t] = -step_penalty * (T - t)
    states = np.hstack([obs, goals])
    return Batch(states, ep.actions, returns)


def her_train(env, cfg: TrainConfig, seed,
              on_episode: Callable[[LogRow], None] | None = None) -> list[LogRow]:
    """Goal-conditioned single policy; input is observation followed by goal."""
    streams = make_streams(seed)
    d = env.obs_size
    net = init_network(_network_spec(env, cfg, 2 * d), streams.init, cfg.dtype)
    opts = _optimizers([net], cfg)
    buffer = ReplayBuffer(cfg.buffer_factor * env.timeout, 2 * d, dtype=cfg.dtype)
    goal_buffer = GoalBuffer(cfg.goal_buffer_size)
    true_goal = env.goal_observation()
    schedule = EpsilonSchedule(cfg.decay)
    log = []
    for e in range(1, cfg.episodes + 1):
        eps = schedule(e - 1)
        ep = run_episode(net, env, eps, streams.action, streams.env, goal=true_goal)
        buffer.push(ep.batch())
        if len(goal_buffer):
            goals = goal_buffer.sample(len(ep), streams.sample)
        else:
            goals = np.tile(true_goal, (len(ep), 1))
        buffer.push(her_relabel(ep, goals, true_goal, env.step_penalty, env.max_terminal_reward))
        goal_buffer.add(ep.final_observation, ep.episode_return)
        _train_uniform([net], opts, buffer, cfg, streams.sample, e)
        row = LogRow(e, 0, ep.episode_return, eps, "")
        log.append(row)
        if on_episode:
            on_episode(row)
    return log


# ---------------------------------------------------------------------------
# CEM-RL adapted to one evaluation per episode


def cem_should_replace(episode_return: float, fitness, rng: np.random.Generator,
                       prob: float = 0.5) -> bool:
    """Below-median outcome, then a coin flip with probability ``prob``."""
    if episode_return < np.median(fitness):
        return bool(rng.random() < prob)
    return False


def cem_sample(elite_params: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw from the diagonal Gaussian fitted to the elite parameter vectors."""
    elite_params = np.asarray(elite_params)
    mean = elite_params.mean(axis=0)
    std = elite_params.std(axis=0)
    return (mean + std * rng.standard_normal(mean.shape)).astype(elite_params.dtype)


def cem_replace(nets, fitness: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    """Resample policy k from the elite Gaussian; its fitness becomes the elite mean."""
    elite = parent_pool(fitness, k)
    nets[k].params[:] = cem_sample(np.array([nets[i].params for i in elite]), rng)
    fitness[k] = float(np.mean(fitness[elite]))
    return elite


def cemrl_train(env, cfg: TrainConfig, evo: EvoConfig, seed,
                on_episode: Callable[[LogRow], None] | None = None) -> list[LogRow]:
    streams = make_streams(seed)
    spec = _network_spec(env, cfg)
    nets = [init_network(spec, streams.init, cfg.dtype) for _ in range(evo.n)]
    opts = _optimizers(nets, cfg)
    fitness = np.zeros(evo.n)
    in_rl_pool = [True] * evo.n
    buffer = ReplayBuffer(cfg.buffer_factor * env.timeout, env.obs_size, dtype=cfg.dtype)
    schedule = EpsilonSchedule(cfg.decay)
    log = []
    for e in range(1, cfg.episodes + 1):
        eps = schedule(e - 1)
        k = (e - 1) % evo.n
        ep = run_episode(nets[k], env, eps, streams.action, streams.env)
        buffer.push(ep.batch())
        ret = ep.episode_return
        fitness[k] = update_fitness(fitness[k], ret, evo.q)
        event = ""
        if evo.n > 1 and cem_should_replace(ret, fitness, streams.evo, cfg.cem_replace_prob):
            cem_replace(nets, fitness, k, streams.evo)
            opts[k].reset()
            in_rl_pool[k] = False
            event = "cem"
        else:
            in_rl_pool[k] = True
        pool = [i for i in range(evo.n) if in_rl_pool[i]]
        _train_uniform([nets[i] for i in pool], [opts[i] for i in pool], buffer, cfg,
                       streams.sample, e)
        row = LogRow(e, k, ret, eps, event)
        log.append(row)
        if on_episode:
            on_episode(row)
    return log


# ---------------------------------------------------------------------------
# algorithm registry

EORL_VARIANTS = {
    "EORL-FIX": (Scheme.FIXED, 0.0, 0.0),
    "EORL-05-00": (Scheme.UNIFORM, 0.05, 0.0),
    "EORL-05-05": (Scheme.UNIFORM, 0.05, 0.05),
    "EORL-10-05": (Scheme.UNIFORM, 0.10, 0.05),
    "EORL-ACTV": (Scheme.ACTIVE, 0.05, 0.05),
}
BASELINES = ("VAN", "CBE", "HER", "PER", "CEMRL")
ALGORITHMS = (*BASELINES, *EORL_VARIANTS)
# table column order; CER is a placeholder column with no implementation
TABLE_COLUMNS = ("VAN", "CER", "HER", "PER", "CBE", "EORL-FIX", "CEMRL",
                 "EORL-05-00", "EORL-05-05", "EORL-10-05", "EORL-ACTV")


def evo_config_for(algo: str, n: int = 8, sigma: float = 0.25, q: float = 0.9) -> EvoConfig:
    if algo in EORL_VARIANTS:
        scheme, kappa, mu = EORL_VARIANTS[algo]
        return EvoConfig(n=n, kappa=kappa, mu=mu, sigma=sigma, q=q, scheme=scheme)
    if algo == "CEMRL":
        return EvoConfig(n=n, sigma=sigma, q=q, scheme=Scheme.FIXED)
    return EvoConfig(n=1, sigma=sigma, q=q, scheme=Scheme.FIXED)


def train(algo: str, env, cfg: TrainConfig, seed, n: int = 8,
          on_episode: Callable[[LogRow], None] | None = None) -> list[LogRow]:
    """Run one training run of algorithm ``algo`` and return its per-episode log."""
    if algo in EORL_VARIANTS:
        return eorl_train(env, cfg, evo_config_for(algo, n), seed, on_episode)
    if algo == "CEMRL":
        return cemrl_train(env, cfg, evo_config_for(algo, n), seed, on_episode)
    if algo == "HER":
        return her_train(env, cfg, seed, on_episode)
    if algo in ("VAN", "CBE", "PER"):
        return dqn_train(env, cfg, seed, algo.lower(), on_episode)
    raise ValueError(f"unknown algorithm {algo!r}; expected one of {', '.join(ALGORITHMS)}")
