"""Evolutionary operators, fitness bookkeeping and operator scheduling."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .nn import QNetwork


class Scheme(str, enum.Enum):
    FIXED = "fixed"
    UNIFORM = "uniform"
    ACTIVE = "active"


class EvoKind(str, enum.Enum):
    RANDOM_CROSSOVER = "random_crossover"
    LINEAR_CROSSOVER = "linear_crossover"
    MUTATION = "mutation"


# epsilon at or below which the active scheme switches multipliers
ACTIVE_EPSILON = 0.05
ACTIVE_CAP = 5.0
NEAR_BEST = 0.05


@dataclass(frozen=True)
class EvoConfig:
    n: int = 8
    kappa: float = 0.0
    mu: float = 0.0
    sigma: float = 0.25
    q: float = 0.9
    scheme: Scheme = Scheme.UNIFORM

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.n < 1:
            raise ValueError("population size must be >= 1")
        if not (0 <= self.kappa <= 1 and 0 <= self.mu <= 1):
            raise ValueError("kappa and mu must lie in [0, 1]")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not 0 <= self.q < 1:
            raise ValueError("q must lie in [0, 1)")


class EvoEvent(NamedTuple):
    kind: EvoKind
    child: int
    parents: tuple[int, ...]
    tau: float
    child_fitness: float


@dataclass
class Population:
    policies: list[QNetwork]
    fitness: np.ndarray = None
    fresh_child: int | None = None
    reset_point: int = 0
    best_observed_return: float = -np.inf

    def __post_init__(self):
        if self.fitness is None:
            self.fitness = np.zeros(len(self.policies))
        self.fitness = np.asarray(self.fitness, dtype=float)
        if len(self.fitness) != len(self.policies):
            raise ValueError("one fitness value per policy required")

    @property
    def n(self) -> int:
        return len(self.policies)


def cross_ratio(a_i: float, a_j: float) -> float:
    """First component of softmax(a_i, a_j)."""
    top = max(a_i, a_j)
    ei, ej = np.exp(a_i - top), np.exp(a_j - top)
    return float(ei / (ei + ej))


def _noise(rng, sigma, size):
    return rng.normal(1.0, sigma, size=size)


def random_crossover(theta_i, theta_j, a_i, a_j, sigma, rng):
    """Each parameter copied from parent i w.p. tau (else from j), times N(1, sigma)."""
    theta_i, theta_j = np.asarray(theta_i), np.asarray(theta_j)
    if theta_i.shape != theta_j.shape:
        raise ValueError("parents must have the same number of parameters")
    tau = cross_ratio(a_i, a_j)
    from_i = rng.random(theta_i.shape) < tau
    src = np.where(from_i, theta_i, theta_j)
    return (src * _noise(rng, sigma, theta_i.shape)).astype(theta_i.dtype)


def linear_crossover(theta_i, theta_j, a_i, a_j, sigma, rng):
    """tau-weighted blend of the parents times N(1, sigma) per parameter."""
    theta_i, theta_j = np.asarray(theta_i), np.asarray(theta_j)
    if theta_i.shape != theta_j.shape:
        raise ValueError("parents must have the same number of parameters")
    tau = cross_ratio(a_i, a_j)
    blend = theta_j + tau * (theta_i - theta_j)  # exact when the parents coincide
    return (blend * _noise(rng, sigma, theta_i.shape)).astype(theta_i.dtype)


def mutate(theta, sigma, rng):
    theta = np.asarray(theta)
    return (theta * _noise(rng, sigma, theta.shape)).astype(theta.dtype)


def update_fitness(a_i: float, episode_return: float, q: float) -> float:
    return q * a_i + (1.0 - q) * episode_return


def _argmax_ties(values) -> np.ndarray:
    values = np.asarray(values)
    return np.flatnonzero(values == values.max())


def select_policy(pop: Population, epsilon: float, rng: np.random.Generator) -> int:
    """Pick the policy that runs the next episode.

    A freshly generated child always runs next.  Otherwise a uniformly
    random policy w.p. epsilon, else a uniform pick among the fittest.
    """
    if pop.fresh_child is not None:
        k, pop.fresh_child = pop.fresh_child, None
        return k
    if rng.random() < epsilon:
        return int(rng.integers(pop.n))
    best = _argmax_ties(pop.fitness)
    if len(best) == 1:
        return int(best[0])
    return int(best[rng.integers(len(best))])


def scheme_multiplier(scheme: Scheme, e: int, total: int, reset_point: int, n: int,
                      epsilon: float) -> float:
    """Multiplier applied to kappa and mu at the end of episode e (1-based)."""
    linear = 1.0 - e / total
    scheme = Scheme(scheme)
    if scheme is Scheme.ACTIVE and epsilon <= ACTIVE_EPSILON:
        return float(min(max((e - reset_point) / n, linear), ACTIVE_CAP))
    return linear


def near_best_threshold(best: float) -> float:
    # 95% of best for positive best; stays below best when best is negative
    return best - NEAR_BEST * abs(best)


def update_reset_point(pop: Population, e: int, episode_return: float) -> None:
    pop.best_observed_return = max(pop.best_observed_return, episode_return)
    if episode_return >= near_best_threshold(pop.best_observed_return):
        pop.reset_point = e


def replacement_target(fitness) -> int:
    """Index of the weakest policy, lowest index on ties."""
    return int(np.argmin(fitness))


def parent_pool(fitness, exclude: int) -> list[int]:
    """Top half of the population by fitness, never containing ``exclude``."""
    n = len(fitness)
    order = [i for i in np.argsort(-np.asarray(fitness), kind="stable") if i != exclude]
    return [int(i) for i in order[:max(1, n // 2)]]


def maybe_evolve(pop: Population, config: EvoConfig, e: int, total: int, epsilon: float,
                 rng: np.random.Generator) -> EvoEvent | None:
    """Possibly replace the weakest policy with an offspring of the fittest half.

    Crossover fires w.p. kappa * f; only if it does not, mutation fires
    w.p. mu * f, where f is the scheme multiplier.  At most one event per
    call.
    """
    if pop.n < 2 or (config.kappa == 0 and config.mu == 0):
        return None
    f = scheme_multiplier(config.scheme, e, total, pop.reset_point, pop.n, epsilon)
    k = replacement_target(pop.fitness)
    pool = parent_pool(pop.fitness, k)
    kind = None
    if rng.random() < config.kappa * f:
        if len(pool) >= 2:
            kind = EvoKind.RANDOM_CROSSOVER if rng.random() < 0.5 else EvoKind.LINEAR_CROSSOVER
        else:
            kind = EvoKind.MUTATION
    elif rng.random() < config.mu * f:
        kind = EvoKind.MUTATION
    if kind is None:
        return None

    A = pop.fitness
    if kind is EvoKind.MUTATION:
        i = pool[int(rng.integers(len(pool)))]
        child = mutate(pop.policies[i].params, config.sigma, rng)
        parents, tau, child_fitness = (i,), 1.0, float(A[i])
    else:
        i, j = (int(x) for x in rng.choice(pool, size=2, replace=False))
        op = random_crossover if kind is EvoKind.RANDOM_CROSSOVER else linear_crossover
        child = op(pop.policies[i].params, pop.policies[j].params, A[i], A[j], config.sigma, rng)
        tau = cross_ratio(A[i], A[j])
        parents, child_fitness = (i, j), tau * A[i] + (1.0 - tau) * A[j]

    pop.policies[k].params[:] = child
    pop.fitness[k] = child_fitness
    pop.fresh_child = k
    if config.scheme is Scheme.ACTIVE:
        pop.reset_point = e
    return EvoEvent(kind, k, parents, tau, float(child_fitness))
