"""Loss-assignment strategies, including the lower-bound constructions.

Every adversary is batched: it holds one planted best action per episode and
``assign`` maps a block of uniforms of shape ``(batch, draws_per_round)`` to a
binary loss matrix of shape ``(batch, K)``.  The planted action is drawn from
the episode's adversary stream when the adversary is built, before any round.

The noise-adaptive adversaries read the realized noise of the current round
(never the learner's state).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .noise_channel import flip_probability
from .sim_core import ConfigError, LossMatrix


def gap_delta(eps: float, T: int, K: int) -> float:
    """Gap of the planted action under constant full-information noise."""
    if not eps > 0:
        raise ValueError(f"gap_delta needs eps > 0, got {eps!r}")
    return min(math.sqrt(math.log(K) / T) / (6.0 * eps), 0.5)


def variable_noise_theta(T: int, K: int) -> float:
    """Noise level below which the full-information adversary plants its gap."""
    return (math.log(K) / T) ** (1 / 3)


def bandit_gap_beta(eps: float, T: int, K: int, gamma: float = 1.0) -> float:
    if not eps > 0:
        raise ValueError(f"bandit_gap_beta needs eps > 0, got {eps!r}")
    return min(math.sqrt(gamma) / eps * math.sqrt(K / T), 1.0)


def bandit_variable_params(T: int, K: int, gamma: float = 1.0) -> tuple[float, float]:
    """(theta, beta) for the variable-noise bandit adversary; beta clamped to 1/2."""
    theta = (K / T) ** (1 / 3)
    beta = min(math.sqrt(gamma) * (K / T) ** (1 / 6), 0.5)
    return theta, beta


def _draw_planted(K: int, rngs: Sequence[np.random.Generator]) -> np.ndarray:
    return np.array([int(r.integers(K)) for r in rngs], dtype=np.int64)


def _planted_bernoulli(u, planted, planted_mean, other_mean):
    batch, K = u.shape
    means = np.full((batch, K), other_mean)
    means[np.arange(batch), planted] = planted_mean
    return (u < means).astype(np.int8)


class Adversary:
    """Base class; subclasses set ``draws_per_round`` and implement ``assign``."""

    name = "adversary"
    needs_noise = False
    draws_per_round = 0
    planted: Optional[np.ndarray] = None

    def __init__(self, K: int):
        self.K = K

    def assign(self, t: int, eps: Optional[np.ndarray], u: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _require_noise(self, eps):
        if eps is None:
            raise ConfigError(f"adversary {self.name!r} must observe the realized noise")


class FixedSequence(Adversary):
    """Replays a fixed loss matrix, cycling if the episode is longer."""

    name = "fixed"

    def __init__(self, losses):
        matrix = LossMatrix(losses)
        super().__init__(matrix.K)
        self.losses = matrix.entries

    def assign(self, t, eps, u):
        row = self.losses[t % self.losses.shape[0]]
        return np.broadcast_to(row, (u.shape[0], self.K)).copy()


class StochasticGap(Adversary):
    """Planted action ~ B(1/2 - delta), the others ~ B(1/2)."""

    name = "stochastic-gap"

    def __init__(self, K: int, delta: float, planted):
        if not 0.0 < delta <= 0.5:
            raise ConfigError(f"delta must lie in (0, 1/2], got {delta!r}")
        super().__init__(K)
        self.delta = delta
        self.planted = np.asarray(planted, dtype=np.int64)
        self.draws_per_round = K

    def assign(self, t, eps, u):
        return _planted_bernoulli(u, self.planted, 0.5 - self.delta, 0.5)


class VariableNoiseFullInfo(Adversary):
    """All-zero losses when eps_t >= theta; otherwise a gap on the planted action.

    ``eps_t`` is read from the first coordinate, which under the shared-uniform
    noise model is the common value.
    """

    name = "variable-noise"
    needs_noise = True

    def __init__(self, K: int, theta: float, planted, gap: float = 1 / 6):
        if not 0.0 < gap <= 0.5:
            raise ConfigError(f"gap must lie in (0, 1/2], got {gap!r}")
        if not 0.0 < theta <= 1.0:
            raise ConfigError(f"theta must lie in (0, 1], got {theta!r}")
        super().__init__(K)
        self.theta = theta
        self.gap = gap
        self.planted = np.asarray(planted, dtype=np.int64)
        self.draws_per_round = K

    def assign(self, t, eps, u):
        self._require_noise(eps)
        losses = _planted_bernoulli(u, self.planted, 0.5 - self.gap, 0.5)
        losses[eps[:, 0] >= self.theta] = 0
        return losses


class UnknownNoiseIndist(Adversary):
    """Two actions whose noisy feedback is identically distributed.

    The planted action has loss ~ B(1/4); the other has loss 0 if its realized
    flip probability is below 1/4 and 1 otherwise.  Under uniform noise both
    feedback bits are B(3/8).
    """

    name = "unknown-noise"
    needs_noise = True

    def __init__(self, planted, K: int = 2):
        if K != 2:
            raise ConfigError(f"the indistinguishable adversary is defined for K=2, got K={K}")
        super().__init__(2)
        self.planted = np.asarray(planted, dtype=np.int64)
        self.draws_per_round = 1

    def assign(self, t, eps, u):
        self._require_noise(eps)
        rows = np.arange(u.shape[0])
        worse = 1 - self.planted
        losses = np.empty((u.shape[0], 2), dtype=np.int8)
        losses[rows, self.planted] = u[:, 0] < 0.25
        losses[rows, worse] = flip_probability(eps[rows, worse]) >= 0.25
        return losses


class BanditGap(Adversary):
    """Planted action ~ B((1 - beta)/2), the others ~ B(1/2)."""

    name = "bandit-gap"

    def __init__(self, K: int, beta: float, planted):
        if not 0.0 < beta <= 1.0:
            raise ConfigError(f"beta must lie in (0, 1], got {beta!r}")
        super().__init__(K)
        self.beta = beta
        self.planted = np.asarray(planted, dtype=np.int64)
        self.draws_per_round = K

    def assign(self, t, eps, u):
        return _planted_bernoulli(u, self.planted, (1.0 - self.beta) / 2.0, 0.5)


class BanditVariableNoise(Adversary):
    """All-zero when eps_t >= theta, else planted ~ B(1/2 - beta), others B(1/2)."""

    name = "bandit-variable-noise"
    needs_noise = True

    def __init__(self, K: int, theta: float, beta: float, planted):
        if not 0.0 < beta <= 0.5:
            raise ConfigError(f"beta must lie in (0, 1/2], got {beta!r}")
        if not 0.0 < theta <= 1.0:
            raise ConfigError(f"theta must lie in (0, 1], got {theta!r}")
        super().__init__(K)
        self.theta = theta
        self.beta = beta
        self.planted = np.asarray(planted, dtype=np.int64)
        self.draws_per_round = K

    def assign(self, t, eps, u):
        self._require_noise(eps)
        losses = _planted_bernoulli(u, self.planted, 0.5 - self.beta, 0.5)
        losses[eps[:, 0] >= self.theta] = 0
        return losses


def assign_losses(adv: Adversary, t: int, realized_noise, rng) -> np.ndarray:
    """Single-episode convenience wrapper returning one loss vector.

    ``rng`` is a generator (the adversary's stream) or the round's uniforms.
    """
    eps = None if realized_noise is None else np.atleast_2d(realized_noise)
    if adv.needs_noise and eps is None:
        raise ConfigError(f"adversary {adv.name!r} must observe the realized noise")
    u = rng.random(adv.draws_per_round) if isinstance(rng, np.random.Generator) else rng
    return adv.assign(t, eps, np.atleast_2d(u))[0]


def planted_best(adv: Adversary):
    """The planted best action (an int for a single episode, else an array)."""
    if adv.planted is None:
        raise ConfigError(f"adversary {adv.name!r} has no planted action")
    return int(adv.planted[0]) if adv.planted.shape[0] == 1 else adv.planted.copy()


@dataclass(frozen=True)
class AdversarySpec:
    """Adversary name and parameters, bound to episodes by :meth:`build`."""

    name: str
    delta: Optional[float] = None
    theta: Optional[float] = None
    gap: float = 1 / 6
    beta: Optional[float] = None
    losses: Optional[tuple] = None

    def build(self, K: int, rngs: Sequence[np.random.Generator]) -> Adversary:
        name = self.name
        if name == "fixed":
            return FixedSequence(self.losses)
        if name == "zero":
            return FixedSequence(np.zeros((1, K), dtype=np.int8))
        if name == "unknown-noise":
            return UnknownNoiseIndist(_draw_planted(2, rngs), K)
        planted = _draw_planted(K, rngs)
        if name == "stochastic-gap":
            return StochasticGap(K, self.delta, planted)
        if name == "variable-noise":
            return VariableNoiseFullInfo(K, self.theta, planted, self.gap)
        if name == "bandit-gap":
            return BanditGap(K, self.beta, planted)
        if name == "bandit-variable-noise":
            return BanditVariableNoise(K, self.theta, self.beta, planted)
        raise ConfigError(f"unknown adversary {name!r}")

    @property
    def needs_noise(self) -> bool:
        return self.name in ("variable-noise", "unknown-noise", "bandit-variable-noise")


ADVERSARIES = (
    "zero",
    "fixed",
    "stochastic-gap",
    "variable-noise",
    "unknown-noise",
    "bandit-gap",
    "bandit-variable-noise",
)
