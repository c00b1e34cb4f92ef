"""Exponential-weights learners and the non-EWS baselines.

Weights live in the log domain: ``logW_i`` starts at 0 and each update
subtracts ``eta * estimate_i``.  The runtime learner classes hold a batch of
independent episodes (leading axis) and are driven by the round engine in
:mod:`noisyol.sim_core`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import estimators as est
from .noise_channel import MarginalDist, TruncExp, Uniform01, g_integrand_bound

SETTINGS = ("full-const", "full-var", "bandit-const", "bandit-var")


class EwsHypothesisError(ArithmeticError):
    """An update had -eta * estimate > 1, outside the regime of the EWS inequality."""


@dataclass(frozen=True)
class EwsState:
    logW: np.ndarray
    eta: float
    round: int = 0

    @classmethod
    def fresh(cls, K: int, eta: float, batch: Optional[int] = None) -> "EwsState":
        if not eta > 0:
            raise ValueError(f"eta must be positive, got {eta!r}")
        shape = (K,) if batch is None else (batch, K)
        return cls(np.zeros(shape), float(eta), 0)


def select_distribution(state: EwsState) -> np.ndarray:
    """q_i = exp(logW_i - logsumexp(logW)) along the last axis."""
    logW = state.logW
    shifted = np.exp(logW - logW.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def update(state: EwsState, estimates, *, check: bool = True, estimator: str = "?") -> EwsState:
    """Return the state after ``logW -= eta * estimates``.

    With ``check`` set, raises :class:`EwsHypothesisError` if any
    ``-eta * estimate`` exceeds 1.
    """
    estimates = np.asarray(estimates, dtype=float)
    if check:
        worst = float(np.max(-state.eta * estimates))
        if worst > 1.0 + 1e-12:
            raise EwsHypothesisError(
                f"estimator {estimator!r} with eta={state.eta!r} gave -eta*estimate={worst!r} > 1"
            )
    return EwsState(state.logW - state.eta * estimates, state.eta, state.round + 1)


# ---------------------------------------------------------------------------
# Default learning rates and thresholds
# ---------------------------------------------------------------------------


def _check_tk(T, K):
    if T < 2 or K < 2:
        raise ValueError(f"need T >= 2 and K >= 2, got T={T}, K={K}")


def default_theta(setting: str, T: int, K: int, dist: Optional[MarginalDist] = None) -> float:
    _check_tk(T, K)
    lnK = math.log(K)
    if setting == "full-var":
        if dist is None or isinstance(dist, Uniform01):
            return (lnK / T) ** (1 / 3)
        if isinstance(dist, TruncExp):
            return (lnK / T) ** (1 / 3) / dist.lam
        a = dist.alpha
        return (2.0 / a) ** (1.0 / (1.0 + a)) * (lnK / T) ** (1.0 / (2.0 * (1.0 + a)))
    if setting == "bandit-var":
        return K ** (1 / 3) * lnK ** (1 / 3) / T ** (1 / 3)
    raise ValueError(f"no default threshold for setting {setting!r}")


def default_eta(
    setting: str,
    eps: Optional[float] = None,
    theta: Optional[float] = None,
    T: int = 0,
    K: int = 0,
    dist: Optional[MarginalDist] = None,
) -> float:
    """Learning rate the matching upper bound is proved with.

    For variable noise with a non-uniform marginal the rate balances the
    general bound: eta = sqrt(ln K / (T g(theta))), with g replaced by its
    analytic upper bound.
    """
    _check_tk(T, K)
    lnK = math.log(K)
    if setting in ("full-const", "bandit-const"):
        if eps is None or not eps > 0:
            raise ValueError(f"constant-noise rate needs eps > 0, got {eps!r}")
        if setting == "full-const":
            return eps * math.sqrt(lnK / T)
        return eps * math.sqrt(lnK / (T * K))
    if setting == "full-var":
        if dist is None or isinstance(dist, Uniform01):
            return (lnK / T) ** (2 / 3)
        if theta is None:
            theta = default_theta(setting, T, K, dist)
        return math.sqrt(lnK / (T * g_integrand_bound(dist, theta)))
    if setting == "bandit-var":
        return lnK ** (2 / 3) / (K ** (1 / 3) * T ** (2 / 3))
    raise ValueError(f"unknown setting {setting!r}")


# ---------------------------------------------------------------------------
# Learner kinds and their batched runtimes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Ews:
    estimator: est.EstimatorKind
    eta: float
    strict: bool = False

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"Ews needs eta > 0, got {self.eta!r}")

    @property
    def label(self) -> str:
        return f"ews-{self.estimator.name}"

    def start(self, batch: int, K: int) -> "EwsRuntime":
        return EwsRuntime(self, batch, K)


@dataclass(frozen=True)
class FollowNoisyLeader:
    label = "follow-noisy-leader"

    def start(self, batch: int, K: int) -> "LeaderRuntime":
        return LeaderRuntime(batch, K)


@dataclass(frozen=True)
class UniformRandom:
    label = "uniform"

    def start(self, batch: int, K: int) -> "UniformRuntime":
        return UniformRuntime(batch, K)


LearnerKind = Union[Ews, FollowNoisyLeader, UniformRandom]


class EwsRuntime:
    """A batch of EWS learners sharing one estimator and learning rate.

    Besides the weights it accumulates the three sums of the EWS inequality
    (learner's estimated loss, per-action estimated loss, weighted second
    moment) so every finished episode can report its margin.
    """

    def __init__(self, kind: Ews, batch: int, K: int):
        self.kind = kind
        self.K = K
        self.state = EwsState.fresh(K, kind.eta, batch)
        self.est_online = np.zeros(batch)
        self.est_cumulative = np.zeros((batch, K))
        self.est_second = np.zeros(batch)
        self.violations = np.zeros(batch, dtype=np.int64)

    def distribution(self) -> np.ndarray:
        return select_distribution(self.state)

    def update(self, c, observed, eps, q, played_mask) -> np.ndarray:
        estimates = self.kind.estimator.estimate(c, eps, q, played_mask)
        self.violations += (-self.kind.eta * estimates > 1.0 + 1e-12).any(axis=1)
        self.est_online += (q * estimates).sum(axis=1)
        self.est_second += (q * estimates * estimates).sum(axis=1)
        self.est_cumulative += estimates
        self.state = update(
            self.state, estimates, check=self.kind.strict, estimator=self.kind.estimator.name
        )
        return estimates

    def ews_margin(self) -> np.ndarray:
        """RHS - LHS of the EWS inequality for the best estimated action."""
        eta = self.kind.eta
        lhs = self.est_online - self.est_cumulative.min(axis=1)
        rhs = math.log(self.K) / eta + eta * self.est_second
        return rhs - lhs


class LeaderRuntime:
    """Plays argmin of cumulative observed feedback; ties go to the lowest index."""

    def __init__(self, batch: int, K: int):
        self.cumulative = np.zeros((batch, K))
        self._rows = np.arange(batch)

    def distribution(self) -> np.ndarray:
        q = np.zeros_like(self.cumulative)
        q[self._rows, self.cumulative.argmin(axis=1)] = 1.0
        return q

    def update(self, c, observed, eps, q, played_mask) -> np.ndarray:
        seen = np.where(observed, c, 0).astype(float)
        self.cumulative += seen
        return seen


class UniformRuntime:
    def __init__(self, batch: int, K: int):
        self._q = np.full((batch, K), 1.0 / K)

    def distribution(self) -> np.ndarray:
        return self._q.copy()

    def update(self, c, observed, eps, q, played_mask) -> np.ndarray:
        return np.where(observed, c, 0).astype(float)


def learner_eta(kind: LearnerKind) -> Optional[float]:
    return kind.eta if isinstance(kind, Ews) else None


def learner_theta(kind: LearnerKind) -> Optional[float]:
    return est.estimator_theta(kind.estimator) if isinstance(kind, Ews) else None
