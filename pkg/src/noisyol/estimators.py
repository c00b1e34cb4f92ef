"""Loss estimators plugged into the exponential-weights update.

Each ``est_*`` function is vectorized: arguments broadcast as numpy arrays,
and plain scalars in give a numpy scalar out.  The :class:`EstimatorKind`
dataclasses bind the per-learner parameters and expose one ``estimate`` method
used by the round engine.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .noise_channel import flip_probability


def est_unbiased_constant(c, p):
    """(c - p) / (1 - 2p): unbiased for the true loss under constant noise."""
    p = np.asarray(p, dtype=float)
    if np.any(p >= 0.5) or np.any(p < 0.0):
        raise ValueError(f"unbiased estimator needs p in [0, 1/2), got {p!r}")
    return (np.asarray(c, dtype=float) - p) / (1.0 - 2.0 * p)


def est_raw(c):
    """The observed bit itself; its mean is |loss - p|."""
    return np.asarray(c, dtype=float)


def _inverted(c, eps):
    # (c - p)/(1 - 2p) where eps > 0; callers mask out the rest
    p = flip_probability(eps)
    denom = 1.0 - 2.0 * p
    safe = np.where(denom > 0.0, denom, 1.0)
    return (np.asarray(c, dtype=float) - p) / safe


def est_threshold_full(c, eps, theta):
    """Unbiased inversion on rounds with eps >= theta, zero otherwise."""
    eps = np.asarray(eps, dtype=float)
    keep = eps >= theta
    return np.where(keep, _inverted(c, eps), 0.0)


def est_bandit_importance(c, q, played):
    """c / q on the played action, zero elsewhere."""
    played = np.asarray(played, dtype=bool)
    q = np.asarray(q, dtype=float)
    if np.any(played & (q <= 0.0)):
        raise FloatingPointError("played an action with zero probability")
    safe_q = np.where(played, q, 1.0)
    return np.where(played, np.asarray(c, dtype=float) / safe_q, 0.0)


def est_exp3_threshold(c, eps, theta, q, played):
    """Importance-weighted inversion, kept only if played and eps >= theta.

    ``eps`` is the realized parameter of the action being estimated; only the
    played action's value matters.
    """
    played = np.asarray(played, dtype=bool)
    q = np.asarray(q, dtype=float)
    eps = np.asarray(eps, dtype=float)
    keep = played & (eps >= theta)
    if np.any(keep & (q <= 0.0)):
        raise FloatingPointError("played an action with zero probability")
    safe_q = np.where(keep, q, 1.0)
    return np.where(keep, _inverted(c, eps) / safe_q, 0.0)


@dataclass(frozen=True)
class UnbiasedConstant:
    p: float

    name = "unbiased"
    needs_noise = False
    bandit = False

    def __post_init__(self):
        if not 0.0 <= self.p < 0.5:
            raise ValueError(f"UnbiasedConstant needs p in [0, 1/2), got {self.p!r}")

    def estimate(self, c, eps, q, played):
        return est_unbiased_constant(c, self.p)


@dataclass(frozen=True)
class Raw:
    name = "raw"
    needs_noise = False
    bandit = False

    def estimate(self, c, eps, q, played):
        return est_raw(c)


@dataclass(frozen=True)
class ThresholdFull:
    theta: float

    name = "threshold"
    needs_noise = True
    bandit = False

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta!r}")

    def estimate(self, c, eps, q, played):
        return est_threshold_full(c, eps, self.theta)


@dataclass(frozen=True)
class BanditImportance:
    name = "importance"
    needs_noise = False
    bandit = True

    def estimate(self, c, eps, q, played):
        return est_bandit_importance(c, q, played)


@dataclass(frozen=True)
class Exp3Threshold:
    theta: float

    name = "exp3-threshold"
    needs_noise = True
    bandit = True

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta!r}")

    def estimate(self, c, eps, q, played):
        return est_exp3_threshold(c, eps, self.theta, q, played)


EstimatorKind = Union[UnbiasedConstant, Raw, ThresholdFull, BanditImportance, Exp3Threshold]


def estimator_theta(kind: EstimatorKind) -> Optional[float]:
    return getattr(kind, "theta", None)
