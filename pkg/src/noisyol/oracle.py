"""Independent verifiers: exact enumeration, quadrature, and replayed inequalities.

Nothing here reuses the simulation engine.  The EWS recursion is replayed
with its own arithmetic, and expected regret on tiny instances is summed over
every feedback history instead of sampled.
"""

from __future__ import annotations

import itertools
import math
from typing import Optional

import numpy as np
from scipy import integrate, stats

from . import estimators
from . import learners as L
from .noise_channel import MarginalDist


class HypothesisError(ValueError):
    """Input violates the precondition of the EWS inequality (-eta * estimate <= 1)."""


class InstanceTooLarge(ValueError):
    pass


def _estimate(kind, c, eps, q_i, played):
    # looked up on the module at call time so a patched estimator is what gets checked
    if isinstance(kind, estimators.UnbiasedConstant):
        return float(estimators.est_unbiased_constant(c, kind.p))
    if isinstance(kind, estimators.Raw):
        return float(estimators.est_raw(c))
    if isinstance(kind, estimators.ThresholdFull):
        return float(estimators.est_threshold_full(c, eps, kind.theta))
    if isinstance(kind, estimators.BanditImportance):
        return float(estimators.est_bandit_importance(c, q_i, played))
    if isinstance(kind, estimators.Exp3Threshold):
        return float(estimators.est_exp3_threshold(c, eps, kind.theta, q_i, played))
    raise TypeError(f"unknown estimator {kind!r}")


def enumerate_estimator_moments(kind, ell: int, eps: float, q_i: Optional[float] = None) -> tuple[float, float]:
    """Exact (mean, second moment) of an estimator for one action.

    Enumerates the feedback bit (``ell`` w.p. (1+eps)/2, flipped w.p.
    (1-eps)/2) and, for the bandit estimators, whether the action was played
    (w.p. ``q_i``).
    """
    outcomes = [(ell, (1.0 + eps) / 2.0), (1 - ell, (1.0 - eps) / 2.0)]
    if kind.bandit:
        if q_i is None:
            raise ValueError("bandit estimators need q_i")
        plays = [(True, q_i), (False, 1.0 - q_i)]
    else:
        plays = [(True, 1.0)]
    mean = second = 0.0
    for (c, pc), (played, pp) in itertools.product(outcomes, plays):
        w = pc * pp
        if w == 0.0:
            continue
        v = _estimate(kind, c, eps, q_i, played)
        mean += w * v
        second += w * v * v
    return mean, second


def check_ews_inequality(estimates, eta: float) -> float:
    """RHS - LHS of the EWS inequality, replayed from scratch.

    Returns ``ln K / eta + eta * sum_t q_t . est_t**2 - (sum_t q_t . est_t - min_k sum_t est_k)``,
    which must be non-negative whenever ``-eta * est <= 1`` everywhere.
    """
    est = np.asarray(estimates, dtype=float)
    if est.ndim != 2:
        raise ValueError(f"estimates must be T x K, got shape {est.shape}")
    if not eta > 0:
        raise HypothesisError(f"eta must be positive, got {eta!r}")
    if np.any(-eta * est > 1.0):
        raise HypothesisError("some -eta * estimate exceeds 1")
    T, K = est.shape
    log_w = np.zeros(K)
    online = second = 0.0
    for t in range(T):
        w = np.exp(log_w - log_w.max())
        q = w / w.sum()
        online += float(q @ est[t])
        second += float(q @ (est[t] * est[t]))
        log_w = log_w - eta * est[t]
    best = float(est.sum(axis=0).min()) if T else 0.0
    return math.log(K) / eta + eta * second - (online - best)


def quadrature_g(dist: MarginalDist, theta: float) -> float:
    """g(theta) = integral over [theta, 1] of eps**-2 dF(eps), adaptive quadrature."""
    if not theta > 0.0:
        raise ValueError(f"g(theta) diverges for theta <= 0 (theta={theta!r})")
    if theta >= 1.0:
        return 0.0
    value, _ = integrate.quad(
        lambda x: float(dist.pdf(x)) / (x * x), theta, 1.0, epsabs=1e-10, epsrel=1e-12, limit=200
    )
    return value


def threshold_bias_quadrature(dist: MarginalDist, theta: float, ell: int) -> float:
    """E over eps ~ dist of the full-information threshold estimator's mean."""

    def mean_given_eps(x):
        return enumerate_estimator_moments(estimators.ThresholdFull(theta), ell, x)[0] * float(dist.pdf(x))

    lo, _ = integrate.quad(mean_given_eps, 0.0, theta, epsabs=1e-12, limit=200)
    hi, _ = integrate.quad(mean_given_eps, theta, 1.0, epsabs=1e-12, limit=200)
    return lo + hi


def exp3_conditional_mean(theta: float, ell: int, q_i: float, dist: MarginalDist) -> float:
    """E[bandit threshold estimate | eps >= theta], played and noise outcomes enumerated."""
    mass = 1.0 - float(dist.cdf(theta))
    kind = estimators.Exp3Threshold(theta)
    val, _ = integrate.quad(
        lambda x: enumerate_estimator_moments(kind, ell, x, q_i)[0] * float(dist.pdf(x)),
        theta,
        1.0,
        epsabs=1e-12,
        limit=200,
    )
    return val / mass


# ---------------------------------------------------------------------------
# Exact expected regret on tiny instances
# ---------------------------------------------------------------------------


def _oracle_estimate(kind, c: int, eps: float) -> float:
    p = (1.0 - eps) / 2.0
    if isinstance(kind, estimators.UnbiasedConstant):
        return (c - kind.p) / (1.0 - 2.0 * kind.p)
    if isinstance(kind, estimators.Raw):
        return float(c)
    if isinstance(kind, estimators.ThresholdFull):
        return (c - p) / (1.0 - 2.0 * p) if eps >= kind.theta else 0.0
    raise InstanceTooLarge(f"exact enumeration supports full-information estimators only, got {kind!r}")


def _distribution(learner, history: list, K: int) -> list[float]:
    if isinstance(learner, L.UniformRandom):
        return [1.0 / K] * K
    if isinstance(learner, L.FollowNoisyLeader):
        totals = [sum(h[0][i] for h in history) for i in range(K)]
        lead = totals.index(min(totals))
        return [1.0 if i == lead else 0.0 for i in range(K)]
    if isinstance(learner, L.Ews):
        log_w = [-learner.eta * sum(h[1][i] for h in history) for i in range(K)]
        top = max(log_w)
        w = [math.exp(x - top) for x in log_w]
        total = sum(w)
        return [x / total for x in w]
    raise TypeError(f"unknown learner {learner!r}")


def exact_expected_pseudo_regret(losses, eps: float, learner) -> float:
    """Expected pseudo-regret by summing over every noisy-feedback history.

    Full information, constant noise ``eps``, a fixed loss matrix with
    ``T <= 6`` and ``K <= 2``.  The learner's distribution is a deterministic
    function of the history, so no action sampling enters.
    """
    ell = np.asarray(losses, dtype=int)
    T, K = ell.shape
    if T > 6 or K > 2:
        raise InstanceTooLarge(f"exact enumeration limited to T <= 6, K <= 2; got T={T}, K={K}")
    keep = (1.0 + eps) / 2.0
    flip = (1.0 - eps) / 2.0
    kind = getattr(learner, "estimator", None)

    def walk(t: int, history: list, prob: float) -> float:
        if prob == 0.0:
            return 0.0
        q = _distribution(learner, history, K)
        here = prob * sum(q[i] * ell[t, i] for i in range(K))
        if t == T - 1:
            return here
        total = here
        for flips in itertools.product((0, 1), repeat=K):
            bits = [int(ell[t, i]) ^ f for i, f in enumerate(flips)]
            w = prob * math.prod(flip if f else keep for f in flips)
            est = [_oracle_estimate(kind, b, eps) for b in bits] if kind is not None else [0.0] * K
            total += walk(t + 1, history + [(bits, est)], w)
        return total

    expected_online = walk(0, [], 1.0)
    return float(expected_online - ell.sum(axis=0).min())


# ---------------------------------------------------------------------------
# Minimum of i.i.d. binomials
# ---------------------------------------------------------------------------


def binomial_min_threshold(n: int, p: float, K: int) -> float:
    return n * p - math.sqrt(p * n * math.log(K) / 9.0)


def binomial_min_check(n: int, p: float, K: int, reps: int, rng: np.random.Generator, brute_force_limit: int = 10**7) -> float:
    """Frequency over ``reps`` trials that the min of K-1 i.i.d. B(n, p) is at most
    np - sqrt(p n ln K / 9).

    Small problems draw every binomial; larger ones sample the minimum
    directly from its exact law P(min <= m) = 1 - (1 - F(m))**(K-1).
    """
    level = binomial_min_threshold(n, p, K)
    m = K - 1
    if reps * m <= brute_force_limit:
        mins = rng.binomial(n, p, size=(reps, m)).min(axis=1)
    else:
        support = np.arange(n + 1)
        log_surv = m * stats.binom.logsf(support - 1, n, p)  # log P(min >= k)
        cdf_min = -np.expm1(log_surv[1:])  # P(min <= k) for k = 0..n-1
        cdf_min = np.append(cdf_min, 1.0)
        mins = np.searchsorted(cdf_min, rng.random(reps), side="right")
    return float(np.mean(mins <= level))
