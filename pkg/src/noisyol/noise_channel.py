"""Noise models and the xor corruption channel.

A round's noise is a vector of K parameters ``eps`` in [0, 1]; the feedback
bit for action ``i`` is ``loss_i xor Bernoulli((1 - eps_i) / 2)``.  ``eps = 1``
is a noiseless channel and ``eps = 0`` carries no information.

All samplers consume uniforms handed to them by the caller instead of holding
a generator, so the engine can pre-draw blocks of uniforms per episode stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np


def flip_probability(eps):
    """p = (1 - eps) / 2, the probability that the channel flips a bit."""
    return (1.0 - np.asarray(eps, dtype=float)) / 2.0


# ---------------------------------------------------------------------------
# Marginal distributions of eps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Uniform01:
    name = "uniform"

    def cdf(self, x):
        return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= 0.0) & (x <= 1.0), 1.0, 0.0)

    def ppf(self, u):
        return np.asarray(u, dtype=float)

    def label(self) -> str:
        return "uniform"


@dataclass(frozen=True)
class TruncExp:
    """Exponential density lam * exp(-lam x) truncated to (0, 1)."""

    lam: float

    name = "truncexp"

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ValueError(f"TruncExp needs lam > 0, got {self.lam!r}")

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        return np.expm1(-self.lam * x) / math.expm1(-self.lam)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        dens = self.lam * np.exp(-self.lam * x) / -math.expm1(-self.lam)
        return np.where((x >= 0.0) & (x <= 1.0), dens, 0.0)

    def ppf(self, u):
        # exact inverse of the cdf, no rejection
        u = np.asarray(u, dtype=float)
        return -np.log1p(u * math.expm1(-self.lam)) / self.lam

    def label(self) -> str:
        return f"truncexp(lam={self.lam!r})"


@dataclass(frozen=True)
class PowerCdf:
    """CDF x**alpha on [0, 1]."""

    alpha: float

    name = "power"

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"PowerCdf needs alpha > 0, got {self.alpha!r}")

    def cdf(self, x):
        return np.clip(np.asarray(x, dtype=float), 0.0, 1.0) ** self.alpha

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > 0.0) & (x <= 1.0)
        safe = np.where(inside, x, 1.0)
        return np.where(inside, self.alpha * safe ** (self.alpha - 1.0), 0.0)

    def ppf(self, u):
        return np.asarray(u, dtype=float) ** (1.0 / self.alpha)

    def label(self) -> str:
        return f"power(alpha={self.alpha!r})"


MarginalDist = Union[Uniform01, TruncExp, PowerCdf]


def cdf(dist: MarginalDist, x):
    return dist.cdf(x)


def g_integrand_bound(dist: MarginalDist, theta: float) -> float:
    """Analytic upper bound on g(theta) = E[eps**-2 ; eps >= theta].

    Uniform: exactly 1/theta - 1.  TruncExp: the density is at most
    lam / (1 - exp(-lam)), giving that factor times (1/theta - 1), which in turn
    is <= lam / theta.  PowerCdf: eps**-2 <= theta**-2 on the event.
    """
    if not theta > 0.0:
        raise ValueError(f"g(theta) diverges for theta <= 0 (theta={theta!r})")
    if theta >= 1.0:
        return 0.0
    if isinstance(dist, Uniform01):
        return 1.0 / theta - 1.0
    if isinstance(dist, TruncExp):
        return dist.lam / -math.expm1(-dist.lam) * (1.0 / theta - 1.0)
    if isinstance(dist, PowerCdf):
        return (1.0 - theta**dist.alpha) / theta**2
    raise TypeError(f"unknown marginal {dist!r}")


# ---------------------------------------------------------------------------
# Noise models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    eps: float
    observable: bool = True

    def __post_init__(self):
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError(f"constant eps must lie in [0, 1], got {self.eps!r}")

    def draws_per_round(self, K: int) -> int:
        return 0

    def realize(self, u: np.ndarray, K: int) -> np.ndarray:
        return np.full((u.shape[0], K), float(self.eps))

    def label(self) -> str:
        return repr(float(self.eps))


@dataclass(frozen=True)
class IIDMarginal:
    dist: MarginalDist
    observable: bool = True

    def draws_per_round(self, K: int) -> int:
        return K

    def realize(self, u: np.ndarray, K: int) -> np.ndarray:
        return self.dist.ppf(u)

    def label(self) -> str:
        return self.dist.label()


@dataclass(frozen=True)
class SharedUniform:
    """One eps_t ~ U(0, 1) per round, copied to every action."""

    observable: bool = True

    def draws_per_round(self, K: int) -> int:
        return 1

    def realize(self, u: np.ndarray, K: int) -> np.ndarray:
        return np.repeat(u[:, :1], K, axis=1)

    def label(self) -> str:
        return "shared-uniform"


NoiseModel = Union[Constant, IIDMarginal, SharedUniform]


def sample_noise_round(model: NoiseModel, K: int, rng: np.random.Generator) -> np.ndarray:
    """Realize one round of noise parameters (shape ``(K,)``) from ``rng``."""
    if K < 2:
        raise ValueError(f"need K >= 2 actions, got {K}")
    u = rng.random((1, model.draws_per_round(K)))
    return model.realize(u, K)[0]


def corrupt(loss, eps, u):
    """Xor ``loss`` with Bernoulli((1 - eps)/2) realized from uniforms ``u``.

    Works elementwise on scalars or arrays; returns int8 bits.
    """
    flip = np.asarray(u) < flip_probability(eps)
    return np.bitwise_xor(np.asarray(loss, dtype=np.int8), flip.astype(np.int8))


def corrupt_bit(loss: int, eps: float, rng: np.random.Generator) -> int:
    """Single-bit form of :func:`corrupt` drawing its own uniform."""
    return int(corrupt(loss, eps, rng.random()))
