"""Oracle-driven self checks, shared by the ``verify`` subcommand and the tests."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import estimators as est
from . import harness as H
from . import learners as L
from . import noise_channel as nc
from . import oracle

EPS_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))
THETA_GRID = tuple(i / 100 for i in range(1, 100))


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    measured: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.measured}"


def check_unbiased_moments(tol: float = 1e-12) -> Check:
    worst_bias = worst_excess = 0.0
    for eps in EPS_GRID:
        kind = est.UnbiasedConstant((1.0 - eps) / 2.0)
        for ell in (0, 1):
            mean, second = oracle.enumerate_estimator_moments(kind, ell, eps)
            worst_bias = max(worst_bias, abs(mean - ell))
            worst_excess = max(worst_excess, second - 1.0 / eps**2)
    ok = worst_bias <= tol and worst_excess <= tol
    return Check("unbiased estimator moments", ok, f"max |E[est]-l| = {worst_bias:.3g}, max E[est^2]-1/eps^2 = {worst_excess:.3g}")


def check_raw_mean(tol: float = 1e-12) -> Check:
    worst = 0.0
    for eps in EPS_GRID:
        p = (1.0 - eps) / 2.0
        for ell in (0, 1):
            mean, _ = oracle.enumerate_estimator_moments(est.Raw(), ell, eps)
            worst = max(worst, abs(mean - abs(ell - p)))
    return Check("raw estimator mean = |l - p|", worst <= tol, f"max error {worst:.3g}")


def check_bandit_importance(tol: float = 1e-12) -> Check:
    worst = 0.0
    for eps in EPS_GRID:
        for q in (0.05, 0.3, 0.5, 0.9):
            for ell in (0, 1):
                mean, _ = oracle.enumerate_estimator_moments(est.BanditImportance(), ell, eps, q)
                noisy_mean = ell * (1 + eps) / 2 + (1 - ell) * (1 - eps) / 2
                worst = max(worst, abs(mean - noisy_mean))
    return Check("importance estimator mean = E[c]", worst <= tol, f"max error {worst:.3g}")


def ews_fuzz_cases(n: int, seed: int = 0):
    """Random (estimates, eta) pairs inside the EWS inequality's hypothesis."""
    rng = np.random.default_rng(seed)
    for _ in range(n):
        K = int(rng.integers(2, 17))
        T = int(rng.integers(1, 65))
        eta = float(np.exp(rng.uniform(np.log(1e-3), 0.0)))
        yield rng.uniform(-1.0 / eta, 3.0, size=(T, K)), eta


def check_ews_fuzz(n: int = 10_000, tol: float = 1e-9) -> Check:
    worst = math.inf
    for estimates, eta in ews_fuzz_cases(n):
        worst = min(worst, oracle.check_ews_inequality(estimates, eta))
    return Check("EWS inequality fuzz", worst >= -tol, f"{n} cases, min margin {worst:.6g}")


def check_uniform_quadrature(tol: float = 1e-8) -> Check:
    worst = max(abs(oracle.quadrature_g(nc.Uniform01(), th) - (1 / th - 1)) for th in THETA_GRID)
    return Check("g(theta) = 1/theta - 1 for uniform noise", worst <= tol, f"max error {worst:.3g} on {len(THETA_GRID)} points")


def check_truncexp_quadrature() -> Check:
    """Quadrature never exceeds the analytic bound lam/(1-e^-lam) * (1/theta - 1)."""
    worst = -math.inf
    for lam in (0.5, 1.0, 2.0):
        d = nc.TruncExp(lam)
        for th in THETA_GRID:
            worst = max(worst, oracle.quadrature_g(d, th) - nc.g_integrand_bound(d, th))
    return Check("truncated-exponential g(theta) below its analytic bound", worst <= 1e-9, f"max excess {worst:.3g}")


def check_lam_over_theta() -> Check:
    """The simplified bound g(theta) <= lam/theta for truncated-exponential noise."""
    failures = []
    for lam in (0.5, 1.0, 2.0):
        d = nc.TruncExp(lam)
        bad = [th for th in THETA_GRID if oracle.quadrature_g(d, th) > lam / th]
        if bad:
            failures.append(f"lam={lam}: {len(bad)} of {len(THETA_GRID)} thetas, largest at theta={max(bad)}")
    return Check("g(theta) <= lam/theta for truncated-exponential noise", not failures, "; ".join(failures) or "holds on grid")


# Fixed tiny instances: (eps, losses, learner)
TINY_CONFIGS = (
    (0.5, [[0, 1]] * 4, L.Ews(est.UnbiasedConstant(0.25), 0.5)),
    (0.5, [[0, 1], [1, 0]] * 3, L.Ews(est.Raw(), 0.5)),
    (0.2, [[0, 1], [0, 1], [1, 0], [0, 1], [1, 1], [0, 0]], L.Ews(est.UnbiasedConstant(0.4), 0.3)),
    (0.8, [[1, 0], [0, 1], [0, 1], [0, 1], [1, 0]], L.FollowNoisyLeader()),
    (0.3, [[0, 1]] * 6, L.FollowNoisyLeader()),
    (1.0, [[0, 1], [1, 0], [0, 1]], L.Ews(est.UnbiasedConstant(0.0), 1.0)),
    (0.6, [[1, 0], [0, 1], [1, 1], [0, 1]], L.UniformRandom()),
    (0.5, [[1, 0], [1, 0], [0, 1], [1, 0], [0, 0], [1, 0]], L.Ews(est.Raw(), 1.0)),
    (0.9, [[0, 1], [1, 0], [1, 0], [0, 1], [0, 1], [0, 1]], L.Ews(est.UnbiasedConstant(0.05), 0.2)),
    (0.4, [[0, 1], [0, 1], [0, 0], [1, 0], [0, 1]], L.Ews(est.UnbiasedConstant(0.3), 1.0)),
)


def tiny_config(eps, losses, learner, seeds) -> H.ExperimentConfig:
    raw = {"setting": "full-const", "K": 2, "T": len(losses), "eps": eps, "adversary": "fixed", "losses": losses, "seeds": seeds}
    return H.ExperimentConfig(
        setting="full-const", noise_known=True, K=2, T=len(losses), eps=eps, noise=nc.Constant(eps),
        learner=learner, adversary=H.adv.AdversarySpec("fixed", losses=tuple(map(tuple, losses))),
        seeds=tuple(range(seeds)), raw=raw,
    )


def tiny_comparisons(seeds: int = 100_000):
    """(exact, Monte Carlo mean, standard error) for every tiny instance."""
    out = []
    for eps, losses, learner in TINY_CONFIGS:
        exact = oracle.exact_expected_pseudo_regret(losses, eps, learner)
        s = H.replicate(tiny_config(eps, losses, learner, seeds))
        out.append((exact, s.mean_regret, s.stderr))
    return out


def check_tiny_exact(seeds: int = 100_000) -> Check:
    rows = tiny_comparisons(seeds)
    # |MC - exact| as a fraction of the 4-standard-error allowance
    used = [abs(m - e) / (4 * s + 1e-12) for e, m, s in rows]
    ok = max(used) <= 1.0
    return Check(
        "exact vs Monte Carlo regret on tiny instances", ok,
        f"{len(rows)} configs, {seeds} episodes each, worst |diff| / (4 se) = {max(used):.3g}",
    )


def unknown_noise_feedback_means(samples: int = 1_000_000, seed: int = 0) -> tuple[float, float]:
    """Empirical feedback means of the (planted, other) action under the indistinguishable adversary."""
    cfg = H.build_config({"setting": "full-var", "K": 2, "T": 2, "adversary": "unknown-noise", "noise_known": False})
    planted, _, bits = H.environment_feedback(cfg, samples, seed)
    i = int(planted[0])
    return float(bits[:, i].mean()), float(bits[:, 1 - i].mean())


def check_three_eighths(samples: int = 1_000_000, tol: float = 0.003) -> Check:
    a, b = unknown_noise_feedback_means(samples)
    ok = abs(a - 0.375) <= tol and abs(b - 0.375) <= tol
    return Check("indistinguishable feedback means = 3/8", ok, f"planted {a:.5f}, other {b:.5f}")


CHECKS: tuple[Callable[[], Check], ...] = (
    check_unbiased_moments,
    check_raw_mean,
    check_bandit_importance,
    check_ews_fuzz,
    check_uniform_quadrature,
    check_truncexp_quadrature,
    check_tiny_exact,
    check_three_eighths,
)


def verify_suite(print_fn=print) -> bool:
    results = [check() for check in CHECKS]
    for r in results:
        print_fn(r.line())
    return all(r.passed for r in results)
