"""Experiment configuration, replication, bounds and exponent fits."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import stats

from . import adversaries as adv
from . import estimators as est
from . import learners as L
from . import noise_channel as nc
from .sim_core import ConfigError, Episodes, RegretTrace, stream

log = logging.getLogger(__name__)

SETTINGS = L.SETTINGS
LEARNERS = ("ews", "follow-noisy-leader", "uniform", "all")
ESTIMATORS = ("unbiased", "raw", "threshold", "importance", "exp3-threshold")
NOISES = ("uniform", "shared-uniform", "truncexp", "power")

KEYS = {
    "setting", "noise_known", "K", "T", "eps", "noise", "lam", "alpha", "learner", "estimator",
    "eta", "theta", "adversary", "delta", "gap", "beta", "adv_theta", "gamma", "losses",
    "seeds", "root_seed", "strict_ews",
}
REQUIRED = ("setting", "K", "T", "adversary")

# estimator -> settings it is defined for, and whether it needs observed noise
_ESTIMATOR_RULES = {
    "unbiased": (("full-const",), True),
    "raw": (("full-const", "full-var"), False),
    "threshold": (("full-var",), True),
    "importance": (("bandit-const", "bandit-var"), False),
    "exp3-threshold": (("bandit-var",), True),
}


@dataclass(frozen=True)
class ExperimentConfig:
    setting: str
    noise_known: bool
    K: int
    T: int
    eps: Optional[float]
    noise: Any
    learner: Any
    adversary: adv.AdversarySpec
    seeds: tuple
    root_seed: int = 0
    gamma: float = 1.0
    sources: Mapping[str, str] = field(default_factory=dict)
    raw: Mapping[str, Any] = field(default_factory=dict)

    @property
    def mode(self) -> str:
        return "bandit" if self.setting.startswith("bandit") else "full"

    @property
    def dist(self):
        if isinstance(self.noise, nc.IIDMarginal):
            return self.noise.dist
        if isinstance(self.noise, nc.SharedUniform):
            return nc.Uniform01()
        return None

    @property
    def setting_label(self) -> str:
        return f"{self.setting}-{'known' if self.noise_known else 'unknown'}"


@dataclass(frozen=True)
class RegretSummary:
    config: ExperimentConfig
    mean_regret: float
    stderr: float
    theoretical_bound: Optional[float]
    per_seed: tuple
    mean_planted_regret: Optional[float] = None
    min_over_learners: Optional[float] = None
    ews_violations: int = 0
    fitted_exponent: Optional[float] = None


@dataclass(frozen=True)
class Bound:
    value: Optional[float]
    formula: str
    warning: Optional[str] = None


# ---------------------------------------------------------------------------
# Config construction
# ---------------------------------------------------------------------------


def _num(raw, key, kind=float, lo=None, hi=None, lo_open=False, hi_open=False):
    try:
        v = raw[key]
        if isinstance(v, bool):
            raise TypeError
        v = kind(v)
        if kind is int and v != raw[key]:
            raise TypeError
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {raw[key]!r}") from None
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(f"{key}: must be {'>' if lo_open else '>='} {lo}, got {v!r}")
    if hi is not None and (v > hi or (hi_open and v == hi)):
        raise ConfigError(f"{key}: must be {'<' if hi_open else '<='} {hi}, got {v!r}")
    return v


def _bool(raw, key, default):
    v = raw.get(key, default)
    if isinstance(v, str) and v.lower() in ("true", "false"):
        v = v.lower() == "true"
    if not isinstance(v, bool):
        raise ConfigError(f"{key}: expected true/false, got {v!r}")
    return v


def _default_estimator(setting: str, known: bool) -> str:
    return {
        ("full-const", True): "unbiased",
        ("full-const", False): "raw",
        ("full-var", True): "threshold",
        ("full-var", False): "raw",
        ("bandit-const", True): "importance",
        ("bandit-const", False): "importance",
        ("bandit-var", True): "exp3-threshold",
        ("bandit-var", False): "importance",
    }[(setting, known)]


def _noise_model(raw, setting):
    if setting.endswith("const"):
        if "eps" not in raw:
            raise ConfigError("eps: required for constant-noise settings")
        if "noise" in raw and raw["noise"] != "constant":
            raise ConfigError(f"noise: constant-noise settings take no noise model, got {raw['noise']!r}")
        return nc.Constant(_num(raw, "eps", float, 0.0, 1.0))
    name = raw.get("noise", "uniform")
    if name == "uniform":
        return nc.IIDMarginal(nc.Uniform01())
    if name == "shared-uniform":
        return nc.SharedUniform()
    if name == "truncexp":
        if "lam" not in raw:
            raise ConfigError("lam: required for noise = truncexp")
        return nc.IIDMarginal(nc.TruncExp(_num(raw, "lam", float, 0.0, lo_open=True)))
    if name == "power":
        if "alpha" not in raw:
            raise ConfigError("alpha: required for noise = power")
        return nc.IIDMarginal(nc.PowerCdf(_num(raw, "alpha", float, 0.0, lo_open=True)))
    raise ConfigError(f"noise: must be one of {NOISES}, got {name!r}")


def _learner(raw, setting, known, eps, T, K, dist, sources):
    name = raw.get("learner", "ews")
    if name != "ews":
        for key in ("estimator", "eta", "theta", "strict_ews"):
            if key in raw:
                raise ConfigError(f"{key}: only meaningful for learner = ews, got learner = {name!r}")
    if name == "follow-noisy-leader":
        return L.FollowNoisyLeader()
    if name == "uniform":
        return L.UniformRandom()
    if name != "ews":
        raise ConfigError(f"learner: must be one of {LEARNERS[:-1]}, got {name!r}")

    estimator = raw.get("estimator", _default_estimator(setting, known))
    if estimator not in _ESTIMATOR_RULES:
        raise ConfigError(f"estimator: must be one of {ESTIMATORS}, got {estimator!r}")
    settings_ok, needs_noise = _ESTIMATOR_RULES[estimator]
    if setting not in settings_ok:
        raise ConfigError(f"estimator: {estimator!r} is not defined for setting {setting!r}")
    if needs_noise and not known:
        raise ConfigError(
            f"estimator: {estimator!r} needs observed noise but noise_known = false"
        )

    theta = None
    if "theta" in raw and estimator not in ("threshold", "exp3-threshold"):
        raise ConfigError(f"theta: estimator {estimator!r} has no threshold")
    if estimator in ("threshold", "exp3-threshold"):
        if "theta" in raw:
            theta = _num(raw, "theta", float)
            sources["theta"] = "config"
        else:
            which = "full-var" if estimator == "threshold" else "bandit-var"
            theta = L.default_theta(which, T, K, dist)
            sources["theta"] = _theta_source(which, dist)
        if not 0.0 < theta < 1.0:
            raise ConfigError(f"theta: must lie in (0, 1), got {theta!r}")

    if "eta" in raw:
        eta = _num(raw, "eta", float, 0.0, lo_open=True)
        sources["eta"] = "config"
    else:
        eta, sources["eta"] = _default_eta(estimator, setting, eps, theta, T, K, dist)

    strict = _bool(raw, "strict_ews", False)
    kind = {
        "unbiased": lambda: est.UnbiasedConstant((1.0 - eps) / 2.0) if eps and eps > 0 else None,
        "raw": est.Raw,
        "threshold": lambda: est.ThresholdFull(theta),
        "importance": est.BanditImportance,
        "exp3-threshold": lambda: est.Exp3Threshold(theta),
    }[estimator]()
    if kind is None:
        raise ConfigError("eps: the unbiased estimator needs eps > 0")
    return L.Ews(kind, eta, strict)


def _theta_source(which, dist):
    if which == "bandit-var":
        return "K^(1/3) (ln K)^(1/3) / T^(1/3)"
    if isinstance(dist, nc.TruncExp):
        return "(ln K / T)^(1/3) / lam"
    if isinstance(dist, nc.PowerCdf):
        return "(2/alpha)^(1/(1+alpha)) (ln K / T)^(1/(2(1+alpha)))"
    return "(ln K / T)^(1/3)"


def _default_eta(estimator, setting, eps, theta, T, K, dist):
    if estimator in ("unbiased", "raw") and setting == "full-const":
        if not eps or eps <= 0:
            raise ConfigError("eps: default eta needs eps > 0; set eta explicitly")
        src = "eps sqrt(ln K / T)"
        if estimator == "raw":
            src += " (uses eps although the learner never observes it)"
        return L.default_eta("full-const", eps=eps, T=T, K=K), src
    if estimator == "raw":
        return math.sqrt(math.log(K) / T), "sqrt(ln K / T) (no noise-aware rate exists)"
    if estimator == "threshold":
        if dist is None or isinstance(dist, nc.Uniform01):
            return L.default_eta("full-var", T=T, K=K), "(ln K / T)^(2/3)"
        return L.default_eta("full-var", theta=theta, T=T, K=K, dist=dist), "sqrt(ln K / (T g(theta)))"
    if estimator == "importance":
        if setting == "bandit-const":
            if not eps or eps <= 0:
                raise ConfigError("eps: default eta needs eps > 0; set eta explicitly")
            return L.default_eta("bandit-const", eps=eps, T=T, K=K), "eps sqrt(ln K / (T K))"
        return math.sqrt(math.log(K) / (T * K)), "sqrt(ln K / (T K)) (no noise-aware rate exists)"
    return L.default_eta("bandit-var", T=T, K=K), "(ln K)^(2/3) / (K^(1/3) T^(2/3))"


def _adversary(raw, setting, noise, eps, T, K, gamma):
    name = raw["adversary"]
    if name not in adv.ADVERSARIES:
        raise ConfigError(f"adversary: must be one of {adv.ADVERSARIES}, got {name!r}")
    const = setting.endswith("const")
    if name == "fixed":
        if "losses" not in raw:
            raise ConfigError("losses: required for adversary = fixed")
        try:
            matrix = np.asarray(raw["losses"], dtype=int)
        except (TypeError, ValueError):
            raise ConfigError(f"losses: expected a list of 0/1 rows, got {raw['losses']!r}") from None
        if matrix.ndim != 2 or matrix.shape[1] != K or not np.isin(matrix, (0, 1)).all():
            raise ConfigError(f"losses: expected rows of {K} bits")
        return adv.AdversarySpec("fixed", losses=tuple(map(tuple, matrix.tolist())))
    if name == "zero":
        return adv.AdversarySpec("zero")
    if name in ("stochastic-gap", "bandit-gap") and not const:
        raise ConfigError(f"adversary: {name!r} is a constant-noise construction")
    if name in ("variable-noise", "unknown-noise", "bandit-variable-noise") and const:
        raise ConfigError(f"adversary: {name!r} is a variable-noise construction")
    if name in ("variable-noise", "bandit-variable-noise") and not isinstance(noise, nc.SharedUniform):
        raise ConfigError(f"adversary: {name!r} conditions on a shared eps_t; set noise = shared-uniform")
    if name == "stochastic-gap":
        delta = _num(raw, "delta", float, 0.0, 0.5, lo_open=True) if "delta" in raw else _gap(adv.gap_delta, eps, T, K)
        return adv.AdversarySpec(name, delta=delta)
    if name == "bandit-gap":
        beta = (
            _num(raw, "beta", float, 0.0, 1.0, lo_open=True)
            if "beta" in raw
            else _gap(lambda e, t, k: adv.bandit_gap_beta(e, t, k, gamma), eps, T, K)
        )
        return adv.AdversarySpec(name, beta=beta)
    if name == "variable-noise":
        theta = _num(raw, "adv_theta", float, 0.0, 1.0, lo_open=True) if "adv_theta" in raw else adv.variable_noise_theta(T, K)
        gap = _num(raw, "gap", float, 0.0, 0.5, lo_open=True) if "gap" in raw else 1 / 6
        return adv.AdversarySpec(name, theta=theta, gap=gap)
    if name == "bandit-variable-noise":
        theta, beta = adv.bandit_variable_params(T, K, gamma)
        if "adv_theta" in raw:
            theta = _num(raw, "adv_theta", float, 0.0, 1.0, lo_open=True)
        if "beta" in raw:
            beta = _num(raw, "beta", float, 0.0, 0.5, lo_open=True)
        return adv.AdversarySpec(name, theta=min(theta, 1.0), beta=beta)
    # unknown-noise
    if K != 2:
        raise ConfigError(f"K: the unknown-noise adversary needs K = 2, got {K}")
    if not isinstance(noise, nc.IIDMarginal) or not isinstance(noise.dist, nc.Uniform01):
        raise ConfigError("noise: the unknown-noise adversary is built for noise = uniform")
    return adv.AdversarySpec(name)


def _gap(fn, eps, T, K):
    if not eps or eps <= 0:
        raise ConfigError("eps: gap adversaries need eps > 0")
    return fn(eps, T, K)


def build_config(raw: Mapping[str, Any]) -> ExperimentConfig:
    """Validate a flat key/value mapping and fill rate and adversary defaults."""
    raw = dict(raw)
    unknown = sorted(set(raw) - KEYS)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown key")
    for key in REQUIRED:
        if key not in raw:
            raise ConfigError(f"{key}: required key missing")
    setting = raw["setting"]
    if setting not in SETTINGS:
        raise ConfigError(f"setting: must be one of {SETTINGS}, got {setting!r}")
    K = _num(raw, "K", int, 2)
    T = _num(raw, "T", int, 2)
    known = _bool(raw, "noise_known", True)
    gamma = _num(raw, "gamma", float, 0.0, lo_open=True) if "gamma" in raw else 1.0
    root_seed = _num(raw, "root_seed", int, 0) if "root_seed" in raw else 0
    seeds = raw.get("seeds", 1)
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        if seeds < 1:
            raise ConfigError(f"seeds: need at least one, got {seeds}")
        seeds = tuple(range(seeds))
    elif isinstance(seeds, (list, tuple)) and seeds and all(isinstance(s, int) and s >= 0 for s in seeds):
        seeds = tuple(seeds)
    else:
        raise ConfigError(f"seeds: expected a count or a list of non-negative ints, got {seeds!r}")

    noise = _noise_model(raw, setting)
    eps = noise.eps if isinstance(noise, nc.Constant) else None
    dist = noise.dist if isinstance(noise, nc.IIDMarginal) else (nc.Uniform01() if isinstance(noise, nc.SharedUniform) else None)
    sources: dict[str, str] = {}
    learner = _learner(raw, setting, known, eps, T, K, dist, sources)
    adversary = _adversary(raw, setting, noise, eps, T, K, gamma)
    if setting == "full-const" and T < math.log(K) / 4:
        log.warning("T=%d < ln(K)/4: the constant-noise bound's hypothesis fails", T)
    return ExperimentConfig(
        setting=setting, noise_known=known, K=K, T=T, eps=eps, noise=noise, learner=learner,
        adversary=adversary, seeds=seeds, root_seed=root_seed, gamma=gamma, sources=sources, raw=raw,
    )


def builtin_learner_configs(config: ExperimentConfig) -> list[ExperimentConfig]:
    """The config re-run with every built-in learner valid in its setting."""
    base = {k: v for k, v in config.raw.items() if k not in ("learner", "estimator", "eta", "theta")}
    out = []
    for name, estimator in _candidates(config):
        raw = dict(base, learner=name)
        if estimator:
            raw["estimator"] = estimator
        out.append(build_config(raw))
    return out


def _candidates(config):
    yield from (
        ("ews", e)
        for e, (settings, needs) in _ESTIMATOR_RULES.items()
        if config.setting in settings and (config.noise_known or not needs)
        and not (e == "unbiased" and not config.eps)
    )
    yield ("follow-noisy-leader", None)
    yield ("uniform", None)


def with_T(config: ExperimentConfig, T: int) -> ExperimentConfig:
    """Rebuild ``config`` at another horizon, re-deriving every default."""
    return build_config(dict(config.raw, T=T))


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def _episodes(config: ExperimentConfig, seeds, **kw) -> Episodes:
    return Episodes(
        K=config.K, T=config.T, noise=config.noise, adversary=config.adversary, learner=config.learner,
        mode=config.mode, noise_known=config.noise_known, seeds=seeds, root_seed=config.root_seed, **kw,
    )


def run_episode(config: ExperimentConfig, seed: int, *, trace: bool = True, keep_records: bool = False) -> RegretTrace:
    return _episodes(config, [seed], trace=trace, keep_records=keep_records).run()[0]


def run_batch(config: ExperimentConfig, seeds: Optional[Sequence[int]] = None, batch_size: int = 20000) -> list[RegretTrace]:
    seeds = list(config.seeds if seeds is None else seeds)
    out: list[RegretTrace] = []
    for start in range(0, len(seeds), batch_size):
        out.extend(_episodes(config, seeds[start : start + batch_size]).run())
    return out


def _mean_stderr(values) -> tuple[float, float]:
    x = np.asarray(values, dtype=float)
    mean = float(x.mean())
    stderr = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else 0.0
    return mean, stderr


def replicate(config: ExperimentConfig) -> RegretSummary:
    traces = run_batch(config)
    per_seed = tuple(t.final for t in traces)
    mean, stderr = _mean_stderr(per_seed)
    planted = [t.planted_regret for t in traces if t.planted_regret is not None]
    violations = sum(t.ews_violations for t in traces)
    if violations:
        log.warning("%s: %d episodes left the EWS inequality regime (-eta*estimate > 1)", config.learner.label, violations)
    bound = theoretical_bound(config.setting, config.eps, config.T, config.K, config.dist, config.noise_known)
    return RegretSummary(
        config=config, mean_regret=mean, stderr=stderr, theoretical_bound=bound.value, per_seed=per_seed,
        mean_planted_regret=float(np.mean(planted)) if planted else None, ews_violations=violations,
    )


def compare_learners(configs: Iterable[ExperimentConfig]) -> list[RegretSummary]:
    """Replicate each config and stamp every summary with the minimum mean regret."""
    summaries = [replicate(c) for c in configs]
    low = min(s.mean_regret for s in summaries)
    return [replace(s, min_over_learners=low) for s in summaries]


def sweep(config: ExperimentConfig, grid: Sequence[int]) -> tuple[list[RegretSummary], tuple[float, float, float]]:
    """Replicate ``config`` on each horizon in ``grid`` and fit the regret exponent."""
    summaries = [replicate(with_T(config, T)) for T in sorted(grid)]
    fit = fit_scaling_exponent([(s.config.T, s.mean_regret) for s in summaries])
    return [replace(s, fitted_exponent=fit[0]) for s in summaries], fit


def eta_sweep(config: ExperimentConfig, etas: Sequence[float]) -> list[RegretSummary]:
    """Replicate an EWS ``config`` at each learning rate in ``etas``."""
    if not isinstance(config.learner, L.Ews):
        raise ConfigError("eta: learning-rate sweeps need an ews learner")
    return [replicate(build_config(dict(config.raw, eta=float(eta)))) for eta in etas]


def ews_noisy_bound(eps: float, eta: float, T: int, K: int) -> float:
    """Full-information regret bound (ln K / eta + eta T) / eps at an arbitrary rate."""
    return (math.log(K) / eta + eta * T) / eps


# ---------------------------------------------------------------------------
# Bounds and fits
# ---------------------------------------------------------------------------


def theoretical_bound(setting: str, eps: Optional[float], T: int, K: int, dist=None, known: bool = True) -> Bound:
    lnK = math.log(K)
    if setting == "full-const":
        warn = None if T >= lnK / 4 else "T < ln(K)/4"
        return Bound(2.0 / eps * math.sqrt(T * lnK), "(2/eps) sqrt(T ln K)", warn)
    if setting == "bandit-const":
        return Bound(2.0 / eps * math.sqrt(T * K * lnK), "(2/eps) sqrt(T K ln K)")
    if not known:
        return Bound(None, "linear regret without observed noise")
    if setting == "full-var":
        if dist is None or isinstance(dist, nc.Uniform01):
            return Bound(3.0 * T ** (2 / 3) * lnK ** (1 / 3), "3 T^(2/3) (ln K)^(1/3)")
        if isinstance(dist, nc.TruncExp):
            return Bound(3.0 * dist.lam * T ** (2 / 3) * lnK ** (1 / 3), "3 lam T^(2/3) (ln K)^(1/3)")
        theta = L.default_theta("full-var", T, K, dist)
        return Bound(
            2.0 / theta * math.sqrt(T * lnK) + theta**dist.alpha * T,
            "(2/theta) sqrt(T ln K) + theta^alpha T",
        )
    if setting == "bandit-var":
        if dist is None or isinstance(dist, nc.Uniform01):
            return Bound(3.0 * T ** (2 / 3) * K ** (1 / 3) * lnK ** (1 / 3), "3 T^(2/3) K^(1/3) (ln K)^(1/3)")
        return Bound(None, "no bound for non-uniform bandit noise")
    raise ConfigError(f"setting: unknown {setting!r}")


def power_law_exponent(alpha: float) -> float:
    """T-exponent of the threshold learner's bound when F(theta) <= theta**alpha."""
    return (2.0 + alpha) / (2.0 + 2.0 * alpha)


def fit_scaling_exponent(pairs: Sequence[tuple[float, float]]) -> tuple[float, float, float]:
    """OLS of ln(regret) on ln(T); returns (slope, intercept, r^2)."""
    kept = [(T, r) for T, r in pairs if r > 0]
    if len(kept) < len(pairs):
        warnings.warn(f"dropped {len(pairs) - len(kept)} non-positive regret values from the fit")
    if len(kept) < 4:
        raise ValueError(f"need at least 4 positive grid points, got {len(kept)}")
    x = np.log([T for T, _ in kept])
    y = np.log([r for _, r in kept])
    fit = stats.linregress(x, y)
    return float(fit.slope), float(fit.intercept), float(fit.rvalue**2)


# ---------------------------------------------------------------------------
# Environment-only Monte Carlo
# ---------------------------------------------------------------------------


def environment_feedback(config: ExperimentConfig, rounds: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Losses, noisy bits and realized noise for ``rounds`` independent rounds
    of one adversary instance, vectorized over rounds.

    Only valid for adversaries that do not depend on the round index; the
    learner plays no part.  Returns ``(planted, losses, bits)``.
    """
    K = config.K
    built = config.adversary.build(K, [stream(config.root_seed, seed, "adversary")])
    rng = stream(config.root_seed, seed, "harness")
    m = config.noise.draws_per_round(K)
    eps = config.noise.realize(rng.random((rounds, m)), K)
    losses = built.assign(0, eps if built.needs_noise else None, rng.random((rounds, built.draws_per_round)))
    bits = nc.corrupt(losses, eps, rng.random((rounds, K)))
    return built.planted, losses, bits
