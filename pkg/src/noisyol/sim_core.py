"""Domain types, the round protocol, and pseudo-regret accounting.

Round ordering (every round, every episode):

1. the noise model realizes the round's noise parameters;
2. the adversary fixes the loss vector, possibly reading the realized noise;
3. the learner is handed the noise parameters if the setting is "known noise";
4. the learner emits ``q_t`` and the action ``I_t`` is sampled from it;
5. losses are corrupted and delivered (all actions, or only ``I_t`` in bandit mode);
6. the learner updates.

Randomness: each episode owns four independent streams (adversary, noise,
learner, harness), so swapping the learner leaves losses and noise unchanged.
A stream is a Philox4x64-10 generator whose 128-bit key is
``(root_seed, 4 * episode_seed + stream_index)`` with the stream indices in
:data:`STREAMS`; the counter starts at zero.  Each component draws a fixed
number of uniforms per round, so the engine can pre-draw them in blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

STREAMS = {"adversary": 0, "noise": 1, "learner": 2, "harness": 3}
MODES = ("full", "bandit")


class ConfigError(ValueError):
    """Inconsistent or out-of-range experiment configuration."""


def stream(root_seed: int, seed: int, name: str) -> np.random.Generator:
    """The named RNG stream of one episode."""
    if root_seed < 0 or seed < 0:
        raise ConfigError(f"seeds must be non-negative, got root_seed={root_seed}, seed={seed}")
    key = np.array([root_seed, 4 * seed + STREAMS[name]], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


class LossMatrix:
    """T x K binary losses."""

    def __init__(self, entries):
        arr = np.asarray(entries)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ConfigError(f"loss matrix must be T x K, got shape {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise ConfigError("loss entries must be 0 or 1")
        self.entries = arr.astype(np.int8)

    @property
    def T(self) -> int:
        return self.entries.shape[0]

    @property
    def K(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class NoiseParamsRound:
    eps: np.ndarray

    @property
    def p(self) -> np.ndarray:
        return (1.0 - self.eps) / 2.0


@dataclass(frozen=True)
class FeedbackVector:
    """Noisy bits with an observation mask; unobserved entries are ``None`` in :meth:`values`."""

    bits: np.ndarray
    observed: np.ndarray
    mode: str

    def values(self) -> list:
        return [int(b) if o else None for b, o in zip(self.bits, self.observed)]


@dataclass(frozen=True)
class RoundRecord:
    t: int
    noise: NoiseParamsRound
    q: np.ndarray
    played: int
    feedback: FeedbackVector
    estimates: np.ndarray
    true_loss: np.ndarray


@dataclass
class RegretTrace:
    """Outcome of one episode.

    ``final`` is the pseudo-regret against the realized best action
    (lowest index on ties); ``planted_regret`` uses the adversary's planted
    action instead, when there is one.
    """

    final: float
    best_action: int
    learner_loss: float
    realized_regret: float
    per_round: Optional[np.ndarray] = None
    planted: Optional[int] = None
    planted_regret: Optional[float] = None
    ews_margin: Optional[float] = None
    ews_violations: int = 0
    records: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Regret accounting
# ---------------------------------------------------------------------------


def _loss_array(losses) -> np.ndarray:
    if isinstance(losses, LossMatrix):
        return losses.entries.astype(float)
    return LossMatrix(losses).entries.astype(float)


def _check_shapes(ell, q):
    if q.shape != ell.shape:
        raise ConfigError(f"q sequence shape {q.shape} does not match losses {ell.shape}")


def pseudo_regret(losses, q_seq) -> float:
    """sum_t q_t . l_t - min_k sum_t l_{k,t}."""
    ell = _loss_array(losses)
    q = np.asarray(q_seq, dtype=float)
    _check_shapes(ell, q)
    return float((q * ell).sum() - ell.sum(axis=0).min())


def cumulative_pseudo_regret(losses, q_seq) -> np.ndarray:
    """Pseudo-regret of every prefix of the episode."""
    ell = _loss_array(losses)
    q = np.asarray(q_seq, dtype=float)
    _check_shapes(ell, q)
    return np.cumsum((q * ell).sum(axis=1)) - np.cumsum(ell, axis=0).min(axis=1)


def best_action(losses) -> int:
    return int(np.argmin(_loss_array(losses).sum(axis=0)))


# ---------------------------------------------------------------------------
# The round protocol
# ---------------------------------------------------------------------------


class RoundDraws(NamedTuple):
    """Uniforms consumed by one round, each with a leading batch axis."""

    adversary: np.ndarray
    noise: np.ndarray
    flips: np.ndarray
    play: np.ndarray


class RoundBatch(NamedTuple):
    t: int
    eps: np.ndarray
    loss: np.ndarray
    q: np.ndarray
    played: np.ndarray
    bits: np.ndarray
    observed: np.ndarray
    estimates: np.ndarray

    def record(self, row: int, mode: str) -> RoundRecord:
        return RoundRecord(
            t=self.t,
            noise=NoiseParamsRound(self.eps[row].copy()),
            q=self.q[row].copy(),
            played=int(self.played[row]),
            feedback=FeedbackVector(self.bits[row].copy(), self.observed[row].copy(), mode),
            estimates=self.estimates[row].copy(),
            true_loss=self.loss[row].copy(),
        )


def sample_actions(q: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling of one action per row of ``q``."""
    cdf = np.cumsum(q, axis=1)
    cdf[:, -1] = 1.0
    return (cdf <= u[:, None]).sum(axis=1)


def run_round(t, learner, adversary, noise, mode: str, draws: RoundDraws, *, noise_known: bool) -> RoundBatch:
    """Advance a batch of episodes by one round.

    ``learner`` is a runtime learner (see :mod:`noisyol.learners`), ``adversary``
    a built adversary and ``noise`` a noise model.
    """
    batch = draws.play.shape[0]
    K = adversary.K
    eps = noise.realize(draws.noise, K)
    if adversary.needs_noise and not noise.observable:
        raise ConfigError(f"adversary {adversary.name!r} needs noise the model does not reveal")
    loss = adversary.assign(t, eps if adversary.needs_noise else None, draws.adversary)
    seen_eps = eps if noise_known else None
    q = learner.distribution()
    played = sample_actions(q, draws.play)
    rows = np.arange(batch)
    bits = np.bitwise_xor(loss, (draws.flips < (1.0 - eps) / 2.0).astype(np.int8))
    played_mask = np.zeros((batch, K), dtype=bool)
    played_mask[rows, played] = True
    observed = played_mask if mode == "bandit" else np.ones((batch, K), dtype=bool)
    estimates = learner.update(bits, observed, seen_eps, q, played_mask)
    return RoundBatch(t, eps, loss, q, played, bits, observed, estimates)


def _keyed_state(root_seed: int, seed: int, name: str) -> dict:
    """Philox state of a fresh :func:`stream`, without paying for entropy seeding."""
    if root_seed < 0 or seed < 0:
        raise ConfigError(f"seeds must be non-negative, got root_seed={root_seed}, seed={seed}")
    return {
        "bit_generator": "Philox",
        "state": {
            "counter": np.zeros(4, dtype=np.uint64),
            "key": np.array([root_seed, 4 * seed + STREAMS[name]], dtype=np.uint64),
        },
        "buffer": np.zeros(4, dtype=np.uint64),
        "buffer_pos": 4,
        "has_uint32": 0,
        "uinteger": 0,
    }


class _Block:
    """Pre-drawn uniforms for one stream kind, ``width`` per round per episode.

    The episodes' streams are multiplexed on one bit generator: its state is
    swapped in, a chunk is drawn, and the advanced state is stored back.  The
    numbers are exactly those the stand-alone generators would produce.
    """

    def __init__(self, states: Sequence[dict], width: int, horizon: int, chunk: int):
        self.states = list(states)
        self.width = width
        self.horizon = horizon
        self.chunk = chunk
        self.t = 0
        self.buf = np.empty((0, len(self.states), width))
        self.pos = 0
        self._bg = np.random.Philox(0)
        self._gen = np.random.Generator(self._bg)

    def next(self) -> np.ndarray:
        S = len(self.states)
        if self.width == 0:
            self.t += 1
            return np.empty((S, 0))
        if self.pos == self.buf.shape[0]:
            # keep the buffer near 32 MB however many episodes share it
            cap = max(1, (1 << 22) // (S * self.width))
            n = max(1, min(self.chunk, cap, self.horizon - self.t))
            buf = np.empty((n, S, self.width))
            last = self.t + n >= self.horizon
            for i, st in enumerate(self.states):
                self._bg.state = st
                buf[:, i, :] = self._gen.random((n, self.width))
                if not last:
                    self.states[i] = self._bg.state
            self.buf = buf
            self.pos = 0
        row = self.buf[self.pos]
        self.pos += 1
        self.t += 1
        return row


class Episodes:
    """A batch of independent episodes with a shared configuration.

    Episode ``i`` uses the streams of ``seeds[i]``; its trajectory does not
    depend on which other seeds share the batch.
    """

    def __init__(
        self,
        *,
        K: int,
        T: int,
        noise,
        adversary,
        learner,
        mode: str,
        noise_known: bool,
        seeds: Iterable[int],
        root_seed: int = 0,
        trace: bool = False,
        keep_records: bool = False,
        chunk: int = 4096,
    ):
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        self.seeds = list(seeds)
        if not self.seeds:
            raise ConfigError("need at least one seed")
        self.K, self.T, self.mode = K, T, mode
        self.noise, self.noise_known = noise, noise_known
        self.learner_kind = learner
        estimator = getattr(learner, "estimator", None)
        if estimator is not None:
            if estimator.needs_noise and not noise_known:
                raise ConfigError(f"estimator {estimator.name!r} needs observed noise")
            if estimator.bandit != (mode == "bandit"):
                raise ConfigError(f"estimator {estimator.name!r} does not fit {mode!r} feedback")
        if adversary.needs_noise and not noise.observable:
            raise ConfigError(f"adversary {adversary.name!r} needs noise the model does not reveal")

        S = len(self.seeds)
        if adversary.name in ("fixed", "zero"):
            # deterministic: no construction draws, no per-round draws
            self.adversary = adversary.build(K, [])
            adv_states = [None] * S
        else:
            adv_rngs = [stream(root_seed, s, "adversary") for s in self.seeds]
            self.adversary = adversary.build(K, adv_rngs)
            adv_states = [r.bit_generator.state for r in adv_rngs]
        if self.adversary.K != K:
            raise ConfigError(f"adversary has {self.adversary.K} actions, config says K={K}")
        m = noise.draws_per_round(K)
        self._adv = _Block(adv_states, self.adversary.draws_per_round, T, chunk)
        self._noise = _Block([_keyed_state(root_seed, s, "noise") for s in self.seeds], m + K, T, chunk)
        self._play = _Block([_keyed_state(root_seed, s, "learner") for s in self.seeds], 1, T, chunk)
        self._m = m
        self.runtime = learner.start(S, K)

        self.t = 0
        self.learner_loss = np.zeros(S)
        self.action_loss = np.zeros((S, K))
        self.realized = np.zeros(S)
        self.per_round = np.zeros((S, T)) if trace else None
        self.records: Optional[list] = [[] for _ in range(S)] if keep_records else None

    def step(self) -> RoundBatch:
        nz = self._noise.next()
        draws = RoundDraws(self._adv.next(), nz[:, : self._m], nz[:, self._m :], self._play.next()[:, 0])
        rb = run_round(self.t, self.runtime, self.adversary, self.noise, self.mode, draws, noise_known=self.noise_known)
        self.learner_loss += (rb.q * rb.loss).sum(axis=1)
        self.action_loss += rb.loss
        self.realized += rb.loss[np.arange(len(self.seeds)), rb.played]
        if self.per_round is not None:
            self.per_round[:, self.t] = self.learner_loss - self.action_loss.min(axis=1)
        if self.records is not None:
            for i, recs in enumerate(self.records):
                recs.append(rb.record(i, self.mode))
        self.t += 1
        return rb

    def run(self) -> list[RegretTrace]:
        while self.t < self.T:
            self.step()
        return self.traces()

    def traces(self) -> list[RegretTrace]:
        best = self.action_loss.argmin(axis=1)
        best_loss = self.action_loss.min(axis=1)
        planted = self.adversary.planted
        margins = getattr(self.runtime, "ews_margin", None)
        margins = margins() if margins is not None else None
        violations = getattr(self.runtime, "violations", None)
        out = []
        for i in range(len(self.seeds)):
            p = None if planted is None else int(planted[i])
            out.append(
                RegretTrace(
                    final=float(self.learner_loss[i] - best_loss[i]),
                    best_action=int(best[i]),
                    learner_loss=float(self.learner_loss[i]),
                    realized_regret=float(self.realized[i] - best_loss[i]),
                    per_round=None if self.per_round is None else self.per_round[i, : self.t].copy(),
                    planted=p,
                    planted_regret=None if p is None else float(self.learner_loss[i] - self.action_loss[i, p]),
                    ews_margin=None if margins is None else float(margins[i]),
                    ews_violations=0 if violations is None else int(violations[i]),
                    records=[] if self.records is None else self.records[i],
                )
            )
        return out
