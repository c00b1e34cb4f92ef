import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from noisyol import estimators as est
from noisyol import learners as L
from noisyol import noise_channel as nc
from noisyol.adversaries import AdversarySpec
from noisyol.sim_core import (
    ConfigError,
    Episodes,
    LossMatrix,
    best_action,
    cumulative_pseudo_regret,
    pseudo_regret,
    sample_actions,
    stream,
)


class TestPseudoRegret:
    def test_single_round(self):
        assert pseudo_regret([[0, 1]], [[0.5, 0.5]]) == 0.5

    def test_zero_losses(self):
        q = np.random.default_rng(0).dirichlet(np.ones(3), size=5)
        assert pseudo_regret(np.zeros((5, 3), int), q) == 0.0

    def test_alternating(self):
        assert pseudo_regret([[1, 0], [0, 1]], [[0.5, 0.5]] * 2) == 0.0

    def test_shape_mismatch(self):
        with pytest.raises(ConfigError):
            pseudo_regret([[0, 1]], [[0.5, 0.5], [0.5, 0.5]])

    def test_non_binary(self):
        with pytest.raises(ConfigError):
            LossMatrix([[0, 2]])

    def test_ties_lowest_index(self):
        assert best_action([[1, 0, 0], [0, 1, 0]]) == 2
        assert best_action([[0, 0]]) == 0

    def test_cumulative_prefixes(self):
        ell = [[0, 1], [1, 0], [1, 0]]
        q = [[0.5, 0.5], [1.0, 0.0], [0.0, 1.0]]
        np.testing.assert_allclose(cumulative_pseudo_regret(ell, q), [0.5, 0.5, 0.5])


@st.composite
def episodes(draw):
    T = draw(st.integers(1, 8))
    K = draw(st.integers(2, 5))
    ell = draw(hnp.arrays(np.int8, (T, K), elements=st.integers(0, 1)))
    w = draw(hnp.arrays(np.float64, (T, K), elements=st.floats(0.01, 1.0)))
    return ell, w / w.sum(axis=1, keepdims=True)


@settings(max_examples=200, deadline=None)
@given(episodes(), st.randoms())
def test_regret_permutation_invariant(ep, rnd):
    ell, q = ep
    perm = list(range(ell.shape[1]))
    rnd.shuffle(perm)
    assert pseudo_regret(ell[:, perm], q[:, perm]) == pytest.approx(pseudo_regret(ell, q), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(episodes())
def test_regret_dominates_every_comparator(ep):
    ell, q = ep
    online = float((q * ell).sum())
    r = pseudo_regret(ell, q)
    for k in range(ell.shape[1]):
        assert r >= online - ell[:, k].sum() - 1e-12


def test_sample_actions_inverse_cdf():
    q = np.array([[0.2, 0.3, 0.5]] * 4)
    u = np.array([0.0, 0.19999, 0.2, 0.9999999])
    np.testing.assert_array_equal(sample_actions(q, u), [0, 0, 1, 2])


def _episodes(learner=None, noise=None, adversary=None, mode="full", seeds=(0,), T=50, K=3, **kw):
    return Episodes(
        K=K, T=T, noise=noise or nc.Constant(0.5), adversary=adversary or AdversarySpec("stochastic-gap", delta=0.2),
        learner=learner or L.Ews(est.UnbiasedConstant(0.25), 0.1), mode=mode, noise_known=True, seeds=seeds, **kw,
    )


class TestRunRound:
    def test_noiseless_feedback_is_loss(self):
        ep = _episodes(learner=L.UniformRandom(), noise=nc.Constant(1.0), adversary=AdversarySpec("zero"))
        for _ in range(20):
            rb = ep.step()
            np.testing.assert_array_equal(rb.bits, rb.loss)
            np.testing.assert_array_equal(rb.loss, 0)
            assert np.isfinite(rb.estimates).all()

    def test_bandit_one_entry(self):
        ep = _episodes(learner=L.Ews(est.BanditImportance(), 0.05), mode="bandit", seeds=range(4), keep_records=True)
        traces = ep.run()
        for tr in traces:
            for rec in tr.records:
                vals = rec.feedback.values()
                present = [i for i, v in enumerate(vals) if v is not None]
                assert present == [rec.played]

    def test_full_info_all_present(self):
        tr = _episodes(keep_records=True).run()[0]
        assert all(None not in rec.feedback.values() for rec in tr.records)

    @pytest.mark.parametrize(
        "learner,mode,noise,adversary",
        [
            (L.Ews(est.UnbiasedConstant(0.25), 0.3), "full", nc.Constant(0.5), AdversarySpec("stochastic-gap", delta=0.3)),
            (L.Ews(est.BanditImportance(), 0.3), "bandit", nc.Constant(0.5), AdversarySpec("bandit-gap", beta=0.5)),
            (L.Ews(est.Exp3Threshold(0.2), 0.02), "bandit", nc.SharedUniform(), AdversarySpec("bandit-variable-noise", theta=0.3, beta=0.3)),
        ],
    )
    def test_q_valid(self, learner, mode, noise, adversary):
        ep = _episodes(learner=learner, mode=mode, noise=noise, adversary=adversary, seeds=range(8), T=300)
        for _ in range(300):
            q = ep.step().q
            np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-12)
            assert (q > 0).all()

    def test_adversary_needs_visible_noise(self):
        with pytest.raises(ConfigError):
            _episodes(noise=nc.IIDMarginal(nc.Uniform01(), observable=False), adversary=AdversarySpec("unknown-noise"), K=2,
                      learner=L.Ews(est.Raw(), 0.1))

    def test_estimator_mode_mismatch(self):
        with pytest.raises(ConfigError):
            _episodes(learner=L.Ews(est.BanditImportance(), 0.1), mode="full")
        with pytest.raises(ConfigError):
            Episodes(K=3, T=5, noise=nc.SharedUniform(), adversary=AdversarySpec("zero"),
                     learner=L.Ews(est.ThresholdFull(0.3), 0.1), mode="full", noise_known=False, seeds=[0])

    def test_unknown_mode(self):
        with pytest.raises(ConfigError):
            _episodes(mode="semi")


class TestDeterminism:
    def test_same_seed_same_records(self):
        a = _episodes(seeds=[7], keep_records=True, trace=True).run()[0]
        b = _episodes(seeds=[7], keep_records=True, trace=True).run()[0]
        assert a.final == b.final
        np.testing.assert_array_equal(a.per_round, b.per_round)
        for ra, rb in zip(a.records, b.records):
            np.testing.assert_array_equal(ra.q, rb.q)
            np.testing.assert_array_equal(ra.feedback.bits, rb.feedback.bits)
            assert ra.played == rb.played

    def test_batch_composition_irrelevant(self):
        for noise, adversary, learner, mode in [
            (nc.Constant(0.5), AdversarySpec("stochastic-gap", delta=0.2), L.Ews(est.UnbiasedConstant(0.25), 0.1), "full"),
            (nc.SharedUniform(), AdversarySpec("bandit-variable-noise", theta=0.3, beta=0.3), L.Ews(est.Exp3Threshold(0.2), 0.02), "bandit"),
            (nc.IIDMarginal(nc.Uniform01()), AdversarySpec("unknown-noise"), L.FollowNoisyLeader(), "full"),
        ]:
            K = 2 if adversary.name == "unknown-noise" else 4
            kw = dict(noise=noise, adversary=adversary, learner=learner, mode=mode, K=K, T=500, trace=True)
            alone = _episodes(seeds=[11], **kw).run()[0]
            mixed = _episodes(seeds=[3, 11, 5], **kw).run()[1]
            np.testing.assert_array_equal(alone.per_round, mixed.per_round)
            assert alone.realized_regret == mixed.realized_regret

    def test_chunk_size_irrelevant(self):
        a = _episodes(seeds=[1, 2], T=300, trace=True, chunk=7).run()
        b = _episodes(seeds=[1, 2], T=300, trace=True).run()
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.per_round, y.per_round)

    def test_streams_match_standalone_generators(self):
        ep = _episodes(seeds=[4], T=10, noise=nc.IIDMarginal(nc.Uniform01()), adversary=AdversarySpec("zero"),
                       learner=L.UniformRandom())
        draws = np.stack([ep._noise.next()[0] for _ in range(10)])
        np.testing.assert_array_equal(draws, stream(0, 4, "noise").random((10, 6)))

    def test_learner_swap_keeps_losses(self):
        kw = dict(seeds=[2], T=40, keep_records=True)
        a = _episodes(learner=L.UniformRandom(), **kw).run()[0]
        b = _episodes(learner=L.FollowNoisyLeader(), **kw).run()[0]
        for ra, rb in zip(a.records, b.records):
            np.testing.assert_array_equal(ra.true_loss, rb.true_loss)
            np.testing.assert_array_equal(ra.feedback.bits, rb.feedback.bits)

    def test_negative_seed(self):
        with pytest.raises(ConfigError):
            stream(0, -1, "noise")


class TestTrace:
    def test_final_matches_definition(self):
        tr = _episodes(seeds=[3], T=80, keep_records=True, trace=True).run()[0]
        ell = np.array([r.true_loss for r in tr.records])
        q = np.array([r.q for r in tr.records])
        assert tr.final == pytest.approx(pseudo_regret(ell, q), abs=1e-9)
        np.testing.assert_allclose(tr.per_round, cumulative_pseudo_regret(ell, q), atol=1e-9)
        assert tr.best_action == best_action(ell)
        assert tr.planted_regret == pytest.approx(float((q * ell).sum() - ell[:, tr.planted].sum()))
