import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from noisyol import estimators as est
from noisyol import learners as L
from noisyol import noise_channel as nc
from noisyol.adversaries import AdversarySpec
from noisyol.sim_core import Episodes

# Recomputed with 50-digit mpmath and frozen here.
ETA_FULL_CONST = 0.007587135646925732  # eps=0.5, K=10, T=1e4
ETA_FULL_VAR = 1.743721513596e-4  # K=10, T=1e6
THETA_FULL_VAR = 0.01320500478453685
ETA_BANDIT_VAR = 6.216419424375857e-5  # K=2, T=1e6
THETA_BANDIT_VAR = 0.01115026405460952


class TestSelectDistribution:
    def test_fresh_is_uniform(self):
        np.testing.assert_array_equal(L.select_distribution(L.EwsState.fresh(4, 0.1)), [0.25] * 4)

    def test_large_gap(self):
        q = L.select_distribution(L.EwsState(np.array([0.0, -50.0]), 1.0))
        assert q[0] == pytest.approx(1.0)
        assert q[1] == pytest.approx(math.exp(-50), rel=1e-9)
        assert q[1] > 0
        assert q.sum() == pytest.approx(1.0, abs=1e-15)

    @settings(max_examples=200, deadline=None)
    @given(
        logw=hnp.arrays(np.float64, st.integers(2, 12), elements=st.floats(-700, 700)),
        shift=st.floats(-1e3, 1e3),
    )
    def test_shift_invariant_and_normalized(self, logw, shift):
        q = L.select_distribution(L.EwsState(logw, 1.0))
        q2 = L.select_distribution(L.EwsState(logw + shift, 1.0))
        np.testing.assert_allclose(q, q2, atol=1e-15)
        assert abs(q.sum() - 1.0) <= 1e-12

    def test_batched_rows(self):
        logw = np.array([[0.0, 0.0], [0.0, -1.0]])
        q = L.select_distribution(L.EwsState(logw, 1.0))
        np.testing.assert_allclose(q[1], [1 / (1 + math.exp(-1)), math.exp(-1) / (1 + math.exp(-1))])


class TestUpdate:
    def test_zero_estimates(self):
        s = L.EwsState.fresh(3, 0.5)
        s2 = L.update(s, np.zeros(3))
        np.testing.assert_array_equal(s2.logW, s.logW)
        assert s2.round == 1

    def test_single_step(self):
        q = L.select_distribution(L.update(L.EwsState.fresh(2, 1.0), [1.0, 0.0]))
        e = math.exp(-1)
        np.testing.assert_allclose(q, [e / (e + 1), 1 / (e + 1)], rtol=1e-12)
        np.testing.assert_allclose(q, [0.2689, 0.7311], atol=1e-4)

    def test_additive(self):
        a, b = np.array([0.3, -0.2, 1.0]), np.array([2.0, 0.5, -0.1])
        s = L.EwsState.fresh(3, 0.7)
        two = L.update(L.update(s, a), b)
        one = L.update(s, a + b)
        np.testing.assert_allclose(two.logW, one.logW, atol=1e-15)

    def test_hypothesis_violation_names_estimator(self):
        with pytest.raises(L.EwsHypothesisError, match="exp3-threshold"):
            L.update(L.EwsState.fresh(2, 1.0), [-2.0, 0.0], estimator="exp3-threshold")

    def test_unchecked_update(self):
        s = L.update(L.EwsState.fresh(2, 1.0), [-2.0, 0.0], check=False)
        assert s.logW[0] == 2.0

    def test_eta_positive(self):
        with pytest.raises(ValueError):
            L.EwsState.fresh(2, 0.0)
        with pytest.raises(ValueError):
            L.Ews(est.Raw(), -1.0)


class TestDefaults:
    def test_full_const(self):
        assert L.default_eta("full-const", eps=0.5, T=10**4, K=10) == pytest.approx(ETA_FULL_CONST, rel=1e-12)

    def test_full_var(self):
        assert L.default_eta("full-var", T=10**6, K=10) == pytest.approx(ETA_FULL_VAR, rel=1e-9)
        assert L.default_theta("full-var", 10**6, 10) == pytest.approx(THETA_FULL_VAR, rel=1e-12)

    def test_bandit_var(self):
        assert L.default_eta("bandit-var", T=10**6, K=2) == pytest.approx(ETA_BANDIT_VAR, rel=1e-12)
        assert L.default_theta("bandit-var", 10**6, 2) == pytest.approx(THETA_BANDIT_VAR, rel=1e-12)

    def test_bandit_const(self):
        assert L.default_eta("bandit-const", eps=0.5, T=10**4, K=10) == pytest.approx(ETA_FULL_CONST / math.sqrt(10))

    def test_threshold_can_exceed_one(self):
        # theta >= 1 exactly when T <= ln K; configs reject it
        assert L.default_theta("full-var", math.e, math.e) == pytest.approx(math.exp(-1 / 3))
        assert L.default_theta("full-var", 2, 8) > 1.0

    def test_truncexp_and_power(self):
        d = nc.TruncExp(2.0)
        theta = L.default_theta("full-var", 10**5, 10, d)
        assert theta == pytest.approx((math.log(10) / 1e5) ** (1 / 3) / 2)
        eta = L.default_eta("full-var", theta=theta, T=10**5, K=10, dist=d)
        assert eta == pytest.approx(math.sqrt(math.log(10) / (1e5 * nc.g_integrand_bound(d, theta))))
        a = 0.5
        assert L.default_theta("full-var", 10**5, 10, nc.PowerCdf(a)) == pytest.approx(
            (2 / a) ** (1 / (1 + a)) * (math.log(10) / 1e5) ** (1 / (2 * (1 + a)))
        )

    def test_unknown_setting(self):
        with pytest.raises(ValueError):
            L.default_eta("nowhere", T=10, K=2)
        with pytest.raises(ValueError):
            L.default_eta("full-const", eps=0.0, T=10, K=2)


def _lockstep(kinds, T, eps, seeds, K=3):
    runs = [
        Episodes(K=K, T=T, noise=nc.Constant(eps), adversary=AdversarySpec("stochastic-gap", delta=0.2),
                 learner=k, mode="full", noise_known=True, seeds=seeds)
        for k in kinds
    ]
    qs = [[] for _ in kinds]
    for _ in range(T):
        for i, r in enumerate(runs):
            qs[i].append(r.step().q)
    return [np.stack(q, axis=1) for q in qs]


class TestRawUnbiasedCoupling:
    @settings(max_examples=25, deadline=None)
    @given(eps=st.floats(0.05, 0.95), eta=st.floats(0.01, 0.5), seed=st.integers(0, 1000))
    def test_matching_rates_give_same_q(self, eps, eta, seed):
        p = (1 - eps) / 2
        unb = L.Ews(est.UnbiasedConstant(p), eta)
        raw = L.Ews(est.Raw(), eta / (1 - 2 * p))
        qa, qb = _lockstep([unb, raw], 50, eps, [seed])
        np.testing.assert_allclose(qa, qb, atol=1e-10, rtol=0)

    def test_other_direction_differs(self):
        # scaling eta_raw by (1 - 2p) instead of dividing gives different dynamics
        eps, eta = 0.5, 0.2
        p = (1 - eps) / 2
        unb = L.Ews(est.UnbiasedConstant(p), eta)
        raw = L.Ews(est.Raw(), eta * (1 - 2 * p))
        qa, qb = _lockstep([unb, raw], 200, eps, [0])
        assert np.abs(qa - qb).max() > 1e-3


class TestBaselines:
    def test_follow_noisy_leader_ties_lowest(self):
        rt = L.FollowNoisyLeader().start(1, 3)
        np.testing.assert_array_equal(rt.distribution(), [[1, 0, 0]])
        rt.update(np.array([[1, 0, 0]]), np.ones((1, 3), bool), None, None, None)
        np.testing.assert_array_equal(rt.distribution(), [[0, 1, 0]])

    def test_follow_noisy_leader_ignores_unobserved(self):
        rt = L.FollowNoisyLeader().start(1, 2)
        rt.update(np.array([[0, 1]]), np.array([[True, False]]), None, None, None)
        np.testing.assert_array_equal(rt.cumulative, [[0, 0]])

    def test_follow_noisy_leader_deterministic(self):
        c = np.random.default_rng(0).integers(0, 2, (30, 1, 4))
        out = []
        for _ in range(2):
            rt = L.FollowNoisyLeader().start(1, 4)
            qs = []
            for t in range(30):
                qs.append(rt.distribution())
                rt.update(c[t], np.ones((1, 4), bool), None, None, None)
            out.append(np.concatenate(qs))
        np.testing.assert_array_equal(out[0], out[1])

    def test_uniform(self):
        np.testing.assert_array_equal(L.UniformRandom().start(2, 4).distribution(), np.full((2, 4), 0.25))


@pytest.mark.parametrize(
    "learner,noise,mode,adv",
    [
        (L.Ews(est.UnbiasedConstant(0.25), 0.05), nc.Constant(0.5), "full", AdversarySpec("stochastic-gap", delta=0.1)),
        (L.Ews(est.Raw(), 0.05), nc.Constant(0.3), "full", AdversarySpec("stochastic-gap", delta=0.1)),
        (L.Ews(est.ThresholdFull(0.2), 0.02), nc.SharedUniform(), "full", AdversarySpec("variable-noise", theta=0.2)),
        (L.Ews(est.BanditImportance(), 0.01), nc.Constant(0.5), "bandit", AdversarySpec("bandit-gap", beta=0.3)),
        (L.Ews(est.Exp3Threshold(0.3), 0.005), nc.SharedUniform(), "bandit", AdversarySpec("bandit-variable-noise", theta=0.3, beta=0.2)),
    ],
)
def test_ews_inequality_on_episodes(learner, noise, mode, adv):
    traces = Episodes(K=4, T=2000, noise=noise, adversary=adv, learner=learner, mode=mode,
                      noise_known=True, seeds=range(10)).run()
    for tr in traces:
        assert tr.ews_violations == 0
        assert tr.ews_margin >= -1e-9
