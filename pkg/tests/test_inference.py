import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from scipy import stats

from cimlearn.catalog import random_params
from cimlearn.core import MAX, MULTINOMIAL, PARITY, Mechanism, ModelParams, ModelStructure, VariableSpec, nof
from cimlearn.inference import (
    EnumerationLimitError,
    ZeroProbabilityEvidence,
    brute_force_posterior,
    effect_logprob,
    enumerated_effect_distribution,
    eval_combination,
    loglik,
    loglik_case,
    mech_posterior,
    nmi_batch_posteriors,
    nmi_effect_cdf,
    nmi_effect_distribution,
    nmi_mech_posterior,
    poisson_nai_effect,
    poisson_nai_mech_posterior,
    poisson_nested_sum_posterior,
)
from conftest import poisson_model, two_cause_max


@st.composite
def nmi_instances(draw, max_mechs=4, max_card=4):
    """Random max model with multinomial mechanisms, params, cause state and a possible effect."""
    n_causes = draw(st.integers(1, 3))
    cause_cards = [draw(st.integers(2, 3)) for _ in range(n_causes)]
    r = draw(st.integers(2, max_card))
    m = draw(st.integers(1, max_mechs))
    mechs = []
    for i in range(m):
        parents = draw(st.lists(st.integers(0, n_causes - 1), unique=True, max_size=n_causes))
        mechs.append(Mechanism(tuple(sorted(parents)), MULTINOMIAL, draw(st.integers(2, r)), f"X{i}"))
    model = ModelStructure(
        tuple(VariableSpec(f"C{k}", c) for k, c in enumerate(cause_cards)), VariableSpec("E", r), tuple(mechs), MAX
    )
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    params = random_params(model, rng, low=0.01, high=0.99)
    c = tuple(int(rng.integers(k)) for k in cause_cards)
    e = int(rng.integers(max(m.cardinality for m in mechs)))
    return model, params, c, e


class TestCombination:
    def test_max_and_sum(self):
        assert eval_combination(MAX, [0, 2, 1]) == 2

    def test_parity_counts_zero_ones_as_even(self):
        assert eval_combination(PARITY, [0, 0]) == 1
        assert eval_combination(PARITY, [1, 0]) == 0
        assert eval_combination(PARITY, [1, 1]) == 1

    def test_nof(self):
        assert eval_combination(nof(2), [1, 0, 1]) == 1
        assert eval_combination(nof(2), [1, 0, 0]) == 0

    def test_batch_shape(self):
        out = eval_combination(MAX, np.array([[0, 1], [0, 0]]))
        assert out.tolist() == [1, 0]


class TestNoisyMaxWorkedExample:
    def test_effect_distribution(self):
        model, params = two_cause_max()
        dist = nmi_effect_distribution(model, params, (0, 0))
        assert dist.probs == pytest.approx([0.18, 0.82], abs=1e-15)

    def test_posterior(self):
        model, params = two_cause_max()
        post = nmi_mech_posterior(model, params, (0, 0), 1)
        assert post[0][1] == pytest.approx(0.7 / 0.82, abs=1e-12)
        assert post[1][1] == pytest.approx(0.4 / 0.82, abs=1e-12)
        # given E=0 both mechanisms must be 0
        post0 = nmi_mech_posterior(model, params, (1, 1), 0)
        np.testing.assert_allclose(post0[0], [1.0, 0.0], atol=1e-15)

    def test_zero_probability_effect_raises(self):
        model, params = two_cause_max(rows1=(1.0, 0.0), rows2=(1.0, 0.0))
        with pytest.raises(ZeroProbabilityEvidence):
            nmi_mech_posterior(model, params, (0, 0), 1)
        with pytest.raises(ZeroProbabilityEvidence):
            brute_force_posterior(model, params, (0, 0), 1)

    def test_top_state_cdf_is_one(self):
        model, params = two_cause_max()
        assert nmi_effect_cdf(model, params, (0, 1), 1) == 1.0
        assert nmi_effect_cdf(model, params, (0, 1), -1) == 0.0


class TestNoisyMaxOracle:
    @settings(max_examples=150, deadline=None, suppress_health_check=[HealthCheck.too_slow])
    @given(nmi_instances())
    def test_posterior_matches_enumeration(self, inst):
        model, params, c, e = inst
        try:
            expected = brute_force_posterior(model, params, c, e)
        except ZeroProbabilityEvidence:
            with pytest.raises(ZeroProbabilityEvidence):
                nmi_mech_posterior(model, params, c, e)
            return
        got = nmi_mech_posterior(model, params, c, e)
        assert got.max_abs_diff(expected) < 1e-10

    @settings(max_examples=100, deadline=None)
    @given(nmi_instances())
    def test_effect_distribution_matches_enumeration(self, inst):
        model, params, c, _ = inst
        got = nmi_effect_distribution(model, params, c).probs
        ref = enumerated_effect_distribution(model, params, c).probs
        assert np.max(np.abs(got - ref)) < 1e-12

    @settings(max_examples=100, deadline=None)
    @given(nmi_instances())
    def test_cdf_is_monotone_and_normalised(self, inst):
        model, params, c, _ = inst
        cdf = [nmi_effect_cdf(model, params, c, e) for e in range(model.effect.cardinality)]
        assert all(b >= a - 1e-15 for a, b in zip(cdf, cdf[1:]))
        assert cdf[-1] == 1.0

    @settings(max_examples=60, deadline=None)
    @given(nmi_instances())
    def test_posterior_rows_sum_to_one(self, inst):
        model, params, c, e = inst
        try:
            post = nmi_mech_posterior(model, params, c, e)
        except ZeroProbabilityEvidence:
            return
        for p in post.probs:
            assert p.sum() == pytest.approx(1.0, abs=1e-10)
            assert np.all(p[e + 1 :] == 0.0)

    def test_batch_equals_single(self):
        rng = np.random.default_rng(3)
        model = ModelStructure(
            (VariableSpec("A", 2), VariableSpec("B", 3)),
            VariableSpec("E", 3),
            (Mechanism((0,), MULTINOMIAL, 3), Mechanism((0, 1), MULTINOMIAL, 3), Mechanism((), MULTINOMIAL, 2)),
        )
        params = random_params(model, rng, low=0.02, high=0.98)
        causes = model.cause_configs().repeat(3, axis=0)
        effects = np.tile([0, 1, 2], len(causes) // 3)
        batch = nmi_batch_posteriors(model, params, causes, effects)
        for n, (c, e) in enumerate(zip(causes, effects)):
            single = brute_force_posterior(model, params, c, int(e))
            for i in range(3):
                np.testing.assert_allclose(batch[i][n], single[i], atol=1e-12)

    def test_many_mechanisms_do_not_underflow(self):
        m = 60
        model = ModelStructure(
            (VariableSpec("C", 2),),
            VariableSpec("E", 2),
            tuple(Mechanism((), MULTINOMIAL, 2) for _ in range(m)),
        )
        params = ModelParams((np.array([0.5, 0.5]),), tuple(np.array([[0.001, 0.999]]) for _ in range(m)))
        post = nmi_mech_posterior(model, params, (0,), 0)
        np.testing.assert_allclose(post[0], [1.0, 0.0], atol=1e-14)
        lp = effect_logprob(model, params, [[0]], [0])[0]
        assert lp == pytest.approx(m * math.log(0.001), rel=1e-12)


class TestPoisson:
    def test_zero_effect_probability(self):
        model, params = poisson_model([1.0, 2.0])
        assert poisson_nai_effect(model, params, (0,)).pmf(0) == pytest.approx(math.exp(-3.0), rel=1e-14)

    def test_equal_rates_split(self):
        model, params = poisson_model([1.0, 1.0])
        post = poisson_nai_mech_posterior(model, params, (0,), 2)
        np.testing.assert_allclose(post[0], [0.25, 0.5, 0.25], atol=1e-14)

    @settings(max_examples=60, deadline=None)
    @given(
        st.lists(st.floats(0.05, 8.0), min_size=1, max_size=4),
        st.integers(0, 20),
    )
    def test_thinning_matches_nested_sum_and_enumeration(self, rates, e):
        model, params = poisson_model(rates)
        closed = poisson_nai_mech_posterior(model, params, (1,), e)
        share = np.asarray(rates) / sum(rates)
        for i, s in enumerate(share):
            np.testing.assert_allclose(closed[i], stats.binom.pmf(np.arange(e + 1), e, s), atol=1e-12)
        if len(rates) <= 3:
            assert closed.max_abs_diff(poisson_nested_sum_posterior(model, params, (1,), e)) < 1e-10
        assert closed.max_abs_diff(brute_force_posterior(model, params, (1,), e)) < 1e-10

    def test_monte_carlo_conditional_mean(self):
        rates = np.array([0.5, 0.5, 1.0])
        rng = np.random.default_rng(11)
        x = rng.poisson(rates, size=(200_000, 3))
        e = x.sum(axis=1)
        sel = x[e == 4]
        model, params = poisson_model(rates)
        post = poisson_nai_mech_posterior(model, params, (0,), 4)
        expected = [float(np.arange(5) @ p) for p in post.probs]
        se = sel.std(axis=0) / math.sqrt(len(sel))
        assert np.all(np.abs(sel.mean(axis=0) - expected) < 4 * se)

    def test_dispatch(self):
        model, params = poisson_model([1.0, 3.0])
        post = mech_posterior(model, params, (0,), 3)
        np.testing.assert_allclose(post[1], stats.binom.pmf(np.arange(4), 3, 0.75))

    def test_enumeration_needs_bound(self):
        model, params = poisson_model([1.0])
        with pytest.raises(EnumerationLimitError):
            enumerated_effect_distribution(model, params, (0,))


class TestOtherCombinations:
    def _binary(self, combo, m=2):
        return ModelStructure(
            (VariableSpec("C", 2),),
            VariableSpec("E", 2),
            tuple(Mechanism((), MULTINOMIAL, 2) for _ in range(m)),
            combo,
        )

    def test_fair_parity_posterior(self):
        model = self._binary(PARITY)
        params = ModelParams((np.array([0.5, 0.5]),), (np.array([[0.5, 0.5]]),) * 2)
        post = mech_posterior(model, params, (0,), 1)
        assert post[0][1] == pytest.approx(0.5)

    def test_nof_posterior_against_hand_count(self):
        model = self._binary(nof(2), m=3)
        t = np.array([[0.4, 0.6]])
        params = ModelParams((np.array([0.5, 0.5]),), (t, t, t))
        # E=1 iff at least two ones: p = 3 * 0.6^2 * 0.4 + 0.6^3
        p_e1 = 3 * 0.36 * 0.4 + 0.216
        post = mech_posterior(model, params, (0,), 1)
        # X1 = 1 and at least one of the other two is 1
        assert post[0][1] == pytest.approx(0.6 * (1 - 0.16) / p_e1, abs=1e-12)

    def test_enumeration_cap(self):
        model = self._binary(PARITY, m=4)
        params = ModelParams((np.array([0.5, 0.5]),), (np.array([[0.5, 0.5]]),) * 4)
        with pytest.raises(EnumerationLimitError):
            brute_force_posterior(model, params, (0,), 1, cap=8)


class TestLikelihood:
    def test_case_loglik(self):
        model, params = two_cause_max()
        assert loglik_case(model, params, (0, 1, 1)) == pytest.approx(math.log(0.25 * 0.82))

    def test_dataset_loglik_sums_cases(self, f1):
        from cimlearn.catalog import forward_sample

        model, params = f1
        data = forward_sample(model, params, 50, seed=4)
        total = sum(loglik_case(model, params, row) for row in data.values)
        assert loglik(model, params, data) == pytest.approx(total, rel=1e-12)

    def test_impossible_case_is_minus_infinity(self):
        model, params = two_cause_max(rows1=(1.0, 0.0), rows2=(1.0, 0.0))
        assert loglik_case(model, params, (0, 0, 1)) == -math.inf
