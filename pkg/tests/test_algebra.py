import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import nullrec.algebra as alg
from nullrec.errors import (
    MinorizationViolated,
    NotIrreducible,
    NotStochastic,
    OrderTooLarge,
    SeriesDiverges,
    TruncationInsufficient,
)
from tests.conftest import random_model


def geometric_binomial_moment(m, k_max=300):
    """Closed-form oracle for the symmetric two-state chain with s = nu =
    (1/2, 1/2): block length Geometric(1/2), visits to state 0 Binomial(L, 1/2)."""
    total = 0.0
    for length in range(1, k_max + 1):
        p_len = 0.5 ** length
        e_cond = sum(math.comb(length, u) * 0.5 ** length * u ** m
                     for u in range(length + 1))
        total += p_len * e_cond
    return total


class TestValidation:
    def test_symmetric_two_state_is_valid(self, two_state):
        alg.validate_atom(two_state)

    def test_minorization_violated(self):
        with pytest.raises(MinorizationViolated):
            alg.FiniteMarkovModel(states=(0, 1), P=[[0.5, 0.5], [0.5, 0.5]],
                                  s=[0.8, 0.8], nu=[0.7, 0.3])

    def test_s_out_of_range(self):
        with pytest.raises(MinorizationViolated):
            alg.FiniteMarkovModel(states=(0, 1), P=[[0.5, 0.5], [0.5, 0.5]],
                                  s=[1.1, 1.1], nu=[0.5, 0.5])

    def test_not_irreducible(self):
        with pytest.raises(NotIrreducible) as exc:
            alg.FiniteMarkovModel(states=(0, 1), P=[[1.0, 0.0], [0.0, 1.0]],
                                  s=[0.0, 0.0], nu=[0.5, 0.5])
        assert len(exc.value.components) == 2

    def test_not_stochastic(self):
        with pytest.raises(NotStochastic):
            alg.FiniteMarkovModel(states=(0, 1), P=[[0.5, 0.4], [0.5, 0.5]],
                                  s=[0.1, 0.1], nu=[0.5, 0.5])
        with pytest.raises(NotStochastic):
            alg.FiniteMarkovModel(states=(0, 1), P=[[0.5, 0.5], [0.5, 0.5]],
                                  s=[0.1, 0.1], nu=[0.6, 0.6])


class TestTabooKernel:
    def test_symmetric_two_state(self, two_state):
        H = alg.taboo_kernel(two_state)
        assert H.kind == alg.TABOO
        np.testing.assert_allclose(H.entries, [[0.25, 0.25], [0.25, 0.25]], atol=1e-15)

    def test_zero_s_gives_P(self, two_state):
        model = alg.FiniteMarkovModel(states=(0, 1), P=two_state.P,
                                      s=[0.0, 0.0], nu=[0.5, 0.5])
        np.testing.assert_array_equal(alg.taboo_kernel(model).entries, model.P)

    def test_full_regeneration_gives_zero(self):
        model = alg.FiniteMarkovModel(states=(0, 1), P=[[0.3, 0.7], [0.3, 0.7]],
                                      s=[1.0, 1.0], nu=[0.3, 0.7])
        np.testing.assert_array_equal(alg.taboo_kernel(model).entries, np.zeros((2, 2)))


class TestFundamentalKernel:
    def test_symmetric_two_state(self, two_state):
        G = alg.fundamental_kernel(alg.taboo_kernel(two_state))
        np.testing.assert_allclose(G.entries, [[1.5, 0.5], [0.5, 1.5]], atol=1e-12)

    def test_zero_taboo_gives_identity(self):
        G = alg.fundamental_kernel(np.zeros((3, 3)))
        np.testing.assert_array_equal(G.entries, np.eye(3))

    def test_series_matches_solve_on_random_models(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            model = random_model(rng, d=4)
            H = alg.taboo_kernel(model)
            solve = alg.fundamental_kernel(H).entries
            series = alg.fundamental_kernel_series(H, tol=1e-13).entries
            assert np.abs(solve - series).max() < 1e-10

    def test_neumann_identity(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            model = random_model(rng)
            H = alg.taboo_kernel(model).entries
            G = alg.fundamental_kernel(H).entries
            resid = (np.eye(model.d) - H) @ G - np.eye(model.d)
            assert np.abs(resid).max() < 1e-10

    def test_diverges_without_regeneration_mass(self, two_state):
        model = alg.FiniteMarkovModel(states=(0, 1), P=two_state.P,
                                      s=[0.0, 0.0], nu=[0.5, 0.5])
        with pytest.raises(SeriesDiverges):
            alg.fundamental_kernel(alg.taboo_kernel(model))
        with pytest.raises(SeriesDiverges):
            alg.fundamental_kernel_series(alg.taboo_kernel(model), max_terms=2000)


class TestInvariantMeasure:
    def test_symmetric_two_state(self, two_state):
        pi = alg.invariant_measure(two_state).pi
        np.testing.assert_allclose(pi, [1.0, 1.0], atol=1e-12)

    def test_doubly_stochastic_uniform(self):
        P = np.array([[0.2, 0.5, 0.3], [0.3, 0.2, 0.5], [0.5, 0.3, 0.2]])
        model = alg.FiniteMarkovModel(states=(0, 1, 2), P=P,
                                      s=[0.3, 0.3, 0.3],
                                      nu=[1 / 3, 1 / 3, 1 / 3])
        pi = alg.invariant_measure(model).pi
        np.testing.assert_allclose(pi, pi[0] * np.ones(3), atol=1e-10)

    @given(st.integers(0, 10_000))
    def test_fixed_point_and_normalization(self, seed):
        model = random_model(np.random.default_rng(seed))
        pi = alg.invariant_measure(model).pi
        assert np.abs(pi @ model.P - pi).max() < 1e-10
        assert abs(pi @ model.s - 1.0) < 1e-10


class TestBlockMeanVariance:
    def test_two_state_matches_geometric_oracle(self, two_state):
        mu, sigma2 = alg.block_mean_variance(two_state, [1.0, 0.0])
        m1 = geometric_binomial_moment(1)
        m2 = geometric_binomial_moment(2)
        assert abs(mu - m1) < 1e-12 and abs(mu - 1.0) < 1e-12
        assert abs(sigma2 - (m2 - m1 ** 2)) < 1e-12 and abs(sigma2 - 1.0) < 1e-12

    def test_zero_function(self, two_state):
        assert alg.block_mean_variance(two_state, [0.0, 0.0]) == (0.0, 0.0)

    def test_constant_reduces_to_block_length(self, two_state):
        c = 3.0
        mu_c, sig_c = alg.block_mean_variance(two_state, [c, c])
        mu_1, sig_1 = alg.block_mean_variance(two_state, [1.0, 1.0])
        assert abs(mu_c - c * mu_1) < 1e-12
        assert abs(sig_c - c * c * sig_1) < 1e-12
        # block length is Geometric(1/2): mean 2, variance 2
        assert abs(mu_1 - 2.0) < 1e-12 and abs(sig_1 - 2.0) < 1e-12


class TestBlockMoment:
    def test_two_state_against_frozen_oracle_values(self, two_state):
        # frozen from geometric_binomial_moment: 1, 2, 5.5, 20
        expected = {1: 1.0, 2: 2.0, 3: 5.5, 4: 20.0}
        g = np.array([1.0, 0.0])
        for m, want in expected.items():
            assert abs(geometric_binomial_moment(m) - want) < 1e-12
            got = alg.block_moment(two_state, alg.BlockMomentRequest(g=g, m=m))
            assert abs(got - want) < 1e-10

    def test_zero_function(self, two_state):
        for m in (1, 2, 5):
            req = alg.BlockMomentRequest(g=np.zeros(2), m=m)
            assert alg.block_moment(two_state, req) == 0.0

    def test_first_moment_is_invariant_mass(self):
        rng = np.random.default_rng(23)
        for _ in range(8):
            model = random_model(rng)
            g = rng.normal(size=model.d)
            got = alg.block_moment(model, alg.BlockMomentRequest(g=g, m=1))
            assert abs(got - alg.invariant_measure(model).pi @ g) < 1e-10

    def test_matches_enumeration_on_small_models(self):
        rng = np.random.default_rng(5)
        for _ in range(4):
            d = int(rng.integers(2, 5))
            model = random_model(rng, d=d, s_low=0.6, s_high=0.9)
            g = rng.uniform(-1.0, 1.0, size=d)
            depth = 50 if d <= 3 else 34
            enum = alg.enumerated_block_moments(model, g, (1, 2, 3, 4), depth=depth)
            for m in (1, 2, 3, 4):
                exact = alg.block_moment(model, alg.BlockMomentRequest(g=g, m=m))
                assert abs(exact - enum[m].value) <= 1e-9 + enum[m].tail_bound

    def test_enumeration_from_state_start(self, two_state):
        g = np.array([1.0, 0.0])
        for start in (0, 1):
            exact = alg.block_moment(two_state, alg.BlockMomentRequest(g=g, m=2, start=start))
            enum = alg.enumerated_block_moment(two_state, g, 2, start=start, depth=80)
            assert abs(exact - enum.value) <= 1e-10 + enum.tail_bound

    def test_order_cap(self, two_state):
        with pytest.raises(OrderTooLarge):
            alg.BlockMomentRequest(g=np.zeros(2), m=7)
        with pytest.raises(ValueError):
            alg.BlockMomentRequest(g=np.zeros(2), m=0)


class TestWeightedBlockMoment:
    def test_unit_weights_reduce_to_block_moment(self, two_state):
        g = np.array([1.0, 0.0])
        a = np.ones(80)
        for m in (1, 2):
            plain = alg.block_moment(two_state, alg.BlockMomentRequest(g=g, m=m))
            weighted = alg.weighted_block_moment(two_state, a, g, m, tol=1e-8)
            assert abs(weighted.value - plain) <= 1e-8

    def test_zero_weights(self, two_state):
        res = alg.weighted_block_moment(two_state, np.zeros(40), [1.0, 0.0], 1, tol=1.0)
        assert res.value == 0.0

    def test_geometric_weights_two_state(self, two_state):
        # With a_k = 2^{-k}: P(tau >= k) = 2^{-k} and X_k is uniform given
        # survival, so E sum a_k 1{X_k = 0} = sum_k 2^{-k} 2^{-k} / 2 = 2/3.
        a = 0.5 ** np.arange(60)
        oracle = sum(0.5 ** k * 0.5 ** k * 0.5 for k in range(60))
        res = alg.weighted_block_moment(two_state, a, [1.0, 0.0], 1)
        assert abs(oracle - 2.0 / 3.0) < 1e-15
        assert abs(res.value - 2.0 / 3.0) <= 1e-12 + res.tail_bound

    def test_truncation_guard(self, two_state):
        with pytest.raises(TruncationInsufficient):
            alg.weighted_block_moment(two_state, np.ones(6), [1.0, 0.0], 2, tol=1e-10)


class TestGeneralizedAutocov:
    def test_two_state_lag_zero(self, two_state):
        assert abs(alg.generalized_autocov(two_state, [1.0, 0.0], None, 0) - 1.0) < 1e-12

    def test_two_state_lag_one(self, two_state):
        assert abs(alg.generalized_autocov(two_state, [1.0, 0.0], None, 1)) < 1e-12

    @given(st.integers(0, 10_000), st.integers(0, 4))
    def test_cross_symmetry(self, seed, ell):
        rng = np.random.default_rng(seed)
        model = random_model(rng)
        g = rng.normal(size=model.d)
        f = rng.normal(size=model.d)
        lhs = alg.generalized_autocov(model, g, f, -ell)
        rhs = alg.generalized_autocov(model, f, g, ell)
        assert abs(lhs - rhs) < 1e-12

    def test_matches_scaled_stationary_covariance(self):
        # For mean-zero g, f the generalized covariance is the stationary one
        # divided by the probability-normalized mass of s.
        rng = np.random.default_rng(99)
        model = random_model(rng, d=4)
        pi = alg.invariant_measure(model).pi
        pi_prob = pi / pi.sum()
        for _ in range(3):
            g = rng.normal(size=4)
            g -= (pi @ g) / pi.sum()  # mean-zero under the invariant measure
            f = rng.normal(size=4)
            f -= (pi @ f) / pi.sum()
            c = float(pi_prob @ model.s)
            Pl = np.eye(4)
            for ell in range(4):
                stationary = float((pi_prob * g) @ (Pl @ f))
                generalized = alg.generalized_autocov(model, g, f, ell)
                assert abs(generalized - stationary / c) < 1e-10
                Pl = Pl @ model.P


class TestSigma2Series:
    def test_two_state(self, two_state):
        res = alg.sigma2_from_series(two_state, [1.0, 0.0])
        assert abs(res.value - 1.0) <= 1e-10 + res.tail_bound

    def test_zero_function(self, two_state):
        assert alg.sigma2_from_series(two_state, [0.0, 0.0]).value == 0.0

    def test_matches_block_variance_on_random_models(self):
        rng = np.random.default_rng(31)
        for _ in range(6):
            model = random_model(rng, d=4)
            g = rng.normal(size=4)
            _, sigma2 = alg.block_mean_variance(model, g)
            res = alg.sigma2_from_series(model, g, tol=1e-10)
            assert abs(res.value - sigma2) <= 1e-8 + res.tail_bound


class TestEmbeddedTransition:
    def test_every_step_regenerates(self):
        x_model = alg.FiniteMarkovModel(states=(0, 1), P=[[0.3, 0.7], [0.3, 0.7]],
                                        s=[1.0, 1.0], nu=[0.3, 0.7])
        w_model = random_model(np.random.default_rng(2), d=3)
        coeffs = alg.regeneration_gap_coefficients(x_model, 5)
        np.testing.assert_allclose(coeffs, [1.0, 0.0, 0.0, 0.0, 0.0], atol=1e-15)
        P_tilde = alg.embedded_transition(x_model, w_model).entries
        np.testing.assert_allclose(P_tilde, w_model.P, atol=1e-10)

    def test_two_state_driver_against_series_oracle(self, two_state):
        w_model = random_model(np.random.default_rng(3), d=3)
        coeffs = alg.regeneration_gap_coefficients(two_state, 10)
        np.testing.assert_allclose(coeffs, 0.5 ** np.arange(1, 11), atol=1e-14)
        # direct series: Phi = sum_l b_{l+1} P2^l, truncated far past tolerance
        Phi = np.zeros((3, 3))
        Ppow = np.eye(3)
        for ell in range(60):
            Phi += 0.5 ** (ell + 1) * Ppow
            Ppow = Ppow @ w_model.P
        oracle = w_model.P @ Phi
        got = alg.embedded_transition(two_state, w_model, tol=1e-12).entries
        assert np.abs(got - oracle).max() < 1e-10

    def test_rows_stochastic_and_coefficients_proper(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            xm = random_model(rng)
            wm = random_model(rng)
            result = alg.embedded_transition(xm, wm, tol=1e-10)
            assert np.abs(result.entries.sum(axis=1) - 1.0).max() < 1e-8
            coeffs = alg.regeneration_gap_coefficients(xm, 200)
            assert coeffs.min() >= 0.0
            assert abs(coeffs.sum() - 1.0) < 1e-8


class TestCompoundBlockMoment:
    def test_first_moment_factorizes(self):
        rng = np.random.default_rng(41)
        xm = random_model(rng, d=2)
        wm = random_model(rng, d=3)
        gX = rng.normal(size=2)
        gW = rng.normal(size=3)
        res = alg.compound_block_moment(xm, wm, gX, gW, 1)
        product = float(alg.invariant_measure(xm).pi @ gX) * \
            float(alg.invariant_measure(wm).pi @ gW)
        assert res.value == pytest.approx(product, abs=1e-12)
        assert res.tail_bound == 0.0

    def test_zero_disturbance_function(self, two_state):
        wm = random_model(np.random.default_rng(4), d=3)
        for m in (1, 2, 3):
            res = alg.compound_block_moment(two_state, wm, [1.0, -1.0], np.zeros(3), m)
            assert abs(res.value) <= res.tail_bound + 1e-15

    def test_second_moment_against_monte_carlo(self, two_state):
        from nullrec.splitting import sample_compound_block_sums
        wm = random_model(np.random.default_rng(8), d=3)
        gX = np.array([1.0, -0.5])
        gW = np.array([0.5, 1.0, -1.0])
        S = sample_compound_block_sums(two_state, wm, gX, gW, (2,), 200_000, seed=12)[2]
        exact = alg.compound_block_moment(two_state, wm, gX, gW, 2)
        se = S.std(ddof=1) / math.sqrt(len(S))
        assert abs(S.mean() - exact.value) < 5 * se + exact.tail_bound

    def test_order_cap(self, two_state):
        with pytest.raises(OrderTooLarge):
            alg.compound_block_moment(two_state, two_state, [1, 0], [1, 0], 4)


class TestChainFiles:
    def test_decimal_strings_accepted(self):
        model = alg.model_from_dict({
            "states": ["a", "b"],
            "P": [["0.5", "0.5"], ["0.5", "0.5"]],
            "s": ["0.5", "0.5"],
            "nu": ["0.5", "0.5"],
        })
        assert model.d == 2
        np.testing.assert_array_equal(model.P, 0.5 * np.ones((2, 2)))

    def test_round_trip(self, two_state):
        again = alg.model_from_dict(alg.model_to_dict(two_state))
        np.testing.assert_array_equal(again.P, two_state.P)
        np.testing.assert_array_equal(again.s, two_state.s)
        np.testing.assert_array_equal(again.nu, two_state.nu)

    def test_validation_on_load(self):
        with pytest.raises(MinorizationViolated):
            alg.model_from_dict({
                "states": [0, 1],
                "P": [[0.5, 0.5], [0.5, 0.5]],
                "s": [0.8, 0.8],
                "nu": [0.7, 0.3],
            })
