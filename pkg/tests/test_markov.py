import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from locpriv.errors import DimensionMismatch, NegativeEntry, NotStochastic
from locpriv.markov import (
    MarkovPrior,
    marginals,
    matrix_powers,
    prior_entropy,
    sample_from_uniforms,
    sample_trajectory,
    spectral_gap,
    stationary_distribution,
    synthetic_prior,
    validate_prior,
)
from locpriv.oracle import brute_entropy

from conftest import random_prior, solve_stationary


class TestValidatePrior:
    def test_single_location(self):
        p = validate_prior([1.0], [[1.0]])
        assert p.M == 1 and p.stationary

    def test_swap_chain_is_stationary(self):
        p = validate_prior([0.5, 0.5], [[0, 1], [1, 0]])
        assert p.stationary

    def test_pi_not_normalized(self):
        with pytest.raises(NotStochastic):
            validate_prior([0.9, 0.2], [[1, 0], [0, 1]])

    def test_row_not_normalized(self):
        with pytest.raises(NotStochastic):
            validate_prior([0.5, 0.5], [[0.5, 0.6], [0, 1]])

    def test_negative_entry(self):
        with pytest.raises(NegativeEntry):
            validate_prior([1.2, -0.2], [[1, 0], [0, 1]])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            validate_prior([0.5, 0.5], [[1.0]])

    def test_non_stationary_flag(self):
        p = validate_prior([1.0, 0.0], [[0.5, 0.5], [0.5, 0.5]])
        assert not p.stationary

    def test_arrays_are_read_only(self):
        p = validate_prior([0.5, 0.5], [[0.5, 0.5], [0.5, 0.5]])
        with pytest.raises(ValueError):
            p.P[0, 0] = 1.0

    def test_json_round_trip(self, gen):
        p = random_prior(gen, 4)
        q = MarkovPrior.from_json(p.to_json())
        np.testing.assert_array_equal(p.pi, q.pi)
        np.testing.assert_array_equal(p.P, q.P)
        assert set(json.loads(p.to_json())) == {"m", "pi", "p"}


class TestStationary:
    def test_identity_keeps_uniform(self):
        np.testing.assert_allclose(stationary_distribution(np.eye(2)), [0.5, 0.5])

    def test_period_two(self):
        np.testing.assert_allclose(stationary_distribution(np.array([[0.0, 1.0], [1.0, 0.0]])), [0.5, 0.5])

    def test_two_state_against_linear_solve(self):
        P = np.array([[0.9, 0.1], [0.5, 0.5]])
        np.testing.assert_allclose(solve_stationary(P), [5 / 6, 1 / 6], atol=1e-12)
        np.testing.assert_allclose(stationary_distribution(P), [5 / 6, 1 / 6], atol=1e-9)

    def test_random_chains_match_linear_solve(self, gen):
        for _ in range(20):
            P = gen.dirichlet(np.ones(5), size=5)
            pi = stationary_distribution(P)
            assert np.max(np.abs(pi @ P - pi)) <= 1e-10
            np.testing.assert_allclose(pi, solve_stationary(P), atol=1e-8)


class TestSampling:
    def test_degenerate_chain(self):
        p = validate_prior([1.0, 0.0, 0.0], np.eye(3))
        for seed in range(5):
            assert sample_trajectory(p, 5, seed).tolist() == [0] * 5

    def test_single_location(self):
        p = validate_prior([1.0], [[1.0]])
        assert sample_trajectory(p, 7, 3).tolist() == [0] * 7

    def test_same_seed_identical(self, gen):
        p = random_prior(gen, 4)
        np.testing.assert_array_equal(sample_trajectory(p, 10, 11), sample_trajectory(p, 10, 11))

    def test_zero_mass_states_never_drawn(self):
        p = validate_prior([0.0, 1.0, 0.0], [[0, 1, 0], [0.5, 0.5, 0], [0, 0, 1]])
        u = np.random.default_rng(0).random((2000, 6))
        u[0] = 1.0 - 1e-17
        x = sample_from_uniforms(p, u)
        assert set(np.unique(x)) <= {0, 1}

    def test_first_step_marginal(self, gen):
        p = random_prior(gen, 4, stationary=False)
        n = 100_000
        x = sample_from_uniforms(p, np.random.default_rng(5).random((n, 1)))[:, 0]
        freq = np.bincount(x, minlength=4) / n
        se = np.sqrt(p.pi * (1 - p.pi) / n)
        assert np.all(np.abs(freq - p.pi) <= 3 * se + 1e-12)
        chi2 = stats.chisquare(np.bincount(x, minlength=4), p.pi * n)
        assert chi2.pvalue > 0.001

    def test_transition_frequencies(self, gen):
        p = random_prior(gen, 3)
        x = sample_from_uniforms(p, np.random.default_rng(9).random((50_000, 2)))
        for a in range(3):
            nxt = x[x[:, 0] == a, 1]
            freq = np.bincount(nxt, minlength=3) / len(nxt)
            np.testing.assert_allclose(freq, p.P[a], atol=4 * np.sqrt(0.25 / len(nxt)))


class TestPowers:
    def test_identity(self):
        cache = matrix_powers(np.eye(3), 6)
        for k in range(1, 6):
            np.testing.assert_array_equal(cache[k], np.eye(3))

    def test_swap_squared(self):
        cache = matrix_powers(np.array([[0.0, 1.0], [1.0, 0.0]]), 3)
        np.testing.assert_array_equal(cache[2], np.eye(2))

    def test_squaring_cross_check(self, gen):
        P = gen.dirichlet(np.ones(6), size=6)
        cache = matrix_powers(P, 5)
        np.testing.assert_allclose(cache[4], cache[2] @ cache[2], atol=1e-10)
        np.testing.assert_array_equal(cache[1], P)
        for k in range(1, 5):
            np.testing.assert_allclose(cache[k].sum(axis=1), 1.0, atol=1e-8)


class TestEntropy:
    def test_deterministic_chain(self):
        assert prior_entropy(validate_prior([0, 1, 0], np.eye(3)), 5) == 0.0

    def test_iid_uniform(self):
        p = validate_prior(np.full(4, 0.25), np.full((4, 4), 0.25))
        assert prior_entropy(p, 3) == pytest.approx(3 * math.log(4), abs=1e-12)

    def test_enumeration_stationary(self, gen):
        for _ in range(10):
            p = random_prior(gen, 3)
            assert prior_entropy(p, 4) == pytest.approx(brute_entropy(p, 4), abs=1e-10)

    def test_enumeration_non_stationary(self, gen):
        for M, T in [(2, 5), (3, 4), (4, 3)]:
            p = random_prior(gen, M, stationary=False)
            assert not p.stationary
            assert prior_entropy(p, T) == pytest.approx(brute_entropy(p, T), abs=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(M=st.integers(1, 5), T=st.integers(1, 6), seed=st.integers(0, 2**32 - 1))
    def test_range(self, M, T, seed):
        p = random_prior(np.random.default_rng(seed), M, stationary=False)
        h = prior_entropy(p, T)
        assert -1e-12 <= h <= T * math.log(M) + 1e-9

    def test_marginals_propagate(self):
        p = validate_prior([1.0, 0.0], [[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_array_equal(marginals(p, 3), [[1, 0], [0, 1], [1, 0]])


class TestSpectralGap:
    def test_identity(self):
        assert spectral_gap(np.eye(4)) == pytest.approx(0.0, abs=1e-12)

    def test_rank_one(self, gen):
        v = gen.dirichlet(np.ones(5))
        assert spectral_gap(np.tile(v, (5, 1))) == pytest.approx(1.0, abs=1e-9)

    def test_two_state(self):
        # characteristic polynomial: eigenvalues 1 and 0.9 + 0.5 - 1 = 0.4
        assert spectral_gap(np.array([[0.9, 0.1], [0.5, 0.5]])) == pytest.approx(0.6, abs=1e-12)

    def test_in_unit_interval(self, gen):
        for _ in range(20):
            g = spectral_gap(gen.dirichlet(np.ones(6) * 0.3, size=6))
            assert 0.0 <= g <= 1.0


class TestSyntheticPrior:
    def test_single_location(self):
        p = synthetic_prior(1, 0.1)
        np.testing.assert_array_equal(p.P, [[1.0]])
        np.testing.assert_array_equal(p.pi, [1.0])

    def test_kernel_symmetry(self):
        M, tau = 9, 0.3
        p = synthetic_prior(M, tau)
        idx = np.arange(M)
        kernel = np.exp(-np.abs(idx[:, None] - idx[None, :]) / (tau * M))
        z = kernel.sum(axis=1)
        np.testing.assert_allclose(p.P * z[:, None], kernel, atol=1e-14)
        for i, j in itertools.product(range(M), repeat=2):
            assert p.P[i, j] * z[i] == pytest.approx(p.P[j, i] * z[j], abs=1e-14)

    def test_default_configuration_is_stationary(self):
        p = synthetic_prior(100, 0.1)
        assert p.stationary
        assert np.max(np.abs(p.pi @ p.P - p.pi)) <= 1e-8
        # reversible chain: stationary vector is proportional to kernel row sums
        idx = np.arange(100)
        z = np.exp(-np.abs(idx[:, None] - idx[None, :]) / 10.0).sum(axis=1)
        np.testing.assert_allclose(p.pi, z / z.sum(), atol=1e-8)

    def test_larger_tau_mixes_faster(self):
        gaps = [spectral_gap(synthetic_prior(30, tau).P) for tau in (0.05, 0.1, 0.5, 1.0)]
        assert gaps == sorted(gaps)
