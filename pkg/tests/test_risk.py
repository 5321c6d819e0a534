import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import dense_bias_variance, random_spd
from optinterp import interpolators, risk
from optinterp.model import CovarianceSpec, PriorSpec, ProblemConfig


class TestExcessRisk:
    def test_zero_at_truth(self, rng):
        w = rng.standard_normal(5)
        assert risk.excess_risk(w, w, random_spd(rng, 5)) == 0.0

    def test_identity_hand_value(self):
        w_star = np.zeros(2)
        w = np.array([3.0, 4.0])
        assert risk.excess_risk(w, w_star, np.eye(2)) == pytest.approx(25.0)

    def test_monte_carlo_oracle(self, rng):
        d = 4
        sigma = random_spd(rng, d)
        w = rng.standard_normal(d)
        w_star = rng.standard_normal(d)
        noise_sd = 0.7
        value = risk.excess_risk(w, w_star, sigma)
        draws = 1_000_000
        x = rng.standard_normal((draws, d)) @ np.linalg.cholesky(sigma).T
        y = x @ w_star + noise_sd * rng.standard_normal(draws)
        sq = (x @ w - y) ** 2 - noise_sd**2
        se = sq.std(ddof=1) / math.sqrt(draws)
        assert abs(sq.mean() - value) <= 3 * se


class TestConditionalExpectedExcessRisk:
    def test_scalar_inverse(self):
        # n=d=1, X=[1]: Q = X^{-1} = [1]; zero misfit, variance term sigma2
        out = risk.conditional_expected_excess_risk(
            np.array([[1.0]]), np.array([[1.0]]), np.array([2.0]), np.eye(1), 1.0
        )
        assert out == pytest.approx(1.0)

    def test_zero_map(self, rng):
        d = 6
        sigma = random_spd(rng, d)
        w_star = rng.standard_normal(d)
        X = rng.standard_normal((3, d))
        out = risk.conditional_expected_excess_risk(np.zeros((d, 3)), X, w_star, sigma, 0.8)
        expected = w_star @ sigma @ w_star + 0.8 * 0.0
        assert out == pytest.approx(expected)

    def test_monte_carlo_oracle(self, rng):
        n, d = 3, 7
        X = rng.standard_normal((n, d))
        sigma = random_spd(rng, d, scale=1.0 / d)
        w_star = rng.standard_normal(d)
        noise_var = 0.5
        Q = interpolators.min_norm(X).matrix
        value = risk.conditional_expected_excess_risk(Q, X, w_star, sigma, noise_var)
        draws = 100_000
        xi = math.sqrt(noise_var) * rng.standard_normal((draws, n))
        fits = (X @ w_star + xi) @ Q.T  # draws x d
        diffs = fits - w_star
        vals = np.einsum("ij,ij->i", diffs @ sigma, diffs)
        se = vals.std(ddof=1) / math.sqrt(draws)
        assert abs(vals.mean() - value) <= 3 * se


class TestBiasVariance:
    def test_square_inverse_has_zero_bias(self, rng):
        d = 5
        X = rng.standard_normal((d, d))
        Q = np.linalg.inv(X)
        sigma = random_spd(rng, d)
        B, V = risk.bias_variance(Q, X, sigma, np.eye(d), 2.0, 1.0)
        assert B == pytest.approx(0.0, abs=1e-8)
        assert V > 0

    def test_zero_map(self, rng):
        n, d = 3, 6
        X = rng.standard_normal((n, d))
        sigma = random_spd(rng, d)
        phi = random_spd(rng, d)
        signal = 1.7
        B, V = risk.bias_variance(np.zeros((d, n)), X, sigma, phi, signal, 1.0)
        assert V == 0.0
        assert B == pytest.approx((signal / d) * np.trace(sigma @ phi), rel=1e-12)

    def test_matches_dense_formula(self, rng):
        n, d = 4, 9
        X = rng.standard_normal((n, d))
        sigma = random_spd(rng, d)
        phi = random_spd(rng, d)
        Q = rng.standard_normal((d, n))
        got = risk.bias_variance(Q, X, sigma, phi, 1.3, 0.7)
        want = dense_bias_variance(Q, X, sigma, phi, 1.3, 0.7)
        assert got[0] == pytest.approx(want[0], rel=1e-9)
        assert got[1] == pytest.approx(want[1], rel=1e-9)

    @given(st.integers(0, 2**31 - 1), st.booleans(), st.booleans())
    def test_matches_dense_formula_property(self, seed, diag_sigma, identity_phi):
        g = np.random.default_rng(seed)
        n, d = 3, 6
        X = g.standard_normal((n, d))
        sigma = np.diag(g.uniform(0.5, 2.0, d)) if diag_sigma else random_spd(g, d)
        phi = np.eye(d) if identity_phi else random_spd(g, d)
        Q = g.standard_normal((d, n))
        got = risk.bias_variance(Q, X, sigma, None if identity_phi else phi, 1.0, 1.0)
        want = dense_bias_variance(Q, X, sigma, phi, 1.0, 1.0)
        assert got[0] == pytest.approx(want[0], rel=1e-8, abs=1e-10)
        assert got[1] == pytest.approx(want[1], rel=1e-8, abs=1e-10)

    def test_monte_carlo_oracle(self, rng):
        n, d = 3, 6
        X = rng.standard_normal((n, d))
        sigma = random_spd(rng, d, scale=1.0 / d)
        phi = random_spd(rng, d, scale=1.0 / d)
        signal, noise_var = 1.5, 0.6
        Q = interpolators.optimal_response_linear(X, sigma, phi, signal / noise_var).matrix
        B, V = risk.bias_variance(Q, X, sigma, phi, signal, noise_var)
        draws = 10_000
        root = np.linalg.cholesky(phi)
        ws = math.sqrt(signal / d) * rng.standard_normal((draws, d)) @ root.T
        conds = [
            risk.conditional_expected_excess_risk(Q, X, w, sigma, noise_var) for w in ws
        ]
        conds = np.array(conds)
        se = conds.std(ddof=1) / math.sqrt(draws)
        assert abs(conds.mean() - (B + V)) <= 3 * se


class TestBestPossibleRisk:
    def test_zero_noise(self, rng):
        X = rng.standard_normal((3, 6))
        assert risk.expected_excess_risk_best_possible(X, np.eye(6), 0.0) == 0.0

    def test_single_basis_row(self):
        X = np.zeros((1, 4))
        X[0, 0] = 1.0
        assert risk.expected_excess_risk_best_possible(X, np.eye(4), 0.9) == pytest.approx(0.9)

    def test_monte_carlo_oracle(self, rng):
        n, d = 3, 7
        X = rng.standard_normal((n, d))
        sigma = random_spd(rng, d, scale=1.0 / d)
        noise_var = 0.8
        value = risk.expected_excess_risk_best_possible(X, sigma, noise_var)
        draws = 100_000
        piece = interpolators.variance_optimal_piece(X, sigma)
        xi = math.sqrt(noise_var) * rng.standard_normal((draws, n))
        devs = xi @ piece.T
        vals = np.einsum("ij,ij->i", devs @ sigma, devs)
        se = vals.std(ddof=1) / math.sqrt(draws)
        assert abs(vals.mean() - value) <= 3 * se


class TestIsInterpolator:
    def test_min_norm_fit_passes(self, rng):
        X = rng.standard_normal((3, 8))
        y = rng.standard_normal(3)
        w = interpolators.min_norm(X).matrix @ y
        assert risk.is_interpolator(w, X, y)

    def test_zero_vector_fails(self, rng):
        X = rng.standard_normal((3, 8))
        y = np.ones(3)
        assert not risk.is_interpolator(np.zeros(8), X, y)

    def test_best_possible_passes(self, rng):
        X = rng.standard_normal((3, 8))
        sigma = random_spd(rng, 8, scale=1.0 / 8.0)
        w_star = rng.standard_normal(8)
        xi = rng.standard_normal(3)
        est = interpolators.best_possible(X, sigma, w_star, xi)
        assert risk.is_interpolator(est.w, X, X @ w_star + xi)


class TestMonteCarloExpectedRisk:
    def test_degenerate_problem_has_zero_risk(self):
        report = risk.monte_carlo_expected_risk(
            lambda inst, g: interpolators.min_norm(inst.X),
            ProblemConfig(n=4, d=8, signal=0.0, noise_var=0.0, seed=1),
            CovarianceSpec.identity(),
            PriorSpec.identity(),
            replicates=3,
        )
        assert report.excess_risk == pytest.approx(0.0, abs=1e-20)

    def test_seeded_reports_identical(self):
        def factory(inst, g):
            return interpolators.min_norm(inst.X)

        kwargs = dict(
            config=ProblemConfig(n=6, d=12, signal=1.0, noise_var=1.0, seed=5),
            cov_spec=CovarianceSpec.strong_weak(2.0, 0.5, 0.5),
            prior_spec=PriorSpec.identity(),
            replicates=5,
        )
        a = risk.monte_carlo_expected_risk(factory, **kwargs)
        b = risk.monte_carlo_expected_risk(factory, **kwargs)
        assert a == b

    @pytest.mark.slow
    def test_isotropic_asymptote_anchor(self):
        # gamma=2 isotropic: limiting excess risk of the min-norm interpolator
        # is 0.5 (bias) + 1.0 (variance)
        report = risk.monte_carlo_expected_risk(
            lambda inst, g: interpolators.min_norm(inst.X),
            ProblemConfig(n=500, d=1000, signal=1.0, noise_var=1.0, seed=11),
            CovarianceSpec.identity(),
            PriorSpec.identity(),
            replicates=25,
        )
        assert abs(report.excess_risk - 1.5) <= 0.15
        assert report.failures == 0

    def test_failures_counted(self):
        calls = {"k": 0}

        def flaky(inst, g):
            calls["k"] += 1
            if calls["k"] % 2 == 0:
                raise ValueError("synthetic failure")
            return interpolators.min_norm(inst.X)

        report = risk.monte_carlo_expected_risk(
            flaky,
            ProblemConfig(n=4, d=8, signal=1.0, noise_var=1.0, seed=2),
            CovarianceSpec.identity(),
            PriorSpec.identity(),
            replicates=6,
        )
        assert report.failures == 3
        assert report.replicates == 3

    def test_variance_rotation_invariance(self, rng):
        X = rng.standard_normal((4, 9))
        sigma = random_spd(rng, 9)
        Q = interpolators.min_norm(X).matrix
        u, _, vt = np.linalg.svd(rng.standard_normal((4, 4)))
        rot = u @ vt
        assert risk.variance_term(Q @ rot, sigma) == pytest.approx(
            risk.variance_term(Q, sigma), rel=1e-9
        )
