import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import random_spd
from optinterp import model
from optinterp.errors import InvalidSpec
from optinterp.model import CovarianceSpec, PriorSpec, ProblemConfig


class TestBuildCovariance:
    def test_identity(self):
        assert np.array_equal(model.build_covariance(CovarianceSpec.identity(), 3), np.eye(3))

    def test_autoregressive_entries(self):
        out = model.build_covariance(CovarianceSpec.autoregressive(0.5), 3)
        expected = np.array([[1, 0.5, 0.25], [0.5, 1, 0.5], [0.25, 0.5, 1]])
        assert np.allclose(out, expected, atol=1e-15)

    def test_exponential_entries(self):
        out = model.build_covariance(CovarianceSpec.exponential(), 3)
        expected = np.diag([-math.log(0.75), -math.log(0.5), -math.log(0.25)])
        assert np.allclose(out, expected, atol=1e-12)
        assert np.allclose(np.diag(out), [0.28768207, 0.69314718, 1.38629436], atol=1e-6)

    def test_strong_weak_layout(self):
        out = model.build_covariance(CovarianceSpec.strong_weak(4.0, 1.0, 0.5), 5)
        # floor(5 * 0.5) = 2 strong entries, then weak
        assert np.array_equal(np.diag(out), [4.0, 4.0, 1.0, 1.0, 1.0])
        assert np.count_nonzero(out - np.diag(np.diag(out))) == 0

    @given(st.integers(1, 60), st.floats(0.0, 1.0))
    def test_strong_weak_eigenvalue_multiset(self, d, psi1):
        sigma = model.build_covariance(CovarianceSpec.strong_weak(3.0, 0.5, psi1), d)
        k = math.floor(d * psi1)
        expected = np.sort(np.r_[np.full(k, 3.0), np.full(d - k, 0.5)])
        assert np.array_equal(np.sort(np.linalg.eigvalsh(sigma)).round(10), expected)

    def test_custom_roundtrip(self, rng):
        S = random_spd(rng, 4)
        spec = CovarianceSpec.custom(S)
        assert np.allclose(model.build_covariance(spec, 4), S, atol=1e-12)

    def test_exponential_passes_spd_gate_at_desk_scale(self):
        # smallest eigenvalue ~1/(d+1) sits far above the dim*eps*max threshold
        from optinterp import numerics

        sigma = model.build_covariance(CovarianceSpec.exponential(), 2000)
        numerics.check_spd(sigma)

    @pytest.mark.parametrize(
        "bad",
        [
            lambda: CovarianceSpec.strong_weak(1.0, 1.0, 1.5),
            lambda: CovarianceSpec.strong_weak(1.0, 2.0, 0.5),
            lambda: CovarianceSpec.strong_weak(-1.0, -2.0, 0.5),
            lambda: CovarianceSpec.autoregressive(1.0),
            lambda: CovarianceSpec.autoregressive(0.0),
            lambda: CovarianceSpec("nope"),
        ],
    )
    def test_invalid_specs(self, bad):
        with pytest.raises(InvalidSpec):
            bad()

    def test_invalid_dimension(self):
        with pytest.raises(InvalidSpec):
            model.build_covariance(CovarianceSpec.identity(), 0)


class TestBuildPrior:
    def test_identity(self):
        sigma = np.diag([2.0, 3.0, 1.0, 1.0, 1.0])
        assert np.array_equal(model.build_prior(PriorSpec.identity(), sigma, 5), np.eye(5))

    def test_inverse_of_covariance_diagonal(self):
        out = model.build_prior(PriorSpec.inverse_of_covariance(), np.diag([2.0, 4.0]), 2)
        assert np.allclose(out, np.diag([0.5, 0.25]), atol=1e-14)

    def test_inverse_of_covariance_dense(self, rng):
        sigma = random_spd(rng, 5)
        out = model.build_prior(PriorSpec.inverse_of_covariance(), sigma, 5)
        assert np.allclose(out @ sigma, np.eye(5), atol=1e-9)

    def test_autoregressive(self):
        out = model.build_prior(PriorSpec.autoregressive(0.5), np.eye(2), 2)
        assert np.allclose(out, [[1.0, 0.5], [0.5, 1.0]], atol=1e-15)


class TestProblemConfig:
    def test_validation(self):
        with pytest.raises(InvalidSpec):
            ProblemConfig(n=5, d=4, signal=1.0, noise_var=1.0)
        with pytest.raises(InvalidSpec):
            ProblemConfig(n=0, d=4, signal=1.0, noise_var=1.0)
        with pytest.raises(InvalidSpec):
            ProblemConfig(n=2, d=4, signal=-1.0, noise_var=1.0)

    def test_snr(self):
        assert ProblemConfig(2, 4, 2.0, 0.5).snr == 4.0
        assert ProblemConfig(2, 4, 1.0, 0.0).snr == math.inf
        assert ProblemConfig(2, 4, 0.0, 0.0).snr == 0.0


class TestSampleInstance:
    def _setup(self, n=5, d=10, signal=1.0, noise_var=1.0, seed=0):
        config = ProblemConfig(n=n, d=d, signal=signal, noise_var=noise_var, seed=seed)
        sigma = model.build_covariance(CovarianceSpec.autoregressive(0.5), d)
        phi = np.eye(d)
        return config, sigma, phi

    def test_noiseless(self):
        config, sigma, phi = self._setup(noise_var=0.0)
        inst = model.sample_instance(config, sigma, phi)
        assert np.array_equal(inst.xi, np.zeros(5))
        assert np.array_equal(inst.y, inst.X @ inst.w_star)

    def test_signal_free(self):
        config, sigma, phi = self._setup(signal=0.0)
        inst = model.sample_instance(config, sigma, phi)
        assert np.array_equal(inst.w_star, np.zeros(10))
        assert np.array_equal(inst.y, inst.xi)

    def test_bitwise_reproducible(self):
        config, sigma, phi = self._setup(seed=42)
        a = model.sample_instance(config, sigma, phi)
        b = model.sample_instance(config, sigma, phi)
        assert np.array_equal(a.X, b.X)
        assert np.array_equal(a.w_star, b.w_star)
        assert np.array_equal(a.xi, b.xi)
        assert np.array_equal(a.y, b.y)

    def test_response_assembled_exactly(self):
        config, sigma, phi = self._setup(seed=3)
        inst = model.sample_instance(config, sigma, phi)
        assert np.array_equal(inst.y, inst.X @ inst.w_star + inst.xi)

    def test_sampling_covariance_oracle(self):
        # rows of X follow N(0, Sigma): stack many tiny instances
        sigma = np.diag([4.0, 1.0])
        phi = np.eye(2)
        rng = np.random.default_rng(7)
        config = ProblemConfig(n=2, d=2, signal=1.0, noise_var=1.0, seed=0)
        rows = np.vstack(
            [model.sample_instance(config, sigma, phi, rng).X for _ in range(50_000)]
        )
        emp = rows.T @ rows / rows.shape[0]
        assert np.all(np.abs(emp - sigma) <= 0.05 * np.maximum(np.abs(sigma), 1.0))

    def test_dimension_mismatch(self):
        config, sigma, phi = self._setup()
        with pytest.raises(InvalidSpec):
            model.sample_instance(config, sigma[:4, :4], phi)


class TestSampleSphere:
    def test_row_norms(self, rng):
        out = model.sample_sphere(50, 7, rng)
        assert np.abs(np.linalg.norm(out, axis=1) - math.sqrt(7)).max() <= 1e-12

    def test_one_dimensional(self, rng):
        out = model.sample_sphere(100, 1, rng)
        assert np.abs(np.abs(out) - 1.0).max() <= 1e-12
        assert set(np.unique(np.sign(out))) == {-1.0, 1.0}

    def test_second_moment_oracle(self, rng):
        d = 5
        out = model.sample_sphere(100_000, d, rng)
        emp = out.T @ out / out.shape[0]
        assert np.linalg.norm(emp - np.eye(d), ord=2) <= 0.05
