import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from optinterp import rmt
from optinterp.errors import InvalidParams


def params(rho1, rho2, psi1, gamma):
    return rmt.StrongWeakParams(rho1=rho1, rho2=rho2, psi1=psi1, gamma=gamma)


class TestCompanionTransform:
    def test_isotropic_value(self):
        assert rmt.companion_stieltjes_zero(params(1, 1, 0.5, 2)) == pytest.approx(1.0)

    def test_two_level_value(self):
        assert rmt.companion_stieltjes_zero(params(4, 1, 0.5, 2)) == pytest.approx(0.5)

    @given(st.floats(0.01, 0.99))
    def test_isotropic_regardless_of_split(self, psi1):
        assert rmt.companion_stieltjes_zero(params(1, 1, psi1, 2)) == pytest.approx(1.0)

    @given(
        st.floats(0.5, 8.0),
        st.floats(0.05, 0.5),
        st.floats(0.0, 1.0),
        st.floats(1.05, 5.0),
    )
    def test_solves_silverstein_equation(self, rho1, rho2, psi1, gamma):
        p = params(max(rho1, rho2), min(rho1, rho2), psi1, gamma)
        v0 = rmt.companion_stieltjes_zero(p)
        assert abs(rmt.silverstein_gap(p, v0)) <= 1e-10

    def test_invalid_aspect_ratio(self):
        with pytest.raises(InvalidParams):
            params(1, 1, 0.5, 1.0)

    def test_invalid_levels(self):
        with pytest.raises(InvalidParams):
            params(0.5, 1.0, 0.5, 2.0)
        with pytest.raises(InvalidParams):
            params(1.0, -1.0, 0.5, 2.0)


class TestDampedSecondMoment:
    def test_isotropic_value(self):
        assert rmt.damped_second_moment(params(1, 1, 0.3, 2), 1.0) == pytest.approx(0.25)

    def test_two_level_hand_value(self):
        # 0.5*16/9 + 0.5*1/2.25 = 10/9
        assert rmt.damped_second_moment(params(4, 1, 0.5, 2), 0.5) == pytest.approx(10.0 / 9.0)

    def test_weak_level_vanishing_limit(self):
        p = params(4, 1e-12, 0.5, 2)
        expected = 0.5 * 16.0 / (1 + 4 * 0.5) ** 2
        assert rmt.damped_second_moment(p, 0.5) == pytest.approx(expected, rel=1e-6)

    def test_rejects_nonpositive_v0(self):
        with pytest.raises(InvalidParams):
            rmt.damped_second_moment(params(1, 1, 0.5, 2), 0.0)


class TestMinNormAsymptotics:
    def test_isotropic_anchor(self):
        B, V = rmt.min_norm_asymptotics(params(1, 1, 0.5, 2), 1.0, 1.0)
        assert B == pytest.approx(0.5)
        assert V == pytest.approx(1.0)

    def test_two_level_values(self):
        B, V = rmt.min_norm_asymptotics(params(4, 1, 0.5, 2), 1.0, 1.0)
        assert B == pytest.approx(1.0)
        assert V == pytest.approx(1.25)

    def test_bias_closed_form_at_critical_split(self):
        # gamma*psi1 = 1: bias reduces to signal * sqrt(rho1 rho2) / gamma
        for rho1, rho2 in [(1.0, 0.3), (9.0, 0.25), (4.0, 4.0)]:
            B, _ = rmt.min_norm_asymptotics(params(max(rho1, rho2), min(rho1, rho2), 0.5, 2), 1.0, 1.0)
            assert B == pytest.approx(math.sqrt(rho1 * rho2) / 2.0, rel=1e-10)

    def test_weak_level_vanishing_variance_law(self):
        # sqrt(rho2) * V -> (sigma2/2) sqrt(rho1 / (gamma - 1)) as rho2 -> 0
        rho2 = 1e-10
        _, V = rmt.min_norm_asymptotics(params(1.0, rho2, 0.5, 2.0), 1.0, 1.0)
        assert math.sqrt(rho2) * V == pytest.approx(0.5, rel=1e-4)

    def test_variance_diverges_as_weak_level_vanishes(self):
        values = [
            rmt.min_norm_asymptotics(params(1.0, rho2, 0.5, 2.0), 1.0, 1.0)[1]
            for rho2 in (1.0, 1e-2, 1e-4, 1e-6)
        ]
        assert values[0] < values[1] < values[2] < values[3]
        assert values[-1] > 100.0


class TestBestVarianceAsymptotics:
    def test_isotropic_value(self):
        assert rmt.best_variance_asymptotics(params(1, 1, 0.5, 2), 1.0, 1.0) == pytest.approx(1.5)

    def test_diverging_bias_value(self):
        assert rmt.best_variance_asymptotics(params(100, 1, 0.5, 2), 1.0, 1.0) == pytest.approx(
            26.25
        )

    def test_pure_bias_with_zero_noise(self):
        p = params(3, 1, 0.25, 2)
        expected = (0.25 * 3 + 0.75 * 1) * 0.5
        assert rmt.best_variance_asymptotics(p, 1.0, 0.0) == pytest.approx(expected)

    def test_growth_rates(self):
        # best-variance risk grows linearly in rho1, min-norm like sqrt(rho1)
        small, big = params(100, 1, 0.5, 2), params(10_000, 1, 0.5, 2)
        bv_ratio = rmt.best_variance_asymptotics(big, 1, 1) / rmt.best_variance_asymptotics(
            small, 1, 1
        )
        mn_ratio = sum(rmt.min_norm_asymptotics(big, 1, 1)) / sum(
            rmt.min_norm_asymptotics(small, 1, 1)
        )
        assert bv_ratio == pytest.approx(100.0, rel=0.05)
        assert mn_ratio == pytest.approx(10.0, rel=0.05)


@pytest.mark.slow
class TestFiniteSampleAgreement:
    def test_min_norm_bias_variance_at_desk_scale(self, rng):
        # quick single-point version of the acceptance grid
        from optinterp import interpolators, risk
        from optinterp.model import CovarianceSpec, PriorSpec, ProblemConfig

        p = params(4.0, 1.0, 0.5, 2.0)
        B_pred, V_pred = rmt.min_norm_asymptotics(p, 1.0, 1.0)
        report = risk.monte_carlo_expected_risk(
            lambda inst, g: interpolators.min_norm(inst.X),
            ProblemConfig(n=400, d=800, signal=1.0, noise_var=1.0, seed=0),
            CovarianceSpec.strong_weak(4.0, 1.0, 0.5),
            PriorSpec.identity(),
            replicates=20,
        )
        assert report.bias == pytest.approx(B_pred, rel=0.1)
        assert report.variance == pytest.approx(V_pred, rel=0.1)
