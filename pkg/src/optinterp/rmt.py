"""Asymptotic risk predictions for the two-level (strong/weak) covariance model.

The population spectrum is the two-point mixture ``psi1`` at ``rho1`` and
``1 - psi1`` at ``rho2``; the aspect ratio ``gamma = d / n`` exceeds one.  In
this family the companion Stieltjes transform of the sample Gram spectrum has
a closed form at zero,

    v(0) = (x + sqrt(x^2 + 4 (gamma-1) rho1 rho2)) / (2 (gamma-1) rho1 rho2),
    x = rho1 + rho2 - gamma psi1 rho1 - gamma (1-psi1) rho2,

and the limiting bias/variance of the minimum-norm interpolator follow from
it through the damped second moment

    Delta = psi1 rho1^2 / (1 + rho1 v(0))^2 + (1-psi1) rho2^2 / (1 + rho2 v(0))^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParams


@dataclass(frozen=True)
class StrongWeakParams:
    rho1: float
    rho2: float
    psi1: float
    gamma: float

    def __post_init__(self):
        if not (self.rho1 > 0 and self.rho2 > 0):
            raise InvalidParams("eigenvalue levels must be positive")
        if self.rho1 < self.rho2:
            raise InvalidParams("convention requires rho1 >= rho2")
        if not 0.0 <= self.psi1 <= 1.0:
            raise InvalidParams(f"psi1 must lie in [0, 1], got {self.psi1}")
        if not self.gamma > 1.0:
            raise InvalidParams(f"aspect ratio must exceed 1, got {self.gamma}")

    @property
    def mean_eigenvalue(self) -> float:
        return self.psi1 * self.rho1 + (1.0 - self.psi1) * self.rho2


def companion_stieltjes_zero(params: StrongWeakParams) -> float:
    """The companion Stieltjes transform of the Gram spectrum evaluated at zero."""
    rho1, rho2, psi1, gamma = params.rho1, params.rho2, params.psi1, params.gamma
    x = rho1 + rho2 - gamma * psi1 * rho1 - gamma * (1.0 - psi1) * rho2
    return (x + np.sqrt(x * x + 4.0 * (gamma - 1.0) * rho1 * rho2)) / (
        2.0 * (gamma - 1.0) * rho1 * rho2
    )


def damped_second_moment(params: StrongWeakParams, v0: float) -> float:
    """Second spectral moment damped by the companion transform (the Delta term)."""
    if v0 <= 0:
        raise InvalidParams(f"v0 must be positive, got {v0}")
    rho1, rho2, psi1 = params.rho1, params.rho2, params.psi1
    return psi1 * rho1**2 / (1.0 + rho1 * v0) ** 2 + (1.0 - psi1) * rho2**2 / (
        1.0 + rho2 * v0
    ) ** 2


def silverstein_gap(params: StrongWeakParams, v: float) -> float:
    """Residual of the zero-argument Silverstein fixed-point equation at ``v``.

    Zero iff ``1/v = gamma * E[s / (1 + s v)]`` under the two-point spectrum.
    """
    rho1, rho2, psi1, gamma = params.rho1, params.rho2, params.psi1, params.gamma
    rhs = gamma * (psi1 * rho1 / (1.0 + rho1 * v) + (1.0 - psi1) * rho2 / (1.0 + rho2 * v))
    return 1.0 / v - rhs


def min_norm_asymptotics(
    params: StrongWeakParams, signal: float, noise_var: float
) -> tuple[float, float]:
    """Limiting (bias, variance) of the minimum-norm interpolator.

    ``B = signal / (gamma v(0))`` and
    ``V = noise_var * (1 / (1 - gamma Delta v(0)^2) - 1)``.
    """
    v0 = companion_stieltjes_zero(params)
    delta = damped_second_moment(params, v0)
    denom = 1.0 - params.gamma * delta * v0 * v0
    if denom <= 0:
        raise InvalidParams(
            f"variance denominator 1 - gamma*Delta*v0^2 = {denom:.3e} is not positive"
        )
    bias = signal / (params.gamma * v0)
    variance = noise_var * (1.0 / denom - 1.0)
    return bias, variance


def best_variance_asymptotics(
    params: StrongWeakParams, signal: float, noise_var: float
) -> float:
    """Limiting excess risk of the best-variance interpolator.

    ``signal * mean(spectrum) * (1 - 1/gamma) + noise_var / (gamma - 1)``.
    """
    gamma = params.gamma
    return signal * params.mean_eigenvalue * (1.0 - 1.0 / gamma) + noise_var / (gamma - 1.0)
