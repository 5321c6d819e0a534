"""Exact and Monte Carlo evaluation of excess risk, bias and variance.

For a response-linear estimator with matrix ``Q`` the noise-averaged excess
risk conditional on the data and signal is

    ||(Q X - I) w_star||_sigma^2 + noise_var * tr(sigma Q Q^T),

and averaging over the prior as well gives the bias/variance pair

    B = (signal / d) tr(sigma (Q X - I) phi (Q X - I)^T)
    V = noise_var * tr(sigma Q Q^T).

The trace formulas are evaluated through n x n contractions so no d x d
intermediate is ever formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from . import numerics
from .interpolators import LinearEstimator, OracleEstimate, variance_optimal_piece
from .model import ProblemConfig, ProblemInstance, build_covariance, build_prior, sample_instance


@dataclass(frozen=True)
class RiskReport:
    """Monte Carlo summary: mean excess risk with a normal-approximation stderr."""

    excess_risk: float
    stderr: float
    bias: Optional[float] = None
    variance: Optional[float] = None
    replicates: int = 0
    failures: int = 0


def _sym_apply(mat: Optional[np.ndarray], other: np.ndarray) -> np.ndarray:
    # mat @ other where mat is SPD or None (identity), with a diagonal fast path
    if mat is None:
        return other
    if numerics.is_diagonal(mat):
        return np.diagonal(mat)[:, None] * other
    return mat @ other


def _quad_form(vec: np.ndarray, mat: Optional[np.ndarray]) -> float:
    if mat is None:
        return float(vec @ vec)
    if numerics.is_diagonal(mat):
        return float(vec @ (np.diagonal(mat) * vec))
    return float(vec @ (mat @ vec))


def excess_risk(w: np.ndarray, w_star: np.ndarray, sigma: np.ndarray) -> float:
    """Excess prediction risk of a fitted vector: ``(w - w_star)^T sigma (w - w_star)``."""
    w = np.asarray(w, dtype=float)
    w_star = np.asarray(w_star, dtype=float)
    if w.shape != w_star.shape:
        raise ValueError(f"shape mismatch: {w.shape} vs {w_star.shape}")
    diff = w - w_star
    return _quad_form(diff, sigma)


def _as_matrix(Q: Union[LinearEstimator, np.ndarray]) -> np.ndarray:
    if isinstance(Q, LinearEstimator):
        return Q.matrix
    return np.asarray(Q, dtype=float)


def variance_term(Q: Union[LinearEstimator, np.ndarray], sigma: np.ndarray) -> float:
    """``tr(sigma Q Q^T)`` per unit noise variance."""
    Qm = _as_matrix(Q)
    return float(np.einsum("ij,ij->", Qm, _sym_apply(sigma, Qm)))


def conditional_expected_excess_risk(
    Q: Union[LinearEstimator, np.ndarray],
    X: np.ndarray,
    w_star: np.ndarray,
    sigma: np.ndarray,
    noise_var: float,
) -> float:
    """Noise-averaged excess risk of ``Q y`` given the data and signal."""
    Qm = _as_matrix(Q)
    if Qm.shape[1] != X.shape[0] or Qm.shape[0] != X.shape[1]:
        raise ValueError(f"estimator shape {Qm.shape} does not match data {X.shape}")
    misfit = Qm @ (X @ w_star) - w_star
    return _quad_form(misfit, sigma) + noise_var * variance_term(Qm, sigma)


def bias_variance(
    Q: Union[LinearEstimator, np.ndarray],
    X: np.ndarray,
    sigma: np.ndarray,
    phi: Optional[np.ndarray],
    signal: float,
    noise_var: float,
) -> tuple[float, float]:
    """Prior-averaged bias and variance of a response-linear estimator.

    Returns the pair ``(B, V)`` defined in the module docstring; their sum is
    the expected excess risk over both the noise and the prior.
    """
    Qm = _as_matrix(Q)
    n, d = X.shape
    if Qm.shape != (d, n):
        raise ValueError(f"estimator shape {Qm.shape} does not match data {X.shape}")
    sigma_Q = _sym_apply(sigma, Qm)
    V = noise_var * float(np.einsum("ij,ij->", Qm, sigma_Q))

    # tr(sigma (QX - I) phi (QX - I)^T) expanded into n x n contractions:
    #   tr((X phi X^T)(Q^T sigma Q)) - 2 tr((X phi sigma) Q) + tr(sigma phi)
    phi_cross = X if phi is None else X @ phi  # n x d, row i = x_i^T phi
    t1 = float(np.einsum("ij,ij->", phi_cross @ X.T, Qm.T @ sigma_Q))
    t2 = float(np.einsum("ij,ji->", _sym_apply(sigma, phi_cross.T).T, Qm))
    t3 = float(np.trace(sigma)) if phi is None else float(np.einsum("ij,ji->", sigma, phi))
    B = (signal / d) * (t1 - 2.0 * t2 + t3)
    return max(B, 0.0), V


def expected_excess_risk_best_possible(
    X: np.ndarray, sigma: np.ndarray, noise_var: float
) -> float:
    """Noise-averaged excess risk of the oracle interpolator.

    ``noise_var * tr((X sigma^{-1} X^T)^{-1})``: what fitting the noise
    optimally costs, with the signal fit exactly.
    """
    if noise_var == 0:
        return 0.0
    if numerics.is_diagonal(sigma):
        scaled = X.T / np.diagonal(sigma)[:, None]
    else:
        scaled = numerics.solve_spd(sigma, X.T, name="covariance")
    inner = X @ scaled
    return noise_var * float(np.trace(numerics.inv_gram(0.5 * (inner + inner.T))))


def is_interpolator(w: np.ndarray, X: np.ndarray, y: np.ndarray, tol: float = 1e-8) -> bool:
    """Whether ``X w = y`` holds to relative tolerance ``tol``."""
    resid = float(np.linalg.norm(X @ np.asarray(w, dtype=float) - y))
    return resid <= tol * max(float(np.linalg.norm(y)), 1.0)


EstimatorFactory = Callable[[ProblemInstance, np.random.Generator], object]


def monte_carlo_expected_risk(
    estimator_factory: EstimatorFactory,
    config: ProblemConfig,
    cov_spec,
    prior_spec,
    replicates: int,
    rng: Optional[np.random.Generator] = None,
) -> RiskReport:
    """Average excess risk over fresh instances built from the given specs.

    Response-linear estimators are scored with the conditional closed form
    (and contribute bias/variance); plain vectors and oracle estimates are
    scored with the realized excess risk.  Construction failures are counted
    and skipped.
    """
    if replicates < 2:
        raise ValueError("need at least 2 replicates for a standard error")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    sigma = build_covariance(cov_spec, config.d)
    phi = build_prior(prior_spec, sigma, config.d)
    risks, biases, variances = [], [], []
    failures = 0
    for _ in range(replicates):
        inst = sample_instance(config, sigma, phi, rng)
        try:
            result = estimator_factory(inst, rng)
        except (ValueError, RuntimeError, np.linalg.LinAlgError):
            failures += 1
            continue
        if isinstance(result, LinearEstimator):
            risks.append(
                conditional_expected_excess_risk(
                    result, inst.X, inst.w_star, sigma, config.noise_var
                )
            )
            b, v = bias_variance(result, inst.X, sigma, phi, config.signal, config.noise_var)
            biases.append(b)
            variances.append(v)
        else:
            w = result.w if isinstance(result, OracleEstimate) else np.asarray(result, float)
            risks.append(excess_risk(w, inst.w_star, sigma))
    if not risks:
        raise RuntimeError(f"all {replicates} estimator constructions failed")
    mean = float(np.mean(risks))
    stderr = float(np.std(risks, ddof=1) / math.sqrt(len(risks))) if len(risks) > 1 else 0.0
    return RiskReport(
        excess_risk=mean,
        stderr=stderr,
        bias=float(np.mean(biases)) if biases else None,
        variance=float(np.mean(variances)) if variances else None,
        replicates=len(risks),
        failures=failures,
    )
