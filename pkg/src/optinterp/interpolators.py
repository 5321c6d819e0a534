"""Closed-form interpolating estimators, each materialized as a d x n map.

All builders return estimators whose fitted vector ``Q @ y`` satisfies
``X (Q y) = y`` exactly in arithmetic; the oracle best-possible interpolator
additionally uses the realized signal and noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import numerics
from .errors import InvalidParams

MIN_NORM = "min_norm"
BEST_VARIANCE = "best_variance"
OPTIMAL_BIAS = "optimal_bias"
OPTIMAL_RESPONSE_LINEAR = "optimal_response_linear"
BEST_POSSIBLE = "best_possible"


@dataclass(frozen=True)
class LinearEstimator:
    """A response-linear estimator ``y -> matrix @ y``."""

    matrix: np.ndarray
    label: str

    def __post_init__(self):
        numerics.ensure_finite(self.matrix, f"estimator {self.label!r}")


@dataclass(frozen=True)
class OracleEstimate:
    """A fitted parameter vector from an estimator with oracle side information."""

    w: np.ndarray
    label: str


def apply(estimator: LinearEstimator, y: np.ndarray) -> np.ndarray:
    """Evaluate the estimator on a response vector."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] != estimator.matrix.shape[1]:
        raise ValueError(
            f"response length {y.shape[0]} does not match estimator "
            f"width {estimator.matrix.shape[1]}"
        )
    return estimator.matrix @ y


def _prior_cross(X: np.ndarray, phi: Optional[np.ndarray]) -> np.ndarray:
    # phi @ X.T with identity/diagonal fast paths; phi=None means identity
    if phi is None:
        return X.T.copy()
    if numerics.is_diagonal(phi):
        return X.T * np.diagonal(phi)[:, None]
    return phi @ X.T


def variance_optimal_piece(X: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """The map ``sigma^{-1} X^T (X sigma^{-1} X^T)^{-1}``.

    Equals ``sigma^{-1/2} (X sigma^{-1/2})^+`` for full-row-rank ``X``; this
    Gram form avoids an SVD.
    """
    if numerics.is_diagonal(sigma):
        scaled = X.T / np.diagonal(sigma)[:, None]
    else:
        scaled = numerics.solve_spd(sigma, X.T, name="covariance")
    inner = X @ scaled
    return scaled @ numerics.inv_gram(0.5 * (inner + inner.T))


def min_norm(X: np.ndarray) -> LinearEstimator:
    """Minimum-Euclidean-norm interpolator ``X^+ = X^T (X X^T)^{-1}``."""
    X = numerics.ensure_finite(X, "X")
    gram = X @ X.T
    return LinearEstimator(X.T @ numerics.inv_gram(gram), MIN_NORM)


def best_variance(X: np.ndarray, sigma: np.ndarray) -> LinearEstimator:
    """Interpolator with the smallest variance term: ``sigma^{-1/2}(X sigma^{-1/2})^+``."""
    X = numerics.ensure_finite(X, "X")
    return LinearEstimator(variance_optimal_piece(X, sigma), BEST_VARIANCE)


def optimal_bias(X: np.ndarray, phi: Optional[np.ndarray]) -> LinearEstimator:
    """Response-linear interpolator with the smallest bias term: ``phi X^T (X phi X^T)^{-1}``."""
    X = numerics.ensure_finite(X, "X")
    cross = _prior_cross(X, phi)
    inner = X @ cross
    return LinearEstimator(
        cross @ numerics.inv_gram(0.5 * (inner + inner.T)),
        OPTIMAL_BIAS,
    )


def optimal_response_linear(
    X: np.ndarray,
    sigma: np.ndarray,
    phi: Optional[np.ndarray],
    snr: float,
    label: str = OPTIMAL_RESPONSE_LINEAR,
) -> LinearEstimator:
    """The risk-optimal response-linear interpolator.

    ``Q = ((snr/d) phi X^T + sigma^{-1/2}(X sigma^{-1/2})^+)
    (I + (snr/d) X phi X^T)^{-1}``.  The signal-to-noise limits dispatch to
    the closed forms they converge to: ``snr = 0`` gives the best-variance
    interpolator, ``snr = inf`` the best-bias one.
    """
    X = numerics.ensure_finite(X, "X")
    if snr < 0:
        raise InvalidParams(f"signal-to-noise ratio must be >= 0, got {snr}")
    if snr == 0:
        return LinearEstimator(best_variance(X, sigma).matrix, label)
    if math.isinf(snr):
        return LinearEstimator(optimal_bias(X, phi).matrix, label)
    n, d = X.shape
    cross = _prior_cross(X, phi)
    inner = X @ cross
    core = np.eye(n) + (snr / d) * 0.5 * (inner + inner.T)
    piece = variance_optimal_piece(X, sigma)
    matrix = np.linalg.solve(core.T, ((snr / d) * cross + piece).T).T
    return LinearEstimator(matrix, label)


def best_possible(
    X: np.ndarray, sigma: np.ndarray, w_star: np.ndarray, xi: np.ndarray
) -> OracleEstimate:
    """Oracle interpolator: fits the signal exactly and the noise optimally.

    ``w = w_star + sigma^{-1/2}(X sigma^{-1/2})^+ xi``; a lower bound on the
    risk of every interpolator.
    """
    X = numerics.ensure_finite(X, "X")
    piece = variance_optimal_piece(X, sigma)
    return OracleEstimate(np.asarray(w_star, dtype=float) + piece @ xi, BEST_POSSIBLE)
