"""Random-features regression under the linear data model.

The model is ``x -> a^T act(theta x / sqrt(d))`` with a fixed random first
layer ``theta`` whose rows lie on the sphere of radius ``sqrt(d)``; only the
output weights ``a`` are fit.  Population second moments of the feature map
are estimated by Monte Carlo over sphere-uniform inputs and drive both the
closed-form optimal interpolator and its gradient-descent realization.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import numerics, optim
from .errors import InvalidParams, InvalidSpec, NotPositiveDefinite
from .interpolators import LinearEstimator
from .model import sample_sphere

logger = logging.getLogger(__name__)

RF_MIN_NORM = "rf_min_norm"
RF_OPTIMAL = "rf_optimal"

ACTIVATIONS = {
    "relu": lambda u: np.maximum(u, 0.0),
    "tanh": np.tanh,
    "identity": lambda u: u,
}

# Row norms of the first layer must equal sqrt(d) to this relative tolerance.
ROW_NORM_TOL = 1e-10


@dataclass(frozen=True)
class RFModel:
    """Fixed random first layer with an entrywise activation."""

    theta: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise InvalidSpec(f"unknown activation {self.activation!r}")
        theta = numerics.ensure_finite(self.theta, "theta")
        target = math.sqrt(theta.shape[1])
        norms = np.linalg.norm(theta, axis=1)
        if np.abs(norms - target).max() > ROW_NORM_TOL * target:
            raise InvalidSpec("first-layer rows must lie on the sphere of radius sqrt(d)")

    @property
    def width(self) -> int:
        return self.theta.shape[0]

    @property
    def input_dim(self) -> int:
        return self.theta.shape[1]


def make_rf_model(
    width: int, input_dim: int, activation: str, rng: np.random.Generator
) -> RFModel:
    """Draw a first layer with rows uniform on the sphere of radius ``sqrt(input_dim)``."""
    return RFModel(theta=sample_sphere(width, input_dim, rng), activation=activation)


def rf_features(X: np.ndarray, model: RFModel) -> np.ndarray:
    """Feature matrix ``act(X theta^T / sqrt(d))``."""
    X = numerics.ensure_finite(X, "X")
    if X.shape[1] != model.input_dim:
        raise ValueError(
            f"input dim {X.shape[1]} does not match first layer {model.input_dim}"
        )
    return ACTIVATIONS[model.activation](X @ model.theta.T / math.sqrt(model.input_dim))


@dataclass(frozen=True)
class RFSecondMoments:
    """Monte Carlo estimates of the feature covariance and feature-input cross moment."""

    sigma_z: np.ndarray
    sigma_zx: np.ndarray
    sample_count: int
    regularized: bool = False


def estimate_second_moments(
    model: RFModel,
    samples: int,
    rng: np.random.Generator,
    batch_size: int = 8192,
) -> RFSecondMoments:
    """Estimate the population second moments over sphere-uniform inputs.

    Accumulates ``act(theta x / sqrt(d))`` outer products in fixed-size
    batches (deterministic combination order).  The feature covariance is
    symmetrized; if it is numerically singular a ridge of
    ``1e-8 * tr / width`` is added and logged.
    """
    if samples < model.width:
        raise InvalidSpec("need at least `width` samples for a full-rank feature covariance")
    N, d = model.width, model.input_dim
    act = ACTIVATIONS[model.activation]
    scale = math.sqrt(d)
    sigma_z = np.zeros((N, N))
    sigma_zx = np.zeros((N, d))
    remaining = samples
    while remaining > 0:
        m = min(batch_size, remaining)
        points = sample_sphere(m, d, rng)
        feats = act(points @ model.theta.T / scale)
        sigma_z += feats.T @ feats
        sigma_zx += feats.T @ points
        remaining -= m
    sigma_z /= samples
    sigma_zx /= samples
    sigma_z = 0.5 * (sigma_z + sigma_z.T)
    eigvals = np.linalg.eigvalsh(sigma_z)
    regularized = False
    if eigvals[0] < N * numerics.EPS * max(eigvals[-1], 0.0):
        ridge = 1e-8 * np.trace(sigma_z) / N
        sigma_z = sigma_z + ridge * np.eye(N)
        regularized = True
        logger.warning(
            "feature covariance numerically singular (min eig %.3e); added ridge %.3e",
            eigvals[0],
            ridge,
        )
    return RFSecondMoments(
        sigma_z=sigma_z, sigma_zx=sigma_zx, sample_count=samples, regularized=regularized
    )


def rf_optimal(
    X: np.ndarray,
    Z: np.ndarray,
    moments: RFSecondMoments,
    phi: Optional[np.ndarray],
    snr: float,
) -> LinearEstimator:
    """Risk-optimal response-linear interpolator on the feature weights.

    ``Q = Sz^{-1} (Szx phi X^T + Z^T (Z Sz^{-1} Z^T)^{-1}
    ((d/snr) I + X phi X^T - Z Sz^{-1} Szx phi X^T)) ((d/snr) I + X phi X^T)^{-1}``.
    Interpolates exactly for any SPD ``Sz`` estimate.
    """
    X = numerics.ensure_finite(X, "X")
    Z = numerics.ensure_finite(Z, "Z")
    if not (0.0 < snr < math.inf):
        raise InvalidParams(f"signal-to-noise ratio must be finite and positive, got {snr}")
    n, d = X.shape
    if Z.shape[0] != n:
        raise ValueError("feature matrix row count does not match X")
    from scipy.linalg import cho_factor, cho_solve

    try:
        sz_factor = cho_factor(moments.sigma_z, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("feature covariance is not positive definite") from exc

    cross = X.T if phi is None else phi @ X.T  # d x n
    core = (d / snr) * np.eye(n) + X @ cross
    core = 0.5 * (core + core.T)
    T = cho_solve(sz_factor, moments.sigma_zx @ cross, check_finite=False)
    Y = cho_solve(sz_factor, Z.T, check_finite=False)
    mid = Z @ Y
    matrix = T + Y @ numerics.solve_gram(0.5 * (mid + mid.T), core - Z @ T)
    matrix = np.linalg.solve(core.T, matrix.T).T
    return LinearEstimator(matrix, RF_OPTIMAL)


def rf_min_norm(Z: np.ndarray) -> LinearEstimator:
    """Minimum-norm interpolator on the feature weights, ``Z^+ y``."""
    Z = numerics.ensure_finite(Z, "Z")
    gram = Z @ Z.T
    return LinearEstimator(Z.T @ numerics.inv_gram(gram), RF_MIN_NORM)


def rf_init(
    moments: RFSecondMoments,
    phi: Optional[np.ndarray],
    X: np.ndarray,
    snr: float,
    y: np.ndarray,
) -> np.ndarray:
    """Start point from which feature-space preconditioned GD reaches the optimum.

    ``a0 = Sz^{-1} Szx phi X^T ((d/snr) I + X phi X^T)^{-1} y``.
    """
    X = numerics.ensure_finite(X, "X")
    if not (0.0 < snr < math.inf):
        raise InvalidParams(f"signal-to-noise ratio must be finite and positive, got {snr}")
    n, d = X.shape
    cross = X.T if phi is None else phi @ X.T
    core = (d / snr) * np.eye(n) + X @ cross
    u = np.linalg.solve(0.5 * (core + core.T), np.asarray(y, dtype=float))
    return numerics.solve_spd(moments.sigma_z, moments.sigma_zx @ (cross @ u), "sigma_z")


def rf_pgd(
    Z: np.ndarray,
    y: np.ndarray,
    sigma_z: np.ndarray,
    a0: np.ndarray,
    cfg: optim.GDConfig = optim.GDConfig(),
) -> tuple[np.ndarray, optim.GDTrace]:
    """Preconditioned gradient descent on the feature weights.

    Same contract as :func:`optim.precond_gd` with the feature matrix and
    feature covariance in place of the data matrix and input covariance.
    """
    return optim.precond_gd(Z, y, sigma_z, a0, cfg)


def rf_excess_risk(
    a: np.ndarray,
    w_star: np.ndarray,
    moments: RFSecondMoments,
    sigma: Optional[np.ndarray] = None,
) -> float:
    """Closed-form excess risk of output weights ``a`` against the linear signal.

    ``a^T Sz a - 2 a^T Szx w_star + w_star^T sigma w_star`` with ``sigma`` the
    input second moment (identity for sphere-uniform inputs, the default).
    """
    a = np.asarray(a, dtype=float)
    w_star = np.asarray(w_star, dtype=float)
    if a.shape[0] != moments.sigma_z.shape[0] or w_star.shape[0] != moments.sigma_zx.shape[1]:
        raise ValueError("weight/signal dimensions do not match the moment matrices")
    if sigma is None:
        signal_part = float(w_star @ w_star)
    elif numerics.is_diagonal(sigma):
        signal_part = float(w_star @ (np.diagonal(sigma) * w_star))
    else:
        signal_part = float(w_star @ (sigma @ w_star))
    return float(a @ (moments.sigma_z @ a) - 2.0 * a @ (moments.sigma_zx @ w_star)) + signal_part
