"""Preconditioned gradient descent on the empirical risk and its implicit bias.

The iteration is ``w <- w - eta * P^{-1} grad R(w)`` with ``P`` the population
covariance and ``R`` the mean squared training error.  Its limit, when it
converges, is the covariance-geometry projection of the start point onto the
interpolation set; the closed form is exposed separately so the two routes can
check each other.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import numerics
from .errors import NotConverged


@dataclass(frozen=True)
class GDConfig:
    """Step-size safety factor, iteration cap and stopping tolerance.

    The constant step is ``step_safety * n / lambda_max(X P^{-1} X^T)``;
    any ``step_safety`` in (0, 1) keeps the training residual monotone.
    ``max_iters=None`` means ``200 * n``.
    """

    step_safety: float = 0.5
    max_iters: Optional[int] = None
    residual_tol: float = 1e-10

    def __post_init__(self):
        if not 0.0 < self.step_safety < 1.0:
            raise ValueError(f"step_safety must lie in (0, 1), got {self.step_safety}")
        if self.residual_tol <= 0:
            raise ValueError("residual_tol must be positive")
        if self.max_iters is not None and self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class GDTrace:
    iterations_used: int
    final_residual: float
    converged: bool


def grad_empirical_risk(w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of the mean squared training error: ``(2/n) X^T (X w - y)``."""
    w = np.asarray(w, dtype=float)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[1] != w.shape[0] or X.shape[0] != y.shape[0]:
        raise ValueError(
            f"shape mismatch: X {X.shape}, w {w.shape}, y {y.shape}"
        )
    return (2.0 / X.shape[0]) * (X.T @ (X @ w - y))


def _precond_apply(sigma: np.ndarray):
    if numerics.is_diagonal(sigma):
        inv_diag = 1.0 / np.diagonal(sigma)
        return lambda v: inv_diag * v
    from scipy.linalg import cho_factor, cho_solve

    try:
        factor = cho_factor(sigma, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        from .errors import NotPositiveDefinite

        raise NotPositiveDefinite("preconditioner is not positive definite") from exc
    return lambda v: cho_solve(factor, v, check_finite=False)


def precond_gd(
    X: np.ndarray,
    y: np.ndarray,
    sigma: np.ndarray,
    w0: np.ndarray,
    cfg: GDConfig = GDConfig(),
) -> tuple[np.ndarray, GDTrace]:
    """Run preconditioned gradient descent to interpolation.

    Stops when ``||X w - y|| <= residual_tol * ||y||`` (absolute when
    ``y = 0``).  Raises :class:`NotConverged` with the trace and partial
    iterate if the iteration cap is exhausted first.
    """
    X = numerics.ensure_finite(X, "X")
    y = np.asarray(y, dtype=float)
    n = X.shape[0]
    w = np.array(w0, dtype=float, copy=True)
    solve = _precond_apply(sigma)
    max_iters = cfg.max_iters if cfg.max_iters is not None else 200 * n

    # lambda_max of X sigma^{-1} X^T sets the stable step
    scaled = solve(X.T)
    gram = X @ scaled
    lam_max = float(np.linalg.eigvalsh(0.5 * (gram + gram.T)).max())
    eta = cfg.step_safety * n / lam_max

    y_norm = float(np.linalg.norm(y))
    threshold = cfg.residual_tol * (y_norm if y_norm > 0 else 1.0)

    residual = X @ w - y
    res_norm = float(np.linalg.norm(residual))
    iters = 0
    while res_norm > threshold and iters < max_iters:
        w -= eta * solve((2.0 / n) * (X.T @ residual))
        residual = X @ w - y
        res_norm = float(np.linalg.norm(residual))
        iters += 1
    converged = res_norm <= threshold
    trace = GDTrace(iterations_used=iters, final_residual=res_norm, converged=converged)
    if not converged:
        raise NotConverged(
            f"gradient descent still at residual {res_norm:.3e} after {iters} iterations",
            partial=w,
            trace=trace,
        )
    return w, trace


def implicit_bias_closed_form(
    X: np.ndarray, sigma: np.ndarray, w0: np.ndarray, y: np.ndarray
) -> np.ndarray:
    """Limit of converging preconditioned gradient descent from ``w0``.

    ``sigma^{-1/2} (X sigma^{-1/2})^+ (y - X w0) + w0``: the start point plus
    the covariance-optimal fit of what it leaves unexplained.
    """
    from .interpolators import variance_optimal_piece

    X = numerics.ensure_finite(X, "X")
    w0 = np.asarray(w0, dtype=float)
    return w0 + variance_optimal_piece(X, sigma) @ (np.asarray(y, dtype=float) - X @ w0)


def optimal_init(
    X: np.ndarray, phi: Optional[np.ndarray], snr: float, y: np.ndarray
) -> np.ndarray:
    """Start point from which preconditioned GD reaches the optimal interpolator.

    ``w0 = (snr/d) phi X^T (I + (snr/d) X phi X^T)^{-1} y``, a ridge-type
    non-interpolating point.
    """
    from .interpolators import _prior_cross

    X = numerics.ensure_finite(X, "X")
    y = np.asarray(y, dtype=float)
    if snr < 0 or np.isinf(snr):
        raise ValueError(f"signal-to-noise ratio must be finite and >= 0, got {snr}")
    n, d = X.shape
    if y.shape[0] != n:
        raise ValueError(f"response length {y.shape[0]} does not match n={n}")
    cross = _prior_cross(X, phi)
    core = np.eye(n) + (snr / d) * (X @ cross)
    return (snr / d) * (cross @ np.linalg.solve(0.5 * (core + core.T), y))
