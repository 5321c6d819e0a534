"""Covariance/prior regimes and seeded sampling of regression instances.

The data model is ``y = X w_star + xi`` with rows of ``X`` drawn i.i.d. from
``N(0, sigma)``, noise ``xi ~ N(0, noise_var * I)`` and a Gaussian prior
``w_star ~ N(0, (signal / d) * phi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import numerics
from .errors import InvalidSpec, RankDeficient

COVARIANCE_KINDS = ("identity", "strong_weak", "autoregressive", "exponential", "custom")
PRIOR_KINDS = ("identity", "autoregressive", "inverse_of_covariance", "custom")


@dataclass(frozen=True)
class CovarianceSpec:
    """Declarative recipe for the population covariance.

    ``strong_weak`` is a diagonal with ``floor(d * psi1)`` eigenvalues
    ``rho1`` followed by ``rho2``; ``autoregressive`` has entries
    ``rho ** |i - j|``; ``exponential`` is diagonal with entries
    ``-log(1 - i / (d + 1))``.
    """

    kind: str
    rho1: Optional[float] = None
    rho2: Optional[float] = None
    psi1: Optional[float] = None
    rho: Optional[float] = None
    matrix: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in COVARIANCE_KINDS:
            raise InvalidSpec(f"unknown covariance kind {self.kind!r}")
        if self.kind == "strong_weak":
            if self.rho1 is None or self.rho2 is None or self.psi1 is None:
                raise InvalidSpec("strong_weak needs rho1, rho2 and psi1")
            if not (self.rho1 > 0 and self.rho2 > 0):
                raise InvalidSpec("strong_weak eigenvalues must be positive")
            if self.rho1 < self.rho2:
                raise InvalidSpec("strong_weak requires rho1 >= rho2")
            if not 0.0 <= self.psi1 <= 1.0:
                raise InvalidSpec(f"psi1 must lie in [0, 1], got {self.psi1}")
        elif self.kind == "autoregressive":
            if self.rho is None or not 0.0 < self.rho < 1.0:
                raise InvalidSpec(f"autoregressive rho must lie in (0, 1), got {self.rho}")
        elif self.kind == "custom":
            if self.matrix is None:
                raise InvalidSpec("custom covariance needs an explicit matrix")

    @classmethod
    def identity(cls) -> "CovarianceSpec":
        return cls("identity")

    @classmethod
    def strong_weak(cls, rho1: float, rho2: float, psi1: float) -> "CovarianceSpec":
        return cls("strong_weak", rho1=rho1, rho2=rho2, psi1=psi1)

    @classmethod
    def autoregressive(cls, rho: float) -> "CovarianceSpec":
        return cls("autoregressive", rho=rho)

    @classmethod
    def exponential(cls) -> "CovarianceSpec":
        return cls("exponential")

    @classmethod
    def custom(cls, matrix: np.ndarray) -> "CovarianceSpec":
        return cls("custom", matrix=numerics.check_spd(matrix, "custom covariance"))

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for key in ("rho1", "rho2", "psi1", "rho"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.matrix is not None:
            out["matrix"] = np.asarray(self.matrix).tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CovarianceSpec":
        data = dict(data)
        if "matrix" in data:
            data["matrix"] = np.asarray(data["matrix"], dtype=float)
        return cls(**data)


@dataclass(frozen=True)
class PriorSpec:
    """Declarative recipe for the prior covariance shape ``phi``."""

    kind: str
    rho: Optional[float] = None
    matrix: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise InvalidSpec(f"unknown prior kind {self.kind!r}")
        if self.kind == "autoregressive":
            if self.rho is None or not 0.0 < self.rho < 1.0:
                raise InvalidSpec(f"autoregressive rho must lie in (0, 1), got {self.rho}")
        elif self.kind == "custom" and self.matrix is None:
            raise InvalidSpec("custom prior needs an explicit matrix")

    @classmethod
    def identity(cls) -> "PriorSpec":
        return cls("identity")

    @classmethod
    def autoregressive(cls, rho: float) -> "PriorSpec":
        return cls("autoregressive", rho=rho)

    @classmethod
    def inverse_of_covariance(cls) -> "PriorSpec":
        return cls("inverse_of_covariance")

    @classmethod
    def custom(cls, matrix: np.ndarray) -> "PriorSpec":
        return cls("custom", matrix=numerics.check_spd(matrix, "custom prior"))

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.rho is not None:
            out["rho"] = self.rho
        if self.matrix is not None:
            out["matrix"] = np.asarray(self.matrix).tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PriorSpec":
        data = dict(data)
        if "matrix" in data:
            data["matrix"] = np.asarray(data["matrix"], dtype=float)
        return cls(**data)


def _autoregressive_matrix(rho: float, dim: int) -> np.ndarray:
    idx = np.arange(dim)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def build_covariance(spec: CovarianceSpec, dim: int) -> np.ndarray:
    """Materialize the covariance matrix of a spec at dimension ``dim``."""
    if dim < 1:
        raise InvalidSpec(f"dimension must be >= 1, got {dim}")
    if spec.kind == "identity":
        return np.eye(dim)
    if spec.kind == "strong_weak":
        n_strong = math.floor(dim * spec.psi1)
        diag = np.full(dim, spec.rho2)
        diag[:n_strong] = spec.rho1
        return np.diag(diag)
    if spec.kind == "autoregressive":
        return _autoregressive_matrix(spec.rho, dim)
    if spec.kind == "exponential":
        quantiles = np.arange(1, dim + 1) / (dim + 1)
        return np.diag(-np.log1p(-quantiles))
    matrix = numerics.check_spd(spec.matrix, "custom covariance")
    if matrix.shape[0] != dim:
        raise InvalidSpec(f"custom covariance has dim {matrix.shape[0]}, expected {dim}")
    return matrix


def build_prior(spec: PriorSpec, sigma: np.ndarray, dim: int) -> np.ndarray:
    """Materialize the prior shape matrix; may depend on the covariance ``sigma``."""
    if spec.kind == "identity":
        return np.eye(dim)
    if spec.kind == "autoregressive":
        return _autoregressive_matrix(spec.rho, dim)
    if spec.kind == "inverse_of_covariance":
        if sigma is None or sigma.shape[0] != dim:
            raise InvalidSpec("inverse_of_covariance prior needs a matching SPD covariance")
        if numerics.is_diagonal(sigma):
            diag = np.diagonal(sigma)
            if np.any(diag <= 0):
                raise InvalidSpec("covariance diagonal must be positive to invert")
            return np.diag(1.0 / diag)
        inv = numerics.solve_spd(sigma, np.eye(dim), name="covariance")
        return 0.5 * (inv + inv.T)
    matrix = numerics.check_spd(spec.matrix, "custom prior")
    if matrix.shape[0] != dim:
        raise InvalidSpec(f"custom prior has dim {matrix.shape[0]}, expected {dim}")
    return matrix


@dataclass(frozen=True)
class ProblemConfig:
    """Scalar parameters of one regression problem.

    ``signal`` is the prior magnitude r^2, ``noise_var`` the noise variance
    sigma^2; their ratio is the signal-to-noise ratio.
    """

    n: int
    d: int
    signal: float
    noise_var: float
    seed: int = 0

    def __post_init__(self):
        if not (self.d >= self.n >= 1):
            raise InvalidSpec(f"need d >= n >= 1, got n={self.n}, d={self.d}")
        if self.signal < 0 or self.noise_var < 0:
            raise InvalidSpec("signal and noise_var must be nonnegative")

    @property
    def snr(self) -> float:
        """Signal-to-noise ratio; +inf in the noiseless limit with signal."""
        if self.signal == 0:
            return 0.0
        if self.noise_var == 0:
            return math.inf
        return self.signal / self.noise_var


@dataclass
class ProblemInstance:
    """One realized draw of the regression model, with its generating matrices."""

    X: np.ndarray
    w_star: np.ndarray
    xi: np.ndarray
    y: np.ndarray
    sigma: np.ndarray
    phi: np.ndarray
    config: ProblemConfig


def _scale_rows(gauss: np.ndarray, cov: np.ndarray) -> np.ndarray:
    # gauss @ cov^{1/2}, with a cheap path for diagonal covariances
    if numerics.is_diagonal(cov):
        return gauss * np.sqrt(np.diagonal(cov))
    return gauss @ numerics.sqrt_spd(cov)


def _check_full_row_rank(X: np.ndarray) -> None:
    gram = X @ X.T
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("sampled data matrix is numerically rank deficient") from exc
    diag = np.diagonal(chol)
    if diag.min() <= math.sqrt(X.shape[0] * numerics.EPS) * diag.max():
        raise RankDeficient("sampled data matrix is numerically rank deficient")


def sample_instance(
    config: ProblemConfig,
    sigma: np.ndarray,
    phi: np.ndarray,
    rng: Optional[np.random.Generator] = None,
) -> ProblemInstance:
    """Draw one problem instance; bitwise reproducible given (seed, specs).

    Draw order is fixed: the standard-normal block for ``X``, then the prior
    direction, then the noise.  ``y`` is assembled exactly as
    ``X @ w_star + xi``.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n, d = config.n, config.d
    if sigma.shape[0] != d or phi.shape[0] != d:
        raise InvalidSpec("covariance/prior dimension does not match config.d")
    X = _scale_rows(rng.standard_normal((n, d)), sigma)
    w_dir = rng.standard_normal(d)
    if config.signal == 0:
        w_star = np.zeros(d)
    else:
        w_star = math.sqrt(config.signal / d) * _scale_rows(w_dir[None, :], phi)[0]
    if config.noise_var == 0:
        xi = np.zeros(n)
    else:
        xi = math.sqrt(config.noise_var) * rng.standard_normal(n)
    _check_full_row_rank(X)
    y = X @ w_star + xi
    return ProblemInstance(X=X, w_star=w_star, xi=xi, y=y, sigma=sigma, phi=phi, config=config)


def sample_sphere(count: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Rows uniform on the sphere of radius ``sqrt(dim)`` in R^dim."""
    if dim < 1:
        raise InvalidSpec(f"dimension must be >= 1, got {dim}")
    out = rng.standard_normal((count, dim))
    norms = np.linalg.norm(out, axis=1)
    # A zero draw has probability zero but would break normalization.
    while np.any(norms == 0.0):
        bad = norms == 0.0
        out[bad] = rng.standard_normal((int(bad.sum()), dim))
        norms = np.linalg.norm(out, axis=1)
    return out * (math.sqrt(dim) / norms)[:, None]
