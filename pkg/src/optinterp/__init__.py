"""Optimal response-linear interpolation for overparametrized regression.

Library layout:

- ``numerics``: pseudoinverse, SPD square roots, whitening, tolerance policy.
- ``model``: covariance/prior regimes, seeded instance sampling.
- ``interpolators``: closed-form interpolating estimators.
- ``optim``: preconditioned gradient descent and its implicit bias.
- ``covest``: Graphical Lasso / shrinkage estimates and the empirical pipeline.
- ``risk``: exact and Monte Carlo risk evaluation.
- ``rmt``: asymptotic predictions for the two-level covariance model.
- ``rf``: the random-features extension.
- ``experiments``: seeded sweep runner with CSV/plot-data output.
- ``invariants``: the runnable cross-module invariant suite.
"""

from . import covest, errors, experiments, interpolators, invariants, model, numerics, optim, rf, risk, rmt
from .errors import (
    InsufficientData,
    InvalidParams,
    InvalidSpec,
    NotConverged,
    NotPositiveDefinite,
    RankDeficient,
    SingularSample,
)
from .model import CovarianceSpec, PriorSpec, ProblemConfig, ProblemInstance

__version__ = "0.1.0"

__all__ = [
    "covest",
    "errors",
    "experiments",
    "interpolators",
    "invariants",
    "model",
    "numerics",
    "optim",
    "rf",
    "risk",
    "rmt",
    "CovarianceSpec",
    "PriorSpec",
    "ProblemConfig",
    "ProblemInstance",
    "InsufficientData",
    "InvalidParams",
    "InvalidSpec",
    "NotConverged",
    "NotPositiveDefinite",
    "RankDeficient",
    "SingularSample",
    "__version__",
]
