"""Exception types shared across the package."""


class NotPositiveDefinite(ValueError):
    """A matrix required to be symmetric positive definite is not."""


class RankDeficient(ValueError):
    """A data matrix does not have the full row rank the operation needs."""


class InvalidSpec(ValueError):
    """A covariance/prior/experiment specification has invalid parameters."""


class InvalidParams(ValueError):
    """Asymptotic-formula parameters lie outside the valid regime."""


class SingularSample(ValueError):
    """The sample covariance is singular and no regularization was requested."""


class InsufficientData(ValueError):
    """A data split leaves too few rows to fit on."""


class NotConverged(RuntimeError):
    """An iterative solver hit its iteration cap before reaching tolerance.

    Carries the partial result and, for gradient descent, the run trace.
    """

    def __init__(self, message, partial=None, trace=None):
        super().__init__(message)
        self.partial = partial
        self.trace = trace
