"""Shared test utilities: independent oracles kept free of the code paths they check."""

import numpy as np


def random_spd(rng, d, scale=1.0):
    a = rng.standard_normal((d, d))
    return scale * (a @ a.T + d * np.eye(d))


def minimize_quadratic(fobj, k):
    """Globally minimize a quadratic function of a k-vector by exact assembly.

    Evaluates the function on coordinate probes to recover the gradient and
    Hessian (exact for quadratics), then solves the stationarity system by
    least squares so flat directions are handled.  Returns the minimizer.
    """
    e = np.eye(k)
    f0 = fobj(np.zeros(k))
    g = np.zeros(k)
    H = np.zeros((k, k))
    for i in range(k):
        fp, fm = fobj(e[i]), fobj(-e[i])
        g[i] = 0.5 * (fp - fm)
        H[i, i] = fp + fm - 2.0 * f0
    for i in range(k):
        for j in range(i + 1, k):
            fij = fobj(e[i] + e[j])
            H[i, j] = H[j, i] = fij - f0 - g[i] - g[j] - 0.5 * H[i, i] - 0.5 * H[j, j]
    sol, *_ = np.linalg.lstsq(H, -g, rcond=None)
    return sol


def dense_bias_variance(Q, X, sigma, phi, signal, noise_var):
    """Direct dense evaluation of the bias/variance trace formulas."""
    d = X.shape[1]
    A = Q @ X - np.eye(d)
    B = (signal / d) * np.trace(sigma @ A @ phi @ A.T)
    V = noise_var * np.trace(sigma @ Q @ Q.T)
    return B, V


def interpolating_maps(rng, X, count):
    """Random response-linear maps Q' with X Q' = I (all interpolate every y)."""
    n, d = X.shape
    base = np.linalg.pinv(X)
    proj = np.eye(d) - base @ X
    for _ in range(count):
        yield base + proj @ rng.standard_normal((d, n))


def appendix_objective(X, sigma, phi, signal, noise_var):
    """The convex objective over the interpolating-map parametrization.

    Returns (fobj over vec(S), map from vec(S) to Q) with
    Q = X^+ + (I - X^+ X) S.
    """
    n, d = X.shape
    base = np.linalg.pinv(X)
    proj = np.eye(d) - base @ X

    def to_Q(vec):
        return base + proj @ vec.reshape(d, n)

    def fobj(vec):
        Q = to_Q(vec)
        B, V = dense_bias_variance(Q, X, sigma, phi, signal, noise_var)
        return B + V

    return fobj, to_Q


def orthonormal_centered_columns(rng, n, d):
    """An n x d matrix with exactly orthonormal, mean-zero columns (needs n > d)."""
    raw = rng.standard_normal((n, d))
    raw -= raw.mean(axis=0)
    q, _ = np.linalg.qr(raw)
    q -= q.mean(axis=0)
    q, _ = np.linalg.qr(q)
    return q[:, :d]
