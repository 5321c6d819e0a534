"""Dense linear-algebra primitives with explicit tolerance policies.

All routines operate on plain ``numpy.ndarray`` values and reject NaN/Inf
inputs.  Symmetric-positive-definite (SPD) arguments are accepted when they
are symmetric to ``SYM_RTOL`` relative and every eigenvalue exceeds
``dim * eps * lambda_max``.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NotPositiveDefinite, RankDeficient

EPS = float(np.finfo(np.float64).eps)

# Relative symmetry tolerance for SPD inputs.
SYM_RTOL = 1e-12


def ensure_finite(arr: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Return ``arr`` as a float array, rejecting NaN/Inf entries."""
    out = np.asarray(arr, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out


def is_diagonal(mat: np.ndarray) -> bool:
    """True when every off-diagonal entry of a square matrix is exactly zero."""
    d = mat.shape[0]
    if mat.ndim != 2 or mat.shape[1] != d:
        return False
    if d < 2:
        return True
    # Reshaping the first d*d-1 entries to (d-1, d+1) puts the diagonal in
    # column 0, so columns 1: are exactly the off-diagonal entries (no copy).
    off = np.ascontiguousarray(mat).reshape(-1)[:-1].reshape(d - 1, d + 1)[:, 1:]
    return not np.any(off)


def check_spd(mat: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Validate an SPD matrix and return a symmetrized copy.

    Raises
    ------
    NotPositiveDefinite
        If the smallest eigenvalue is at or below ``dim * eps * lambda_max``.
    ValueError
        If the matrix is not square, not finite, or not symmetric to
        ``SYM_RTOL`` relative.
    """
    mat = ensure_finite(mat, name)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square, got shape {mat.shape}")
    scale = np.abs(mat).max()
    if scale > 0 and np.abs(mat - mat.T).max() > SYM_RTOL * scale:
        raise ValueError(f"{name} is not symmetric to {SYM_RTOL} relative")
    sym = 0.5 * (mat + mat.T)
    eigvals = np.linalg.eigvalsh(sym)
    _check_eigvals(eigvals, sym.shape[0], name)
    return sym


def _check_eigvals(eigvals: np.ndarray, dim: int, name: str) -> None:
    lam_max = eigvals[-1]
    if lam_max <= 0 or eigvals[0] <= dim * EPS * lam_max:
        raise NotPositiveDefinite(
            f"{name} has eigenvalue {eigvals[0]:.3e} at or below the "
            f"acceptance threshold {dim * EPS * lam_max:.3e}"
        )


def pinv(mat: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudoinverse via SVD.

    Singular values at or below ``max(rows, cols) * eps * sigma_max`` are
    treated as zero.  The zero matrix maps to the zero matrix.
    """
    mat = ensure_finite(mat)
    rcond = max(mat.shape) * EPS
    return np.linalg.pinv(mat, rcond=rcond)


def _spd_eigh(mat: np.ndarray, name: str) -> tuple[np.ndarray, np.ndarray]:
    mat = ensure_finite(mat, name)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square, got shape {mat.shape}")
    scale = np.abs(mat).max()
    if scale > 0 and np.abs(mat - mat.T).max() > SYM_RTOL * scale:
        raise ValueError(f"{name} is not symmetric to {SYM_RTOL} relative")
    eigvals, eigvecs = np.linalg.eigh(0.5 * (mat + mat.T))
    _check_eigvals(eigvals, mat.shape[0], name)
    return eigvals, eigvecs


def inv_sqrt(mat: np.ndarray) -> np.ndarray:
    """Inverse symmetric square root ``mat^{-1/2}`` via eigendecomposition."""
    if mat.ndim == 2 and is_diagonal(mat):
        diag = np.diagonal(ensure_finite(mat)).copy()
        _check_eigvals(np.sort(diag), mat.shape[0], "matrix")
        return np.diag(1.0 / np.sqrt(diag))
    eigvals, eigvecs = _spd_eigh(mat, "matrix")
    out = (eigvecs / np.sqrt(eigvals)) @ eigvecs.T
    return 0.5 * (out + out.T)


def sqrt_spd(mat: np.ndarray) -> np.ndarray:
    """Symmetric square root ``mat^{1/2}`` via eigendecomposition.

    Companion of :func:`inv_sqrt`; used for sampling from ``N(0, mat)``.
    """
    if mat.ndim == 2 and is_diagonal(mat):
        diag = np.diagonal(ensure_finite(mat)).copy()
        _check_eigvals(np.sort(diag), mat.shape[0], "matrix")
        return np.diag(np.sqrt(diag))
    eigvals, eigvecs = _spd_eigh(mat, "matrix")
    out = (eigvecs * np.sqrt(eigvals)) @ eigvecs.T
    return 0.5 * (out + out.T)


def whiten(mat: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Right-multiply by ``cov^{-1/2}`` so rows drawn from ``N(0, cov)`` become isotropic."""
    mat = ensure_finite(mat)
    if mat.shape[1] != cov.shape[0]:
        raise ValueError(
            f"column count {mat.shape[1]} does not match covariance dim {cov.shape[0]}"
        )
    return mat @ inv_sqrt(cov)


def solve_spd(mat: np.ndarray, rhs: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Solve ``mat @ x = rhs`` for SPD ``mat`` via Cholesky."""
    try:
        factor = cho_factor(mat, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"{name} is not positive definite") from exc
    return cho_solve(factor, rhs, check_finite=False)


def solve_gram(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve against an ``X X^T``-style Gram matrix; failure means rank deficiency."""
    try:
        factor = cho_factor(gram, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("Gram matrix is singular: data matrix is rank deficient") from exc
    return cho_solve(factor, rhs, check_finite=False)


def inv_gram(gram: np.ndarray) -> np.ndarray:
    """Explicit inverse of an ``X X^T``-style Gram matrix via Cholesky.

    Uses the triangular-inverse LAPACK path, which is substantially cheaper
    than solving against an identity right-hand side.
    """
    from scipy.linalg.lapack import dpotrf, dpotri

    chol, info = dpotrf(gram, lower=1)
    if info != 0:
        raise RankDeficient("Gram matrix is singular: data matrix is rank deficient")
    inv, info = dpotri(chol, lower=1, overwrite_c=1)
    if info != 0:
        raise RankDeficient("Gram matrix inverse failed")
    lower = np.tril(inv)
    return lower + np.tril(inv, -1).T
