"""Matrix and vector norms used throughout the analysis."""

import numpy as np

from .exceptions import NonConvergence

POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000


def inf_norm(matrix) -> float:
    """Maximum absolute row sum."""
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    return float(np.abs(m).sum(axis=1).max())


def frobenius_norm(matrix) -> float:
    m = np.asarray(matrix, dtype=float)
    return float(np.sqrt(np.sum(m * m)))


def _power_iteration(gram, rng, tol, max_iter):
    x = rng.standard_normal(gram.shape[0])
    x /= np.linalg.norm(x)
    lam = float(x @ gram @ x)
    for _ in range(max_iter):
        y = gram @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        lam_new = float(x @ gram @ x)
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new
        lam = lam_new
    raise NonConvergence(f"power iteration did not converge in {max_iter} iterations")


def spectral_norm(matrix, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER) -> float:
    """Largest singular value, by power iteration on the Gram matrix.

    The iteration stops when the Rayleigh quotient changes by at most ``tol``
    relative to its value. On failure the iteration is retried once from a
    fresh random start vector before :class:`NonConvergence` propagates.
    """
    m = np.atleast_2d(np.asarray(matrix, dtype=float))
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    if not m.any():
        return 0.0
    gram = m.T @ m
    try:
        lam = _power_iteration(gram, np.random.default_rng(0), tol, max_iter)
    except NonConvergence:
        lam = _power_iteration(gram, np.random.default_rng(1), tol, max_iter)
    return float(np.sqrt(max(lam, 0.0)))


def weighted_sq_norm(x, m) -> float:
    """``x^T M x`` for symmetric positive semidefinite ``M``."""
    x = np.asarray(x, dtype=float)
    return float(x @ np.asarray(m, dtype=float) @ x)
