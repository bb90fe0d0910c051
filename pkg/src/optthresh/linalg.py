"""Dense real linear algebra shared by every recovery algorithm.

Matrices and vectors are plain float64 numpy arrays; the ``as_*`` helpers
validate them once at the public boundary.  Support sets are sorted int64
index arrays (0-based).
"""
import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from ._kernels import power_iteration_gram

__all__ = [
    "DimensionError",
    "as_matrix",
    "as_vector",
    "as_support",
    "mat_vec",
    "transpose_mat_vec",
    "ls_solve_on_support",
    "spectral_norm_sq",
]


class DimensionError(ValueError):
    """Raised when operand shapes are inconsistent."""


def as_matrix(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionError(f"expected a non-empty 2-d matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix contains non-finite entries")
    return A


def as_vector(x, length=None):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"expected a 1-d vector, got shape {x.shape}")
    if length is not None and x.shape[0] != length:
        raise DimensionError(f"expected length {length}, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("vector contains non-finite entries")
    return x


def as_support(S, n):
    """Normalize an index collection to a sorted, duplicate-free int64 array."""
    idx = np.asarray(sorted(int(i) for i in S), dtype=np.int64)
    if idx.size and (idx[0] < 0 or idx[-1] >= n):
        raise IndexError(f"support index out of range for n={n}")
    if np.any(np.diff(idx) == 0):
        raise ValueError("support contains duplicate indices")
    return idx


def mat_vec(A, x):
    if x.shape[0] != A.shape[1]:
        raise DimensionError(f"A is {A.shape} but x has length {x.shape[0]}")
    return A @ x


def transpose_mat_vec(A, r):
    if r.shape[0] != A.shape[0]:
        raise DimensionError(f"A is {A.shape} but r has length {r.shape[0]}")
    return A.T @ r


def ls_solve_on_support(A, y, S):
    """Least-squares fit of ``y`` using only the columns of ``A`` in ``S``.

    Solves the normal equations ``A_S^T A_S z = A_S^T y`` by Cholesky.  When
    the Gram matrix is not numerically positive definite a ridge of
    ``1e-12 * trace / |S|`` is added, followed by at most two steps of
    iterative refinement when the ridge bias is still visible.

    Returns the full-length vector, zero outside ``S``.
    """
    if y.shape[0] != A.shape[0]:
        raise DimensionError(f"A is {A.shape} but y has length {y.shape[0]}")
    n = A.shape[1]
    x = np.zeros(n)
    S = np.asarray(S, dtype=np.int64)
    if S.size == 0:
        return x
    As = A[:, S]
    G = As.T @ As
    rhs = As.T @ y
    try:
        factor = cho_factor(G, lower=True, check_finite=False)
        diag = np.abs(np.diag(factor[0]))
        # Cholesky can "succeed" on a singular Gram with garbage pivots.
        if diag.min() <= 1e-7 * diag.max():
            raise LinAlgError("ill-conditioned Gram matrix")
        z = cho_solve(factor, rhs, check_finite=False)
    except (LinAlgError, ValueError):
        ridge = 1e-12 * np.trace(G) / S.size
        if ridge == 0.0:
            return x
        factor = cho_factor(G + ridge * np.eye(S.size), lower=True, check_finite=False)
        z = cho_solve(factor, rhs, check_finite=False)
        # Refine only if the ridge bias is visible in the normal equations;
        # on an exactly singular Gram refinement would drift along the null space.
        scale = 1e-10 * (1.0 + np.abs(rhs).max())
        for _ in range(2):
            r = rhs - G @ z
            if np.abs(r).max() <= scale:
                break
            z = z + cho_solve(factor, r, check_finite=False)
    x[S] = z
    return x


def spectral_norm_sq(A, tol=1e-8, max_iter=1000):
    """Power-iteration estimate of ``lambda_max(A^T A)``, padded by ``1 + tol``.

    Starts from the normalized all-ones vector and stops once the Rayleigh
    quotient changes by at most ``tol`` relatively.  A zero matrix gives 0.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = np.asarray(A, dtype=np.float64)
    if A.shape[0] >= A.shape[1]:
        G = A.T @ A
    else:
        # Same nonzero spectrum, smaller iteration.
        G = A @ A.T
    return power_iteration_gram(np.ascontiguousarray(G), tol, max_iter) * (1.0 + tol)
