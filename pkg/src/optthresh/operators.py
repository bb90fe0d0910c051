"""Thresholding operators and the capped-simplex compression problem.

Three ways to keep ``k`` entries of a vector ``u``:

* ``hard_threshold`` keeps the ``k`` largest magnitudes.
* ``optimal_k_threshold_exhaustive`` keeps the ``k`` entries that best fit
  the measurements, ``min ||y - A(u * w)||`` over binary ``w`` with ``sum w = k``,
  by enumeration (desk-scale only).
* ``compression_qp_solve`` solves the convex relaxation of that binary
  problem over the capped simplex ``P = {w : sum w = k, 0 <= w <= 1}``.
"""
from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from ._kernels import apg_capped_simplex_qp, project_capped_simplex
from .linalg import DimensionError, spectral_norm_sq

__all__ = [
    "BudgetExceededError",
    "BinarySelection",
    "QpConfig",
    "QpResult",
    "EXHAUSTIVE_BUDGET",
    "hard_threshold",
    "optimal_k_threshold_exhaustive",
    "capped_simplex_project",
    "compression_qp_solve",
    "compression_objective",
    "residual_norm",
]

EXHAUSTIVE_BUDGET = 10**6
_CHUNK = 20000


class BudgetExceededError(RuntimeError):
    """An exhaustive enumeration would exceed its configured budget."""


@dataclass(frozen=True)
class BinarySelection:
    """A 0/1 mask of length ``n`` with exactly ``k`` ones."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if not np.all((m == 0) | (m == 1)):
            raise ValueError("mask entries must be 0 or 1")

    @property
    def n(self):
        return self.mask.shape[0]

    @property
    def k(self):
        return int(self.mask.sum())

    @property
    def support(self):
        return np.flatnonzero(self.mask).astype(np.int64)


@dataclass(frozen=True)
class QpConfig:
    tol: float = 1e-8
    max_iter: int = 10000
    restart: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("QpConfig.tol must be positive")
        if self.max_iter < 1:
            raise ValueError("QpConfig.max_iter must be >= 1")


@dataclass(frozen=True)
class QpResult:
    """Weights in the capped simplex plus solver diagnostics."""

    weights: np.ndarray
    converged: bool
    iterations: int
    stationarity: float
    objective: float
    lipschitz: float


def _check_k(k, n):
    if not 0 <= k <= n:
        raise ValueError(f"k={k} out of range for length {n}")


def hard_threshold(v, k):
    """Keep the ``k`` largest-magnitude entries of ``v``.

    Ties are broken toward the smallest index, so the result is reproducible.
    Returns ``(thresholded, S)`` where ``S`` is the sorted index set of the
    ``k`` kept positions (entries of ``v`` that are zero may be among them).
    """
    v = np.asarray(v, dtype=np.float64)
    _check_k(k, v.shape[0])
    order = np.argsort(-np.abs(v), kind="stable")
    S = np.sort(order[:k]).astype(np.int64)
    out = np.zeros_like(v)
    out[S] = v[S]
    return out, S


def _supports_array(n, k):
    return np.fromiter(
        (i for c in combinations(range(n), k) for i in c),
        dtype=np.int64,
        count=comb(n, k) * k,
    ).reshape(-1, k)


def optimal_k_threshold_exhaustive(A, y, u, k, budget=EXHAUSTIVE_BUDGET):
    """Best binary selection of ``k`` entries of ``u`` by full enumeration.

    Minimizes ``||y - A(u * w)||^2`` over ``w in {0,1}^n`` with ``sum w = k``.
    Supports are visited in lexicographic order and the first minimum is
    kept, so ties resolve to the lexicographically smallest support.

    Returns ``(BinarySelection, squared objective)``.
    """
    m, n = A.shape
    if y.shape[0] != m or u.shape[0] != n:
        raise DimensionError("inconsistent dimensions for optimal k-thresholding")
    _check_k(k, n)
    total = comb(n, k)
    if total > budget:
        raise BudgetExceededError(
            f"C({n},{k}) = {total} supports is too large for exhaustive oracle "
            f"(budget {budget})"
        )
    mask = np.zeros(n)
    if k == 0:
        return BinarySelection(mask), float(y @ y)

    cols = A * u  # column j scaled by u_j
    supports = _supports_array(n, k)
    best_val = np.inf
    best_idx = 0
    for start in range(0, total, _CHUNK):
        block = supports[start:start + _CHUNK]
        fitted = cols[:, block].sum(axis=2)  # (m, chunk, k) -> (m, chunk)
        resid = y[:, None] - fitted
        vals = np.einsum("ij,ij->j", resid, resid)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val = float(vals[j])
            best_idx = start + j
    mask[supports[best_idx]] = 1.0
    return BinarySelection(mask), best_val


def capped_simplex_project(v, k):
    """Euclidean projection of ``v`` onto ``{w : sum w = k, 0 <= w <= 1}``."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    _check_k(k, v.shape[0])
    out = np.empty_like(v)
    project_capped_simplex(v, float(k), out)
    return out


def compression_objective(A, y, u, w):
    r = y - A @ (u * w)
    return float(r @ r)


def compression_qp_solve(A, y, u, k, cfg=None):
    """Solve the data-compression QP ``min ||y - A(u * w)||^2`` over the capped simplex.

    Accelerated projected gradient from the cold start ``(k/n) e`` with step
    ``1/L``, ``L = 2 * spectral_norm_sq(A diag(u))``.  Stops when the
    projected-gradient residual ``||w - P(w - grad/L)||`` drops to
    ``cfg.tol``; otherwise returns the best iterate with ``converged=False``.
    """
    cfg = cfg or QpConfig()
    m, n = A.shape
    if y.shape[0] != m or u.shape[0] != n:
        raise DimensionError("inconsistent dimensions for compression QP")
    if not 1 <= k <= n:
        raise ValueError(f"compression QP needs 1 <= k <= n, got k={k}, n={n}")
    B = A * u
    H = np.ascontiguousarray(B.T @ B)
    b = B.T @ y
    c0 = float(y @ y)
    L = 2.0 * spectral_norm_sq(B, tol=1e-6)
    if k == n:
        w = np.ones(n)
        return QpResult(w, True, 0, 0.0, compression_objective(A, y, u, w), L)
    w, converged, its, stat, obj = apg_capped_simplex_qp(
        H, b, c0, float(k), L, cfg.tol, cfg.max_iter, cfg.restart
    )
    return QpResult(w, bool(converged), int(its), float(stat), float(obj), L)


def residual_norm(A, y, x):
    if x.shape[0] != A.shape[1] or y.shape[0] != A.shape[0]:
        raise DimensionError(f"A is {A.shape}, x has {x.shape[0]}, y has {y.shape[0]}")
    return float(np.linalg.norm(y - A @ x))
