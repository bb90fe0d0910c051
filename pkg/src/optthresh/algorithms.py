"""Sparse recovery algorithms behind one interface.

Every solver takes ``(A, y, cfg, x0)`` and returns a ``RecoveryResult`` with
the residual trajectory and the support chosen at every iteration.  The
optimal-thresholding family (OT, OTP, ROT_OMEGA, ROTP_OMEGA) lives next to
the classical baselines (IHT, HTP, OMP, CoSaMP, SP) so that benchmark runs
can treat them uniformly.
"""
from dataclasses import dataclass, field
from math import sqrt
from typing import Optional

import numpy as np

from .linalg import as_matrix, as_vector, ls_solve_on_support, DimensionError
from .operators import (
    QpConfig,
    hard_threshold,
    optimal_k_threshold_exhaustive,
    compression_qp_solve,
    residual_norm,
)

__all__ = [
    "ALGORITHMS",
    "DEFAULT_MAX_ITER",
    "AlgorithmConfig",
    "RecoveryResult",
    "gradient_point",
    "recover",
    "recover_iht",
    "recover_htp",
    "recover_omp",
    "recover_cosamp",
    "recover_sp",
    "recover_ot",
    "recover_otp",
    "recover_rot_omega",
    "recover_rotp_omega",
    "ContractionParams",
    "BoundCheck",
    "check_contraction_bound",
    "OT_DELTA_GATE",
]

ALGORITHMS = ("IHT", "HTP", "OMP", "CoSaMP", "SP", "OT", "OTP", "ROT_OMEGA", "ROTP_OMEGA")

# Iteration budgets of the reference benchmark: 200 for the baselines, 40
# for the optimal-thresholding family.  OMP always runs exactly k stages.
DEFAULT_MAX_ITER = {
    "IHT": 200,
    "HTP": 200,
    "OMP": None,
    "CoSaMP": 200,
    "SP": 200,
    "OT": 40,
    "OTP": 40,
    "ROT_OMEGA": 40,
    "ROTP_OMEGA": 40,
}

_ALIASES = {a.lower(): a for a in ALGORITHMS}
_ALIASES.update({"rot": "ROT_OMEGA", "rotp": "ROTP_OMEGA"})


def canonical_name(name):
    """Map a case-insensitive name or alias (``rotp``, ``cosamp``) to its canonical form."""
    try:
        return _ALIASES[str(name).lower()]
    except KeyError:
        raise ValueError(
            f"unknown algorithm {name!r}; expected one of {', '.join(ALGORITHMS)}"
        ) from None


@dataclass(frozen=True)
class AlgorithmConfig:
    """Which algorithm to run and with what budget.

    ``stepsize`` is the gradient step of IHT/HTP; ``omega`` is the number
    of compressions per iteration of the ROT/ROTP family.  ``max_iter=None``
    picks the per-algorithm default.
    """

    name: str
    k: int
    max_iter: Optional[int] = None
    stepsize: float = 1.0
    omega: int = 1
    qp: QpConfig = field(default_factory=QpConfig)
    early_stop_rel_residual: float = 1e-6
    stop_on_fixed_point: bool = True

    def __post_init__(self):
        object.__setattr__(self, "name", canonical_name(self.name))
        if self.max_iter is None:
            object.__setattr__(self, "max_iter", DEFAULT_MAX_ITER[self.name] or 1)
        if int(self.k) != self.k or self.k < 0:
            raise ValueError(f"k must be a non-negative integer, got {self.k}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.stepsize > 0:
            raise ValueError("stepsize must be positive")
        if self.omega < 1:
            raise ValueError("omega must be >= 1")
        if self.early_stop_rel_residual < 0:
            raise ValueError("early_stop_rel_residual must be >= 0")

    @property
    def label(self):
        """Short display name, e.g. ``ROTP3`` for ROTP_OMEGA with omega=3."""
        if self.name in ("ROT_OMEGA", "ROTP_OMEGA"):
            return f"{self.name.split('_')[0]}{self.omega}"
        return self.name


@dataclass
class RecoveryResult:
    """Outcome of one recovery run.

    ``residual_history[p]`` is ``||y - A x^p||`` for ``p = 0..iterations_run``
    and ``support_history[p]`` is the index set selected for ``x^p``
    (``supp(x^0)`` for the starting point).  ``iterates`` is filled only
    when requested.
    """

    x_final: np.ndarray
    iterations_run: int
    residual_history: list
    support_history: list
    converged: bool
    qp_nonconverged_count: int = 0
    stop_reason: str = "max_iter"
    iterates: Optional[list] = None


def gradient_point(A, y, x):
    """``u = x + A^T (y - A x)``, the unit-step gradient point."""
    if x.shape[0] != A.shape[1] or y.shape[0] != A.shape[0]:
        raise DimensionError(f"A is {A.shape}, x has {x.shape[0]}, y has {y.shape[0]}")
    return x + A.T @ (y - A @ x)


def _run(A, y, cfg, x0, step, record_iterates):
    """Shared outer loop: stopping rules and telemetry.

    ``step(x)`` returns ``(x_next, S, qp_failures)``.  Every map here is
    memoryless, so once ``x_next == x`` bitwise all later iterates repeat
    and stopping there does not change ``x_final``.
    """
    x = np.array(x0, dtype=np.float64)
    tol = cfg.early_stop_rel_residual * np.linalg.norm(y)
    r = residual_norm(A, y, x)
    res = [r]
    supports = [np.flatnonzero(x).astype(np.int64)]
    iterates = [x.copy()] if record_iterates else None
    qp_fail = 0
    if r <= tol:
        return RecoveryResult(x, 0, res, supports, True, 0, "residual", iterates)
    reason = "max_iter"
    p = 0
    for p in range(1, cfg.max_iter + 1):
        x_next, S, fails = step(x)
        qp_fail += fails
        r = residual_norm(A, y, x_next)
        res.append(r)
        supports.append(S)
        if record_iterates:
            iterates.append(x_next.copy())
        fixed = cfg.stop_on_fixed_point and np.array_equal(x_next, x)
        x = x_next
        if r <= tol:
            reason = "residual"
            break
        if fixed:
            reason = "fixed_point"
            break
    converged = reason != "max_iter"
    return RecoveryResult(x, p, res, supports, converged, qp_fail, reason, iterates)


def _prepare(A, y, cfg, x0, expected):
    A = as_matrix(A)
    y = as_vector(y, A.shape[0])
    n = A.shape[1]
    if cfg.name not in expected:
        raise ValueError(f"config for {cfg.name} passed to the {expected[0]} solver")
    if cfg.k > n:
        raise ValueError(f"k={cfg.k} exceeds n={n}")
    x0 = np.zeros(n) if x0 is None else as_vector(x0, n)
    return A, y, x0


def recover_iht(A, y, cfg, x0=None, record_iterates=False):
    """Iterative hard thresholding, ``x <- H_k(x + lam A^T (y - A x))``."""
    A, y, x0 = _prepare(A, y, cfg, x0, ("IHT",))
    lam, k = cfg.stepsize, cfg.k

    def step(x):
        x_next, S = hard_threshold(x + lam * (A.T @ (y - A @ x)), k)
        return x_next, S, 0

    return _run(A, y, cfg, x0, step, record_iterates)


def recover_htp(A, y, cfg, x0=None, record_iterates=False):
    """Hard thresholding pursuit: IHT support selection, then least squares on it."""
    A, y, x0 = _prepare(A, y, cfg, x0, ("HTP",))
    lam, k = cfg.stepsize, cfg.k

    def step(x):
        _, S = hard_threshold(x + lam * (A.T @ (y - A @ x)), k)
        return ls_solve_on_support(A, y, S), S, 0

    return _run(A, y, cfg, x0, step, record_iterates)


def recover_omp(A, y, cfg, x0=None, record_iterates=False):
    """Orthogonal matching pursuit, exactly k stages.

    Each stage adds the index outside the current support with the largest
    correlation ``|A^T r|`` (smallest index on ties) and refits by least
    squares.  ``x0`` is accepted for interface symmetry and ignored.
    """
    A, y, _ = _prepare(A, y, cfg, None, ("OMP",))
    n, k = A.shape[1], cfg.k
    x = np.zeros(n)
    res = [residual_norm(A, y, x)]
    supports = [np.zeros(0, dtype=np.int64)]
    iterates = [x.copy()] if record_iterates else None
    S = []
    in_S = np.zeros(n, dtype=bool)
    for _ in range(k):
        corr = np.abs(A.T @ (y - A @ x))
        corr[in_S] = -1.0
        j = int(np.argmax(corr))
        S.append(j)
        in_S[j] = True
        S_arr = np.array(sorted(S), dtype=np.int64)
        x = ls_solve_on_support(A, y, S_arr)
        res.append(residual_norm(A, y, x))
        supports.append(S_arr)
        if record_iterates:
            iterates.append(x.copy())
    return RecoveryResult(x, k, res, supports, True, 0, "stages", iterates)


def recover_cosamp(A, y, cfg, x0=None, record_iterates=False):
    """CoSaMP: merge supp(x) with the 2k largest correlations, fit, prune to k."""
    A, y, x0 = _prepare(A, y, cfg, x0, ("CoSaMP",))
    n, k = A.shape[1], cfg.k

    def step(x):
        _, Omega = hard_threshold(A.T @ (y - A @ x), min(2 * k, n))
        T = np.union1d(np.flatnonzero(x), Omega).astype(np.int64)
        b = ls_solve_on_support(A, y, T)
        x_next, S = hard_threshold(b, k)
        return x_next, S, 0

    return _run(A, y, cfg, x0, step, record_iterates)


def recover_sp(A, y, cfg, x0=None, record_iterates=False):
    """Subspace pursuit: merge supp(x) with the k largest correlations, fit, prune, refit."""
    A, y, x0 = _prepare(A, y, cfg, x0, ("SP",))
    k = cfg.k

    def step(x):
        _, Omega = hard_threshold(A.T @ (y - A @ x), k)
        T = np.union1d(np.flatnonzero(x), Omega).astype(np.int64)
        b = ls_solve_on_support(A, y, T)
        _, S = hard_threshold(b, k)
        return ls_solve_on_support(A, y, S), S, 0

    return _run(A, y, cfg, x0, step, record_iterates)


def _ot_step(A, y, k):
    def step(x):
        u = gradient_point(A, y, x)
        sel, _ = optimal_k_threshold_exhaustive(A, y, u, k)
        return u * sel.mask, sel.support, 0

    return step


def recover_ot(A, y, cfg, x0=None, record_iterates=False):
    """Optimal k-thresholding: ``x <- u * w*`` with ``w*`` the best binary k-selection of ``u``."""
    A, y, x0 = _prepare(A, y, cfg, x0, ("OT",))
    return _run(A, y, cfg, x0, _ot_step(A, y, cfg.k), record_iterates)


def recover_otp(A, y, cfg, x0=None, record_iterates=False):
    """Optimal k-thresholding pursuit: the OT selection followed by least squares."""
    A, y, x0 = _prepare(A, y, cfg, x0, ("OTP",))
    ot = _ot_step(A, y, cfg.k)

    def step(x):
        _, S, _ = ot(x)
        return ls_solve_on_support(A, y, S), S, 0

    return _run(A, y, cfg, x0, step, record_iterates)


def compress(A, y, u, k, omega, qp=None):
    """Apply ``omega`` successive relaxed compressions to ``u``.

    Returns ``(theta, residuals, failures)`` where ``residuals[j]`` is
    ``||y - A theta_j||`` after ``j`` compressions (``theta_0 = u``).
    """
    theta = u.copy()
    residuals = [residual_norm(A, y, theta)]
    failures = 0
    for _ in range(omega):
        if k == 0:
            theta = np.zeros_like(theta)
        else:
            sol = compression_qp_solve(A, y, theta, k, qp)
            failures += not sol.converged
            theta = theta * sol.weights
        residuals.append(residual_norm(A, y, theta))
    return theta, residuals, failures


def _rot_step(A, y, cfg):
    def step(x):
        u = gradient_point(A, y, x)
        theta, _, fails = compress(A, y, u, cfg.k, cfg.omega, cfg.qp)
        x_sharp, S = hard_threshold(theta, cfg.k)
        return x_sharp, S, fails

    return step


def recover_rot_omega(A, y, cfg, x0=None, record_iterates=False):
    """Relaxed optimal k-thresholding with ``omega`` compressions per iteration."""
    A, y, x0 = _prepare(A, y, cfg, x0, ("ROT_OMEGA",))
    return _run(A, y, cfg, x0, _rot_step(A, y, cfg), record_iterates)


def recover_rotp_omega(A, y, cfg, x0=None, record_iterates=False):
    """ROT-omega followed by least squares on the selected support."""
    A, y, x0 = _prepare(A, y, cfg, x0, ("ROTP_OMEGA",))
    rot = _rot_step(A, y, cfg)

    def step(x):
        _, S, fails = rot(x)
        return ls_solve_on_support(A, y, S), S, fails

    return _run(A, y, cfg, x0, step, record_iterates)


_DISPATCH = {
    "IHT": recover_iht,
    "HTP": recover_htp,
    "OMP": recover_omp,
    "CoSaMP": recover_cosamp,
    "SP": recover_sp,
    "OT": recover_ot,
    "OTP": recover_otp,
    "ROT_OMEGA": recover_rot_omega,
    "ROTP_OMEGA": recover_rotp_omega,
}


def recover(A, y, cfg, x0=None, record_iterates=False):
    """Run the algorithm named by ``cfg.name``."""
    return _DISPATCH[cfg.name](A, y, cfg, x0, record_iterates)


# Contraction bounds ---------------------------------------------------------

# psi(g) = 5g^3 + 5g^2 + 3g crosses 1 just below 0.2275, so 0.2275 itself is
# not a valid gate; 9/40 is.
OT_DELTA_GATE = 9 / 40


@dataclass(frozen=True)
class ContractionParams:
    """Inputs for the per-iteration error recursion.

    ``family`` is ``"OT"`` (covers OT and OTP), ``"ROT"`` or ``"ROTP"``.
    ``deltas`` maps an order ``q`` to the exact restricted isometry constant
    ``delta_q``.  ``At_nu`` and ``nu`` are ``||A^T nu'||`` and ``||nu'||`` for
    ``nu' = y - A x_S``.
    """

    family: str
    k: int
    deltas: dict
    omega: int = 1
    At_nu: float = 0.0
    nu: float = 0.0

    @classmethod
    def from_instance(cls, A, y, x_star, family, k, deltas, omega=1):
        x_S, _ = hard_threshold(np.asarray(x_star, dtype=np.float64), k)
        nu = y - A @ x_S
        return cls(family, k, dict(deltas), omega,
                   float(np.linalg.norm(A.T @ nu)), float(np.linalg.norm(nu)))


@dataclass(frozen=True)
class BoundCheck:
    """Result of ``check_contraction_bound``.

    ``status`` is ``"holds"``, ``"violated"`` or ``"inapplicable"`` (the
    RIP hypothesis of the bound is not met, so nothing is claimed).
    """

    status: str
    rho: float
    c1: float
    c2: float
    margins: tuple = ()
    reason: str = ""

    @property
    def holds(self):
        return self.status == "holds"


def _need(deltas, *qs):
    missing = [q for q in qs if q not in deltas]
    if missing:
        raise KeyError(f"missing delta_q for q in {missing}")
    return [float(deltas[q]) for q in qs]


def contraction_constants(params):
    """``(applicable, rho, c1, c2, reason)`` for the requested bound."""
    from .instances import rip_threshold_rot, rip_threshold_rotp

    k, fam = params.k, params.family.upper()
    if fam == "OT":
        if k % 2 == 0:
            (dk,) = _need(params.deltas, k)
            gate, name = dk, f"delta_{k}"
            denom = 1 - 3 * dk
            if denom <= 0 or gate > OT_DELTA_GATE:
                return False, np.inf, np.inf, np.inf, f"{name}={gate:.6g} > 9/40"
            rho = dk * sqrt(5 * (1 + dk) / denom)
        else:
            dk, dk1 = _need(params.deltas, k, k + 1)
            gate, name = dk1, f"delta_{k + 1}"
            denom = 1 - dk1 - 2 * dk
            if denom <= 0 or gate > OT_DELTA_GATE:
                return False, np.inf, np.inf, np.inf, f"{name}={gate:.6g} > 9/40"
            rho = dk1 * sqrt(5 * (1 + dk) / denom)
        return True, rho, sqrt((1 + dk) / denom), 2 / sqrt(denom), ""

    if fam not in ("ROT", "ROTP"):
        raise ValueError(f"unknown bound family {params.family!r}")
    w = params.omega
    dk, d2k, d3k = _need(params.deltas, k, 2 * k, 3 * k)
    root = rip_threshold_rot(w) if fam == "ROT" else rip_threshold_rotp(w)
    if not d3k < root:
        label = "gamma" if fam == "ROT" else "gamma*"
        return False, np.inf, np.inf, np.inf, f"delta_{3 * k}={d3k:.6g} >= {label}({w})={root:.6g}"
    s = sqrt((1 + dk) / (1 - d2k))
    rho = (d2k + 2 * w * d3k) * s + d3k
    den = 2 * w * d3k + d2k
    alpha = 2 * d3k / den if den > 0 else 0.0
    c1 = (2 * w - 1) / (1 - alpha) * s + 1
    c2 = 2 / ((1 - alpha) * sqrt(1 - d2k))
    if fam == "ROTP":
        f = 1 / sqrt(1 - d2k ** 2)
        rho, c1, c2 = f * rho, f * c1, f * (c2 + 1 / (1 - d2k))
    return True, rho, c1, c2, ""


def check_contraction_bound(trace, x_star, params, atol=1e-10):
    """Check ``||x^{p+1} - x_S|| <= rho ||x^p - x_S|| + c1 ||A^T nu'|| + c2 ||nu'||`` along a run.

    ``trace`` must carry its iterates (``record_iterates=True``).  The slack
    ``atol * (1 + ||x_S||)`` absorbs rounding.  When the RIP hypothesis
    fails (or rho >= 1) the result is ``inapplicable``, not ``violated``.
    """
    if trace.iterates is None:
        raise ValueError("trace has no iterates; rerun with record_iterates=True")
    ok, rho, c1, c2, reason = contraction_constants(params)
    if not ok:
        return BoundCheck("inapplicable", rho, c1, c2, (), reason)
    if not rho < 1:
        return BoundCheck("inapplicable", rho, c1, c2, (), f"rho={rho:.6g} >= 1")
    x_S, _ = hard_threshold(np.asarray(x_star, dtype=np.float64), params.k)
    errs = [float(np.linalg.norm(x - x_S)) for x in trace.iterates]
    extra = c1 * params.At_nu + c2 * params.nu
    slack = atol * (1 + float(np.linalg.norm(x_S)))
    margins = tuple(rho * e0 + extra - e1 for e0, e1 in zip(errs[:-1], errs[1:]))
    status = "holds" if all(m >= -slack for m in margins) else "violated"
    return BoundCheck(status, rho, c1, c2, margins)
