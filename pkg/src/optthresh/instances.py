"""Random problem instances, exact restricted isometry constants, threshold roots.

Randomness
----------
All draws come from numpy's ``Philox`` bit generator (Philox4x64-10) keyed
by ``(seed, purpose)``; the raw word stream is the four outputs of counter
block ``(1, 0, 0, 0)``, then ``(2, 0, 0, 0)``, and so on.  The matrix,
support, values and noise of one instance are independent streams and none
depends on the order in which the others were drawn.  Raw 64-bit words are
turned into variates by fixed formulas, pinned here so fixtures can be
reproduced by any implementation of Philox:

* uniform ``U = (raw >> 11) * 2**-53`` in ``[0, 1)``;
* standard normals by Box-Muller on consecutive pairs ``(r1, r2)``:
  ``U1 = ((r1 >> 11) + 1) * 2**-53`` in ``(0, 1]``, ``U2`` as above,
  ``z1 = sqrt(-2 ln U1) cos(2 pi U2)``, ``z2 = sqrt(-2 ln U1) sin(2 pi U2)``;
* Rademacher signs from the top bit: ``+1`` if ``raw >> 63`` else ``-1``;
* a uniform size-k support is the first k entries of the stable argsort of
  n uniforms, then sorted ascending.

Trial seeds are derived with a splitmix64 hash chain (``derive_seed``).
"""
import json
from dataclasses import dataclass
from itertools import combinations
from math import comb, sqrt, pi

import numpy as np
from scipy.optimize import bisect

from .linalg import as_matrix, as_vector
from .operators import BudgetExceededError

__all__ = [
    "PRNG_PIN",
    "ENSEMBLES",
    "SCALINGS",
    "GeneratorConfig",
    "ProblemInstance",
    "RipReport",
    "derive_seed",
    "philox_stream",
    "uniforms",
    "standard_normals",
    "gen_matrix",
    "gen_sparse_signal",
    "make_instance",
    "rip_constant_exact",
    "max_feasible_rip_order",
    "rip_threshold_ot",
    "rip_threshold_rot",
    "rip_threshold_rotp",
    "psi",
    "rot_equation_lhs",
    "rotp_equation_lhs",
    "instance_to_json",
    "instance_from_json",
    "save_instance",
    "load_instance",
]

PRNG_PIN = {
    "bit_generator": "numpy.random.Philox (Philox4x64-10)",
    "key": "[seed, purpose] as two uint64 words",
    "counter": "blocks (c, 0, 0, 0) for c = 1, 2, ...; 4 raw words per block",
    "purposes": {"matrix": 1, "support": 2, "values": 3, "noise": 4},
    "uniform": "(raw >> 11) * 2**-53",
    "normal": "Box-Muller on raw pairs, U1 = ((r1 >> 11) + 1) * 2**-53",
    "sign": "+1 if raw >> 63 else -1",
    "seed_derivation": "splitmix64 chain over (base_seed, k, trial)",
}

ENSEMBLES = ("gaussian", "bernoulli")
SCALINGS = ("normalized", "unnormalized")
_PURPOSE = PRNG_PIN["purposes"]
_MASK64 = (1 << 64) - 1
RIP_BUDGET = 10**6
RIP_MAX_ORDER = 12


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(base_seed, *parts):
    """Hash ``(base_seed, *parts)`` into a 64-bit seed.

    ``h = splitmix64(base); h = splitmix64(h ^ splitmix64(part))`` for each
    part, so adding k-values or trials never changes existing seeds.
    """
    h = _splitmix64(int(base_seed) & _MASK64)
    for p in parts:
        h = _splitmix64(h ^ _splitmix64(int(p) & _MASK64))
    return h


def philox_stream(seed, purpose):
    key = np.array([int(seed) & _MASK64, _PURPOSE.get(purpose, purpose)], dtype=np.uint64)
    return np.random.Philox(key=key)


def uniforms(bitgen, count):
    raw = bitgen.random_raw(count)
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53


def standard_normals(bitgen, count):
    pairs = (count + 1) // 2
    raw = bitgen.random_raw(2 * pairs).reshape(pairs, 2) >> np.uint64(11)
    u1 = (raw[:, 0].astype(np.float64) + 1.0) * 2.0**-53
    u2 = raw[:, 1].astype(np.float64) * 2.0**-53
    rad = np.sqrt(-2.0 * np.log(u1))
    z = np.empty((pairs, 2))
    z[:, 0] = rad * np.cos(2 * pi * u2)
    z[:, 1] = rad * np.sin(2 * pi * u2)
    return z.ravel()[:count]


def signs(bitgen, count):
    raw = bitgen.random_raw(count)
    return np.where(raw >> np.uint64(63), 1.0, -1.0)


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters of one random instance.

    ``scaling="normalized"`` draws N(0, 1/m) or +-1/sqrt(m) entries (unit
    expected column norm); ``"unnormalized"`` draws N(0, 1) or +-1.
    """

    m: int
    n: int
    k: int
    ensemble: str = "gaussian"
    noise_scale: float = 0.001
    seed: int = 0
    scaling: str = "normalized"

    def __post_init__(self):
        object.__setattr__(self, "ensemble", str(self.ensemble).lower())
        if self.m < 1 or self.n < 1:
            raise ValueError(f"dimensions must be positive, got m={self.m}, n={self.n}")
        if not 0 <= self.k <= self.n:
            raise ValueError(f"k={self.k} must lie in [0, n={self.n}]")
        if self.ensemble not in ENSEMBLES:
            raise ValueError(f"ensemble must be one of {ENSEMBLES}, got {self.ensemble!r}")
        if self.scaling not in SCALINGS:
            raise ValueError(f"scaling must be one of {SCALINGS}, got {self.scaling!r}")
        if not self.noise_scale >= 0:
            raise ValueError("noise_scale must be >= 0")
        if not 0 <= int(self.seed) <= _MASK64:
            raise ValueError("seed must be a 64-bit unsigned integer")


def gen_matrix(cfg):
    """Sensing matrix for ``cfg``, deterministic in ``cfg.seed``."""
    bg = philox_stream(cfg.seed, "matrix")
    size = cfg.m * cfg.n
    if cfg.ensemble == "gaussian":
        A = standard_normals(bg, size)
    else:
        A = signs(bg, size)
    A = A.reshape(cfg.m, cfg.n)
    if cfg.scaling == "normalized":
        A = A / sqrt(cfg.m)
    return A


def random_support(seed, n, k):
    keys = uniforms(philox_stream(seed, "support"), n)
    return np.sort(np.argsort(keys, kind="stable")[:k]).astype(np.int64)


def gen_sparse_signal(cfg):
    """k-sparse signal: uniform random support, i.i.d. standard normal values."""
    x = np.zeros(cfg.n)
    if cfg.k == 0:
        return x
    S = random_support(cfg.seed, cfg.n, cfg.k)
    x[S] = standard_normals(philox_stream(cfg.seed, "values"), cfg.k)
    return x


@dataclass(frozen=True)
class ProblemInstance:
    config: GeneratorConfig
    A: np.ndarray
    x_star: np.ndarray
    noise: np.ndarray
    y: np.ndarray

    @property
    def m(self):
        return self.config.m

    @property
    def n(self):
        return self.config.n

    @property
    def k(self):
        return self.config.k

    @property
    def seed(self):
        return self.config.seed


def make_instance(cfg):
    """Assemble ``(A, x*, h, y = A x* + noise_scale * h)``."""
    A = gen_matrix(cfg)
    x = gen_sparse_signal(cfg)
    h = standard_normals(philox_stream(cfg.seed, "noise"), cfg.m)
    y = A @ x + cfg.noise_scale * h
    return ProblemInstance(cfg, A, x, h, y)


# Exact RIP ------------------------------------------------------------------

@dataclass(frozen=True)
class RipReport:
    """Exact ``delta_q`` and a support attaining it."""

    q: int
    delta: float
    supports_checked: int
    support: tuple = ()


def max_feasible_rip_order(n, budget=RIP_BUDGET):
    """Largest q <= 12 whose C(n, j) <= budget for every j <= q."""
    q = 0
    while q < min(n, RIP_MAX_ORDER) and comb(n, q + 1) <= budget:
        q += 1
    return q


def rip_constant_exact(A, q, budget=RIP_BUDGET, chunk=4096):
    """``delta_q = max_S max(|lambda_min(G_S) - 1|, |lambda_max(G_S) - 1|)`` over all |S| = q.

    ``G_S`` is the principal q x q submatrix of ``A^T A``; eigenvalues come
    from LAPACK's symmetric solver in batches.  Ties keep the
    lexicographically first support.
    """
    A = as_matrix(A)
    n = A.shape[1]
    if not 1 <= q <= n:
        raise ValueError(f"order q={q} must lie in [1, n={n}]")
    total = comb(n, q)
    if q > RIP_MAX_ORDER or total > budget:
        raise BudgetExceededError(
            f"C({n},{q}) = {total} supports exceeds the RIP enumeration budget "
            f"{budget} (or q > {RIP_MAX_ORDER}); largest feasible q is "
            f"{max_feasible_rip_order(n, budget)}"
        )
    G = A.T @ A
    it = combinations(range(n), q)
    best, best_S = -1.0, ()
    done = 0
    while done < total:
        c = min(chunk, total - done)
        idx = np.fromiter((i for _, s in zip(range(c), it) for i in s),
                          dtype=np.int64, count=c * q).reshape(c, q)
        ev = np.linalg.eigvalsh(G[idx[:, :, None], idx[:, None, :]])
        dev = np.maximum(1.0 - ev[:, 0], ev[:, -1] - 1.0)
        j = int(np.argmax(dev))
        if dev[j] > best:
            best, best_S = float(dev[j]), tuple(int(i) for i in idx[j])
        done += c
    return RipReport(q, max(best, 0.0), total, best_S)


# Threshold roots ------------------------------------------------------------

_ROOT_XTOL = 1e-15
_BELOW_ONE = float(np.nextafter(1.0, 0.0))


def psi(g):
    return 5 * g**3 + 5 * g**2 + 3 * g


def rot_equation_lhs(g, omega):
    return (2 * omega + 1) * g * sqrt((1 + g) / (1 - g)) + g


def rotp_equation_lhs(g, omega):
    return rot_equation_lhs(g, omega) / sqrt(1 - g * g)


def _root(f):
    return bisect(f, 0.0, _BELOW_ONE, xtol=_ROOT_XTOL, maxiter=500)


def rip_threshold_ot():
    """Root in (0, 1) of ``5g^3 + 5g^2 + 3g = 1``."""
    return _root(lambda g: psi(g) - 1.0)


def _check_omega(omega):
    if int(omega) != omega or omega < 1:
        raise ValueError(f"omega must be a positive integer, got {omega}")


def rip_threshold_rot(omega):
    """gamma(omega): root in (0, 1) of ``(2w+1) g sqrt((1+g)/(1-g)) + g = 1``."""
    _check_omega(omega)
    return _root(lambda g: rot_equation_lhs(g, omega) - 1.0)


def rip_threshold_rotp(omega):
    """gamma*(omega): the same equation with the left side divided by ``sqrt(1 - g^2)``."""
    _check_omega(omega)
    return _root(lambda g: rotp_equation_lhs(g, omega) - 1.0)


# JSON -----------------------------------------------------------------------

def instance_to_json(inst):
    c = inst.config
    return {
        "m": c.m,
        "n": c.n,
        "k": c.k,
        "ensemble": c.ensemble,
        "scaling": c.scaling,
        "noise_scale": c.noise_scale,
        "seed": int(c.seed),
        "matrix": inst.A.tolist(),
        "x_star": inst.x_star.tolist(),
        "noise": inst.noise.tolist(),
        "y": inst.y.tolist(),
    }


def instance_from_json(doc):
    """Rebuild a ``ProblemInstance`` and check its invariants.

    Checks shapes, finiteness, ``||x*||_0 <= k`` and, when ``noise`` is
    present, ``y = A x* + noise_scale * noise`` to 1e-12 relative.
    """
    try:
        cfg = GeneratorConfig(
            m=int(doc["m"]), n=int(doc["n"]), k=int(doc["k"]),
            ensemble=doc.get("ensemble", "gaussian"),
            noise_scale=float(doc.get("noise_scale", 0.0)),
            seed=int(doc.get("seed", 0)),
            scaling=doc.get("scaling", "normalized"),
        )
        A = as_matrix(doc["matrix"])
        x = as_vector(doc["x_star"])
        y = as_vector(doc["y"])
    except KeyError as e:
        raise ValueError(f"instance document is missing field {e.args[0]!r}") from None
    if A.shape != (cfg.m, cfg.n) or x.shape[0] != cfg.n or y.shape[0] != cfg.m:
        raise ValueError(
            f"instance shapes disagree: matrix {A.shape}, x_star {x.shape[0]}, "
            f"y {y.shape[0]} for m={cfg.m}, n={cfg.n}"
        )
    if np.count_nonzero(x) > cfg.k:
        raise ValueError(f"x_star has {np.count_nonzero(x)} nonzeros, more than k={cfg.k}")
    if "noise" in doc:
        h = as_vector(doc["noise"], cfg.m)
        ref = A @ x + cfg.noise_scale * h
        if np.linalg.norm(ref - y) > 1e-12 * (1 + np.linalg.norm(y)):
            raise ValueError("y is inconsistent with matrix, x_star and noise")
    else:
        h = np.zeros(cfg.m)
    return ProblemInstance(cfg, A, x, h, y)


def save_instance(inst, path):
    with open(path, "w") as f:
        json.dump(instance_to_json(inst), f)
        f.write("\n")


def load_instance(path):
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None
    return instance_from_json(doc)
