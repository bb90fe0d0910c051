"""Acceptance criteria 1-7.  Run with ``pytest -v``; the terminal summary
prints one PASS/FAIL line per criterion (see conftest.py)."""
import time
from importlib import resources
from itertools import combinations

import numpy as np
import pytest
from scipy.stats import binom

from optthresh.algorithms import (AlgorithmConfig, ContractionParams, check_contraction_bound,
                                  gradient_point, recover)
from optthresh.bench import load_grid, run_grid, success_curves, write_results
from optthresh.instances import (psi, rip_constant_exact, rip_threshold_ot, rip_threshold_rot,
                                 rip_threshold_rotp, rot_equation_lhs, rotp_equation_lhs)
from optthresh.operators import (QpConfig, capped_simplex_project, compression_qp_solve,
                                 hard_threshold, optimal_k_threshold_exhaustive, residual_norm)
from oracles import (binary_compression_min, capped_simplex_qp_enumerate, parseval_frame,
                     project_bisection)


def criterion(number, title):
    return pytest.mark.acceptance(number, title)


C1 = criterion(1, "inequality property suite")
C2 = criterion(2, "optimality oracle suite")
C3 = criterion(3, "QP solver certification")
C4 = criterion(4, "contraction bound checks")
C5 = criterion(5, "root-equation checks")
C6 = criterion(6, "scaled success-frequency reproduction")
C7 = criterion(7, "determinism across worker counts")


# 1. inequality property suite ---------------------------------------------------

def _hk_bound_holds(rng):
    n = int(rng.integers(1, 31))
    k = int(rng.integers(0, n + 1))
    h = np.zeros(n)
    S = rng.choice(n, k, replace=False)
    h[S] = rng.standard_normal(k)
    z = h * rng.choice([0.0, 1.0]) + rng.standard_normal(n) * rng.choice([1e-3, 1.0, 10.0])
    if rng.random() < 0.2:
        z = np.round(z, 1)  # ties in |z|
    hz, S_star = hard_threshold(z, k)
    S = np.flatnonzero(h) if k else np.zeros(0, dtype=int)
    union = np.union1d(S_star, S).astype(int)
    minus = np.setdiff1d(S_star, S).astype(int)
    d = z - h
    lhs = np.linalg.norm(h - hz)
    rhs = np.linalg.norm(d[union]) + np.linalg.norm(d[minus])
    return lhs <= rhs + 1e-10


def _block_bound_holds(rng):
    n = int(rng.integers(1, 51))
    k = int(rng.integers(1, n + 1))
    kind = rng.integers(3)
    if kind == 0:
        w = capped_simplex_project(rng.standard_normal(n) * rng.choice([0.1, 1, 10]), k)
    elif kind == 1:
        w = np.zeros(n)
        w[rng.choice(n, k, replace=False)] = 1.0
    else:
        w = np.full(n, k / n)
    Lam = rng.choice(n, int(rng.integers(0, n + 1)), replace=False)
    tau = int(rng.integers(1, n + 1))
    vals = np.sort(w[Lam])[::-1]
    total = sum(vals[i:i + tau].max() for i in range(0, len(vals), tau)) if len(vals) else 0.0
    return total <= (tau + k - 1) / tau + 1e-10


def _deltas(A, qmax):
    return {q: rip_constant_exact(A, q).delta for q in range(1, qmax + 1)}


def _min_sparse_eig(A, s):
    """Smallest eigenvalue of A_T^T A_T over all |T| = s: the exact lower RIP side."""
    n = A.shape[1]
    s = min(s, n)
    return min(np.linalg.eigvalsh(A[:, list(T)].T @ A[:, list(T)])[0]
               for T in combinations(range(n), s))


def _quadratic_forms_hold(rng):
    n = int(rng.integers(4, 13))
    if rng.random() < 0.5:
        A = parseval_frame(n, rng, perturb=rng.choice([0.0, 0.05]))
    else:
        m = int(rng.integers(n // 2, 2 * n + 1))
        A = rng.standard_normal((m, n)) / np.sqrt(m)
    qmax = min(4, n)
    d = _deltas(A, qmax)
    ok = True
    # (i) disjoint supports, s + t <= 4
    for _ in range(10):
        s = int(rng.integers(1, qmax))
        t = int(rng.integers(1, qmax - s + 1))
        idx = rng.permutation(n)
        u, v = np.zeros(n), np.zeros(n)
        u[idx[:s]] = rng.standard_normal(s)
        v[idx[s:s + t]] = rng.standard_normal(t)
        ok &= abs(u @ A.T @ A @ v) <= d[s + t] * np.linalg.norm(u) * np.linalg.norm(v) + 1e-9
    # even k: ||Az||^2 >= (1 - 3 delta_k) ||z||^2 on 2k-sparse z
    # odd k:  ||Az||^2 >= (1 - delta_{k+1} - 2 delta_k) ||z||^2
    bounds = {k: 1 - 3 * d[k] for k in (2, 4) if k <= qmax}
    bounds.update({k: 1 - d[k + 1] - 2 * d[k] for k in (1, 3) if k + 1 <= qmax})
    for k, c in bounds.items():
        s = min(2 * k, n)
        ok &= _min_sparse_eig(A, s) >= c - 1e-9
        z = np.zeros(n)
        z[rng.choice(n, s, replace=False)] = rng.standard_normal(s)
        ok &= np.linalg.norm(A @ z) ** 2 >= c * (z @ z) - 1e-9
    return bool(ok)


@C1
def test_c1_inequality_properties(detail):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    bad_hk = sum(not _hk_bound_holds(rng) for _ in range(1000))
    bad_block = sum(not _block_bound_holds(rng) for _ in range(1000))
    bad_quad = sum(not _quadratic_forms_hold(rng) for _ in range(200))
    elapsed = time.perf_counter() - t0
    detail(f"hard-threshold bound {1000 - bad_hk}/1000, block-max bound "
           f"{1000 - bad_block}/1000, quadratic forms {200 - bad_quad}/200, {elapsed:.1f} s")
    assert bad_hk == 0 and bad_block == 0 and bad_quad == 0
    assert elapsed < 10


# 2. optimality oracle suite ------------------------------------------------------

@C2
def test_c2_optimality_oracles(detail):
    rng = np.random.default_rng(202)
    worst_eq = worst_hk = worst_qp = -np.inf
    for _ in range(200):
        n = int(rng.integers(3, 13))
        k = int(rng.integers(1, min(3, n) + 1))
        m = int(rng.integers(2, n + 1))
        A = rng.standard_normal((m, n)) / np.sqrt(m)
        y = rng.standard_normal(m)
        x0, _ = hard_threshold(rng.standard_normal(n) * rng.choice([0.0, 1.0]), k)
        u = gradient_point(A, y, x0)
        step = recover(A, y, AlgorithmConfig("OT", k, max_iter=1, stop_on_fixed_point=False),
                       x0=x0)
        ot_res = step.residual_history[1]
        best, _ = binary_compression_min(A, y, u, k)
        sel, obj = optimal_k_threshold_exhaustive(A, y, u, k)
        worst_eq = max(worst_eq, abs(ot_res - best), abs(np.sqrt(obj) - best))
        worst_hk = max(worst_hk, ot_res - residual_norm(A, y, hard_threshold(u, k)[0]))
        qp = compression_qp_solve(A, y, u, k)
        worst_qp = max(worst_qp, qp.objective - best ** 2)
    detail(f"max |OT - oracle| {worst_eq:.1e}, max OT - Hk {worst_hk:.1e}, "
           f"max QP - binary {worst_qp:.1e}")
    assert worst_eq <= 1e-12
    assert worst_hk <= 1e-12
    assert worst_qp <= 1e-6


# 3. QP solver certification -------------------------------------------------------

@C3
def test_c3_qp_against_enumeration(detail):
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(3, 9))
        k = int(rng.integers(1, n))
        m = int(rng.integers(n, 2 * n + 1))
        A = rng.standard_normal((m, n)) / np.sqrt(m)
        y = rng.standard_normal(m) * rng.choice([0.1, 1.0, 10.0])
        u = rng.standard_normal(n) * rng.choice([0.1, 1.0, 10.0])
        B = A * u
        ref = capped_simplex_qp_enumerate(B.T @ B, B.T @ y, y @ y, k)
        res = compression_qp_solve(A, y, u, k, QpConfig())
        worst = max(worst, abs(res.objective - ref))
    detail(f"max |objective - enumeration| {worst:.1e} over 100 QPs")
    assert worst <= 1e-8


@C3
def test_c3_projection_against_bisection(detail):
    rng = np.random.default_rng(304)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 60))
        k = int(rng.integers(0, n + 1))
        v = rng.standard_normal(n) * rng.choice([0.01, 1.0, 100.0])
        if rng.random() < 0.2:
            v = np.round(v, 0)
        worst = max(worst, np.abs(capped_simplex_project(v, k) - project_bisection(v, k)).max())
    detail(f"max |projection - bisection| {worst:.1e} over 1000 vectors")
    assert worst <= 1e-10


# 4. contraction bounds ------------------------------------------------------------

SHAPES = ((2, 12), (3, 24), (4, 24))


def _frame_instance(rng, k, n, perturb):
    A = parseval_frame(n, rng, flat_jitter=0.02, perturb=perturb)
    x = np.zeros(n)
    x[rng.choice(n, k, replace=False)] = rng.standard_normal(k)
    return A, x, k


def _contraction_instances():
    """50 near-tight frames with delta at or below the gate, then 6 rougher ones."""
    rng = np.random.default_rng(404)
    out = [_frame_instance(rng, *SHAPES[i % 3], rng.uniform(0.0, 0.03)) for i in range(50)]
    out += [_frame_instance(rng, *SHAPES[i % 3], 0.1) for i in range(6)]
    return out


@C4
def test_c4_contraction_bounds(detail):
    t0 = time.perf_counter()
    status = {"holds": 0, "violated": 0, "inapplicable": 0}
    rhos = []
    for A, x_star, k in _contraction_instances():
        orders = [k] if k % 2 == 0 else [k, k + 1]
        deltas = {q: rip_constant_exact(A, q).delta for q in orders}
        y = A @ x_star
        params = ContractionParams.from_instance(A, y, x_star, "OT", k, deltas)
        for name in ("OT", "OTP"):
            res = recover(A, y, AlgorithmConfig(name, k, max_iter=20, early_stop_rel_residual=0.0),
                          record_iterates=True)
            chk = check_contraction_bound(res, x_star, params)
            status[chk.status] += 1
            if chk.status != "inapplicable":
                rhos.append(chk.rho)
    elapsed = time.perf_counter() - t0
    detail(f"{status['holds']} hold, {status['violated']} violated, "
           f"{status['inapplicable']} inapplicable (of {sum(status.values())} runs); "
           f"rho in [{min(rhos):.3f}, {max(rhos):.3f}], {elapsed:.1f} s")
    assert status["violated"] == 0
    assert status["holds"] > 0 and all(r < 1 for r in rhos)
    assert status["inapplicable"] > 0
    assert elapsed < 120


# 5. roots ------------------------------------------------------------------------

@C5
def test_c5_roots(detail):
    assert psi(0.225) < 1
    g = rip_threshold_ot()
    assert abs(psi(g) - 1) <= 1e-10
    rot = [rip_threshold_rot(w) for w in range(1, 7)]
    rotp = [rip_threshold_rotp(w) for w in range(1, 7)]
    assert all(a > b for a, b in zip(rot, rot[1:]))
    assert all(a > b for a, b in zip(rotp, rotp[1:]))
    for w, r, rs in zip(range(1, 7), rot, rotp):
        assert abs(rot_equation_lhs(r, w) - 1) <= 1e-10
        assert abs(rotp_equation_lhs(rs, w) - 1) <= 1e-10
    assert rotp[1] > 1 / 7 and rotp[2] > 1 / 9
    detail(f"OT root {g:.12f}; gamma*(2) {rotp[1]:.12f} > 1/7; gamma*(3) {rotp[2]:.12f} > 1/9")


# 6. scaled benchmark ------------------------------------------------------------

CONFIGS = {"gaussian": "fig1_scaled.json", "bernoulli": "fig1_scaled_bernoulli.json"}
ALPHA = 0.01
LOW_K_FREQ = 0.9
BAND = 0.15
LEAD = 0.1


@pytest.fixture(scope="module")
def benchmark(tmp_path_factory):
    out = {}
    root = tmp_path_factory.mktemp("bench")
    for ensemble, name in CONFIGS.items():
        grid = load_grid(resources.files("optthresh").joinpath("configs", name))
        t0 = time.perf_counter()
        records = run_grid(grid, workers=1)
        elapsed = time.perf_counter() - t0
        csv_path, _ = write_results(records, success_curves(records),
                                    root / f"{ensemble}_w1.csv", grid)
        out[ensemble] = (grid, records, csv_path, elapsed)
    return out


def _curves(records):
    return {c.algorithm: c for c in success_curves(records)}


def _low_k_floor(trials):
    """Smallest success count not rejected by a one-sided binomial test of p >= 0.9."""
    return next(s for s in range(trials + 1) if binom.cdf(s, trials, LOW_K_FREQ) >= ALPHA)


@C6
@pytest.mark.slow
@pytest.mark.parametrize("ensemble", CONFIGS)
def test_c6a_low_sparsity_success(benchmark, ensemble, detail):
    grid, records, _, elapsed = benchmark[ensemble]
    floor = _low_k_floor(grid.trials_per_k)
    short = []
    for name, c in _curves(records).items():
        for k, s, t in c.points:
            if k <= 4 and s < floor:
                short.append(f"{name}@k={k}: {s}/{t}")
    detail(f"{ensemble}: need >= {floor}/{grid.trials_per_k} at k <= 4; "
           f"short: {', '.join(short) or 'none'}; grid ran in {elapsed:.0f} s")
    assert not short
    assert elapsed < 15 * 60


def _smoothed(freqs):
    f = np.asarray(freqs, dtype=float)
    return np.array([f[max(0, i - 1):i + 2].mean() for i in range(len(f))])


@C6
@pytest.mark.slow
@pytest.mark.parametrize("ensemble", CONFIGS)
def test_c6b_curves_non_increasing(benchmark, ensemble, detail):
    _, records, _, _ = benchmark[ensemble]
    rises = []
    for name, c in _curves(records).items():
        sm = _smoothed(c.frequencies)
        worst = float(np.max(np.diff(sm))) if len(sm) > 1 else 0.0
        if worst > BAND:
            rises.append(f"{name} +{worst:.2f}")
    detail(f"{ensemble}: smoothed rises above {BAND}: {', '.join(rises) or 'none'}")
    assert not rises


@C6
@pytest.mark.slow
@pytest.mark.parametrize("ensemble", CONFIGS)
def test_c6c_rotp3_robustness(benchmark, ensemble, detail):
    _, records, _, _ = benchmark[ensemble]
    curves = _curves(records)
    rotp = dict(zip(curves["ROTP3"].ks, curves["ROTP3"].frequencies))
    k_star = max(k for k, f in rotp.items() if f >= 0.5)
    ref = float(rotp[k_star])
    others = {name: float(dict(zip(curves[name].ks, curves[name].frequencies))[k_star])
              for name in ("CoSaMP", "SP", "IHT")}
    detail(f"{ensemble}: k*={k_star}, ROTP3 {ref:.2f}, " +
           ", ".join(f"{a} {f:.2f}" for a, f in others.items()))
    assert all(f <= ref + LEAD + 1e-12 for f in others.values())


# 7. determinism --------------------------------------------------------------------

def _without_wall_time(path):
    lines = path.read_text().splitlines()
    col = lines[0].split(",").index("wall_time_s")
    return "\n".join(",".join(f for i, f in enumerate(line.split(",")) if i != col)
                     for line in lines).encode()


@C7
@pytest.mark.slow
@pytest.mark.parametrize("ensemble", CONFIGS)
def test_c7_worker_count_invariance(benchmark, tmp_path, ensemble, detail):
    grid, _, csv1, _ = benchmark[ensemble]
    records = run_grid(grid, workers=2)
    csv2, _ = write_results(records, success_curves(records), tmp_path / "w2.csv", grid)
    a, b = _without_wall_time(csv1), _without_wall_time(csv2)
    detail(f"{ensemble}: {len(records)} records, 1 vs 2 workers "
           f"{'identical' if a == b else 'DIFFER'}")
    assert a == b
