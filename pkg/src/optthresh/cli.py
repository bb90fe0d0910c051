"""``optthresh`` command line: gen, recover, rip, roots, run, plot.

Exit codes: 0 success, 2 usage or configuration error, 3 budget exceeded.
"""
import argparse
import json
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .algorithms import (ALGORITHMS, DEFAULT_MAX_ITER, AlgorithmConfig, ContractionParams,
                         canonical_name, contraction_constants, recover)
from .bench import (ConfigError, ResultsParseError, load_grid, read_results, run_grid,
                    success_curves, write_results)
from .instances import (ENSEMBLES, SCALINGS, GeneratorConfig, load_instance, make_instance,
                        psi, rip_constant_exact, rip_threshold_ot, rip_threshold_rot,
                        rip_threshold_rotp, rot_equation_lhs, rotp_equation_lhs,
                        save_instance)
from .linalg import as_matrix
from .operators import BudgetExceededError, QpConfig
from .plot import write_svg

EXIT_OK, EXIT_USAGE, EXIT_BUDGET = 0, 2, 3

# Reference protocol values.
NOISE_SCALE = 0.001
BENCH_STEPSIZE = 1e-3
BENCH_OMEGA = 3
SUCCESS_TOL = 1e-3


class UsageError(Exception):
    pass


def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {s}")
    return v


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {s}")
    return v


# gen ------------------------------------------------------------------------

def cmd_gen(args):
    try:
        cfg = GeneratorConfig(args.m, args.n, args.k, args.ensemble, args.noise_scale,
                              args.seed, args.scaling)
    except ValueError as e:
        raise UsageError(str(e)) from None
    inst = make_instance(cfg)
    save_instance(inst, args.out)
    print(f"wrote {args.out}: m={cfg.m} n={cfg.n} k={cfg.k} ensemble={cfg.ensemble} "
          f"scaling={cfg.scaling} noise_scale={cfg.noise_scale:g} seed={cfg.seed}")
    return EXIT_OK


# recover --------------------------------------------------------------------

def _load_instance(path):
    try:
        return load_instance(path)
    except (OSError, ValueError) as e:
        raise UsageError(f"cannot load instance {path}: {e}") from None


def cmd_recover(args):
    inst = _load_instance(args.instance)
    try:
        name = canonical_name(args.alg)
        k = inst.k if args.k is None else args.k
        cfg = AlgorithmConfig(name, k, max_iter=args.max_iter, stepsize=args.stepsize,
                              omega=args.omega,
                              qp=QpConfig(args.qp_tol, args.qp_max_iter),
                              early_stop_rel_residual=args.early_stop)
    except ValueError as e:
        raise UsageError(str(e)) from None
    res = recover(inst.A, inst.y, cfg)
    x_star = inst.x_star
    if np.any(x_star):
        err = float(np.linalg.norm(res.x_final - x_star) / np.linalg.norm(x_star))
        ok = err <= args.success_tol
        err_label = "relative error"
    else:
        err = float(np.linalg.norm(res.x_final))
        ok = err <= 1e-6
        err_label = "||x_final|| (zero signal)"
    h = res.residual_history
    print(f"algorithm      {cfg.label}  (k={k}, max_iter={cfg.max_iter})")
    print(f"iterations     {res.iterations_run}  stop: {res.stop_reason}")
    print(f"residual       start {h[0]:.6e}  final {h[-1]:.6e}  min {min(h):.6e}")
    if res.qp_nonconverged_count:
        print(f"qp warnings    {res.qp_nonconverged_count} compression QPs hit max_iter")
    print(f"{err_label:<14} {err:.6e}")
    print(f"success        {'yes' if ok else 'no'}  (tol {args.success_tol:g})")
    if args.out:
        doc = {
            "algorithm": cfg.label,
            "config": {"name": cfg.name, "k": k, "max_iter": cfg.max_iter,
                       "stepsize": cfg.stepsize, "omega": cfg.omega,
                       "qp_tol": cfg.qp.tol, "qp_max_iter": cfg.qp.max_iter},
            "x_final": res.x_final.tolist(),
            "iterations_run": res.iterations_run,
            "residual_history": res.residual_history,
            "support_history": [s.tolist() for s in res.support_history],
            "converged": res.converged,
            "stop_reason": res.stop_reason,
            "qp_nonconverged_count": res.qp_nonconverged_count,
            "error": err,
            "success": bool(ok),
        }
        Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
        print(f"wrote {args.out}")
    return EXIT_OK


# rip ------------------------------------------------------------------------

def _load_matrix(args):
    if args.instance:
        return _load_instance(args.instance).A
    try:
        with open(args.matrix) as f:
            doc = json.load(f)
        if isinstance(doc, dict):
            doc = doc["matrix"]
        return as_matrix(doc)
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise UsageError(f"cannot load matrix {args.matrix}: {e}") from None


def _gate_orders(gate, k):
    if gate == "ot":
        return [k] if k % 2 == 0 else [k, k + 1]
    return [k, 2 * k, 3 * k]


def cmd_rip(args):
    A = _load_matrix(args)
    if args.q is None and args.gate is None:
        raise UsageError("give --q and/or --gate")
    deltas = {}

    def delta(q):
        if q not in deltas:
            deltas[q] = rip_constant_exact(A, q)
        return deltas[q]

    if args.q is not None:
        rep = delta(args.q)
        print(f"delta_{rep.q} = {rep.delta:.12f}  (supports checked: {rep.supports_checked}, "
              f"attained on {list(rep.support)})")
    if args.gate:
        if args.k is None:
            raise UsageError("--gate needs --k")
        orders = _gate_orders(args.gate, args.k)
        if orders[-1] > A.shape[1]:
            raise UsageError(f"--gate {args.gate} with k={args.k} needs delta_{orders[-1]} "
                             f"but n={A.shape[1]}")
        for q in orders:
            if q != args.q:
                print(f"delta_{q} = {delta(q).delta:.12f}")
        family = {"ot": "OT", "rot": "ROT", "rotp": "ROTP"}[args.gate]
        params = ContractionParams(family, args.k, {q: delta(q).delta for q in orders},
                                   omega=args.omega)
        ok, rho, c1, c2, reason = contraction_constants(params)
        if ok and rho < 1:
            print(f"gate {args.gate}: holds  (rho = {rho:.12f}, c1 = {c1:.6g}, c2 = {c2:.6g})")
        else:
            print(f"gate {args.gate}: fails  ({reason or f'rho = {rho:.6g} >= 1'})")
    return EXIT_OK


# roots ----------------------------------------------------------------------

def cmd_roots(args):
    w = args.omega
    g_ot = rip_threshold_ot()
    g = rip_threshold_rot(w)
    g_star = rip_threshold_rotp(w)
    print(f"OT root of 5g^3+5g^2+3g=1      {g_ot:.12f}   (residual {psi(g_ot) - 1:.1e})")
    print(f"gamma({w})                       {g:.12f}   "
          f"(residual {rot_equation_lhs(g, w) - 1:.1e})")
    print(f"gamma*({w})                      {g_star:.12f}   "
          f"(residual {rotp_equation_lhs(g_star, w) - 1:.1e})")
    print(f"psi(9/40) = {psi(0.225):.12f} < 1: {psi(0.225) < 1}")
    print(f"psi(91/400) = {psi(0.2275):.12f} < 1: {psi(0.2275) < 1}")
    bound = {2: (7, "1/7"), 3: (9, "1/9")}.get(w)
    if bound:
        print(f"gamma*({w}) > {bound[1]}: {g_star > 1 / bound[0]}")
    return EXIT_OK


# run / plot -----------------------------------------------------------------

def _config_path(name):
    p = Path(name)
    if p.exists():
        return p
    bundled = resources.files("optthresh").joinpath("configs", p.name)
    if bundled.is_file():
        return Path(str(bundled))
    raise UsageError(f"config {name} not found (bundled: "
                     f"{', '.join(sorted(bundled_configs()))})")


def bundled_configs():
    return [f.name for f in resources.files("optthresh").joinpath("configs").iterdir()
            if f.name.endswith(".json")]


def cmd_run(args):
    grid = load_grid(_config_path(args.config))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = run_grid(grid, workers=args.workers)
    curves = success_curves(records)
    csv_path, json_path = write_results(records, curves, out_dir / f"{args.name}.csv",
                                        grid=grid)
    print(f"{len(records)} records -> {csv_path}, {json_path}")
    print("k".ljust(10) + "".join(f"{k:>6}" for k in grid.k_values))
    for c in curves:
        print(c.algorithm.ljust(10) + "".join(f"{s / t:6.2f}" for _, s, t in c.points))
    return EXIT_OK


def cmd_plot(args):
    try:
        records = read_results(args.results)
    except OSError as e:
        raise UsageError(str(e)) from None
    if not records:
        raise UsageError(f"{args.results} has no records")
    write_svg(success_curves(records), args.out, title=args.title)
    print(f"wrote {args.out}")
    return EXIT_OK


# parser ---------------------------------------------------------------------

def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="optthresh", formatter_class=fmt,
                                description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    g = sub.add_parser("gen", formatter_class=fmt, help="generate a random instance")
    g.add_argument("--m", type=_positive_int, required=True, help="number of measurements")
    g.add_argument("--n", type=_positive_int, required=True, help="signal length")
    g.add_argument("--k", type=_nonneg_int, required=True, help="sparsity level")
    g.add_argument("--ensemble", choices=ENSEMBLES, required=True, help="matrix ensemble")
    g.add_argument("--seed", type=_nonneg_int, required=True, help="64-bit seed")
    g.add_argument("--noise-scale", type=float, default=NOISE_SCALE,
                   help="y = A x* + noise_scale * h, h standard normal")
    g.add_argument("--scaling", choices=SCALINGS, default="normalized",
                   help="normalized: entries N(0,1/m) or +-1/sqrt(m); unnormalized: N(0,1) or +-1")
    g.add_argument("--out", default="instance.json", help="output JSON path")
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("recover", formatter_class=fmt, help="run one algorithm on an instance")
    r.add_argument("--instance", required=True, help="instance JSON from 'gen'")
    r.add_argument("--alg", required=True,
                   help=f"algorithm: {', '.join(ALGORITHMS)} (aliases rot, rotp; any case)")
    r.add_argument("--k", type=_nonneg_int, default=None,
                   help="sparsity level (default: the instance's k)")
    r.add_argument("--max-iter", type=_positive_int, default=None,
                   help="iteration budget (default: " +
                   ", ".join(f"{a} {v}" for a, v in DEFAULT_MAX_ITER.items() if v) +
                   "; OMP runs k stages)")
    r.add_argument("--lambda", dest="stepsize", type=float, default=BENCH_STEPSIZE,
                   help="IHT/HTP gradient stepsize")
    r.add_argument("--omega", type=_positive_int, default=BENCH_OMEGA,
                   help="compressions per iteration (ROT/ROTP)")
    r.add_argument("--qp-tol", type=float, default=1e-8, help="compression QP tolerance")
    r.add_argument("--qp-max-iter", type=_positive_int, default=10000,
                   help="compression QP iteration cap")
    r.add_argument("--early-stop", type=float, default=1e-6,
                   help="stop when ||y-Ax||/||y|| falls to this value")
    r.add_argument("--success-tol", type=float, default=SUCCESS_TOL,
                   help="success iff ||x-x*||/||x*|| <= tol")
    r.add_argument("--out", default=None, help="write the full result as JSON")
    r.set_defaults(func=cmd_recover)

    q = sub.add_parser("rip", formatter_class=fmt,
                       help="exact restricted isometry constants and contraction-bound gates")
    src = q.add_mutually_exclusive_group(required=True)
    src.add_argument("--instance", help="instance JSON")
    src.add_argument("--matrix", help="JSON file: a row-major array or {\"matrix\": ...}")
    q.add_argument("--q", type=_positive_int, default=None, help="order of delta_q")
    q.add_argument("--gate", choices=("ot", "rot", "rotp"), default=None,
                   help="check the RIP hypothesis of a contraction bound")
    q.add_argument("--omega", type=_positive_int, default=BENCH_OMEGA,
                   help="omega for the rot/rotp gates")
    q.add_argument("--k", type=_nonneg_int, default=None, help="sparsity level for --gate")
    q.set_defaults(func=cmd_rip)

    o = sub.add_parser("roots", formatter_class=fmt, help="RIP threshold roots")
    o.add_argument("--omega", type=_positive_int, default=BENCH_OMEGA,
                   help="compressions per iteration")
    o.set_defaults(func=cmd_roots)

    u = sub.add_parser("run", formatter_class=fmt, help="run a benchmark grid")
    u.add_argument("config", help="grid JSON (path, or name of a bundled config: "
                   "fig1_scaled.json, fig1_scaled_bernoulli.json, smoke.json)")
    u.add_argument("--out-dir", default="results", help="output directory")
    u.add_argument("--name", default="results", help="base name of the CSV/JSON outputs")
    u.add_argument("--workers", type=_positive_int, default=os.cpu_count() or 1,
                   help="worker processes")
    u.set_defaults(func=cmd_run)

    t = sub.add_parser("plot", formatter_class=fmt, help="SVG chart of a results CSV")
    t.add_argument("--results", required=True, help="results CSV from 'run'")
    t.add_argument("--out", default="success.svg", help="output SVG path")
    t.add_argument("--title", default="Success frequency vs sparsity", help="chart title")
    t.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BudgetExceededError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BUDGET
    except (UsageError, ConfigError, ResultsParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
