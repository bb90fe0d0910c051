"""Phase-transition experiments: sparsity grid x random trials x algorithms.

For each ``(k, trial)`` cell one instance is generated from
``derive_seed(base_seed, k, trial)`` and every algorithm runs on it, so the
comparison is paired.  Results go to a CSV (one row per record) and a JSON
summary holding the grid echo, the success curves and the PRNG pin.
"""
import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .algorithms import AlgorithmConfig, recover
from .instances import PRNG_PIN, GeneratorConfig, derive_seed, make_instance
from .operators import QpConfig

__all__ = [
    "CSV_HEADER",
    "ZERO_SIGNAL_TOL",
    "ExperimentGrid",
    "TrialRecord",
    "SuccessCurve",
    "ConfigError",
    "ResultsParseError",
    "run_trial",
    "run_grid",
    "success_frequency",
    "success_curves",
    "grid_to_json",
    "grid_from_json",
    "load_grid",
    "write_results",
    "read_results",
    "read_summary",
    "validate_summary",
]

CSV_HEADER = ["k", "trial", "algorithm", "relative_error", "success", "iterations",
              "wall_time_s", "seed"]
# With x* = 0 the relative error is undefined; success means x_final ~ 0.
ZERO_SIGNAL_TOL = 1e-6


class ConfigError(ValueError):
    """Grid configuration failed schema or semantic validation."""


class ResultsParseError(ValueError):
    """A results file is malformed."""


@dataclass(frozen=True)
class ExperimentGrid:
    """Benchmark grid.  The ``k`` of each entry in ``algorithms`` is ignored;
    it is replaced by the grid's sparsity level for every cell."""

    m: int
    n: int
    k_values: tuple
    trials_per_k: int
    algorithms: tuple
    ensemble: str = "gaussian"
    noise_scale: float = 0.001
    base_seed: int = 0
    success_tol: float = 1e-3
    scaling: str = "normalized"

    def __post_init__(self):
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))
        object.__setattr__(self, "algorithms", tuple(self.algorithms))
        ks = self.k_values
        if not ks:
            raise ConfigError("k_values is empty")
        if list(ks) != sorted(ks) or len(set(ks)) != len(ks):
            raise ConfigError("k_values must be strictly ascending")
        if ks[0] < 0 or ks[-1] > self.n:
            raise ConfigError(f"k_values must lie in [0, n={self.n}]")
        if self.trials_per_k < 1:
            raise ConfigError("trials_per_k must be >= 1")
        if not self.algorithms:
            raise ConfigError("no algorithms in grid")
        labels = [a.label for a in self.algorithms]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate algorithm labels in grid: {labels}")
        if not self.success_tol > 0:
            raise ConfigError("success_tol must be positive")
        # Let the generator validate the remaining fields once, up front.
        GeneratorConfig(self.m, self.n, ks[-1], self.ensemble, self.noise_scale,
                        self.base_seed, self.scaling)


@dataclass(frozen=True)
class TrialRecord:
    k: int
    trial: int
    algorithm: str
    relative_error: float
    success: bool
    iterations: int
    wall_time_s: float
    seed: int


@dataclass(frozen=True)
class SuccessCurve:
    """Success counts per sparsity level for one algorithm."""

    algorithm: str
    points: tuple  # (k, successes, trials)

    @property
    def ks(self):
        return [p[0] for p in self.points]

    @property
    def frequencies(self):
        return [Fraction(s, t) for _, s, t in self.points]

    def to_json(self):
        return {
            "algorithm": self.algorithm,
            "points": [
                {"k": k, "successes": s, "trials": t, "frequency": s / t}
                for k, s, t in self.points
            ],
        }


def _evaluate(x_final, x_star, k, success_tol):
    if not np.all(np.isfinite(x_final)):
        return float("inf"), False
    if k == 0 or not np.any(x_star):
        err = float(np.linalg.norm(x_final))
        return err, err <= ZERO_SIGNAL_TOL
    err = float(np.linalg.norm(x_final - x_star) / np.linalg.norm(x_star))
    return err, err <= success_tol


def run_trial(grid, k, trial):
    """All algorithms on the shared instance of cell ``(k, trial)``.

    An exception inside an algorithm is recorded as a failure with
    ``relative_error = inf`` and ``iterations = 0``.
    """
    seed = derive_seed(grid.base_seed, k, trial)
    inst = make_instance(GeneratorConfig(grid.m, grid.n, k, grid.ensemble,
                                         grid.noise_scale, seed, grid.scaling))
    out = []
    for template in grid.algorithms:
        cfg = replace(template, k=k)
        t0 = time.perf_counter()
        try:
            res = recover(inst.A, inst.y, cfg)
            err, ok = _evaluate(res.x_final, inst.x_star, k, grid.success_tol)
            its = res.iterations_run
        except Exception:
            err, ok, its = float("inf"), False, 0
        out.append(TrialRecord(k, trial, cfg.label, err, bool(ok), int(its),
                               time.perf_counter() - t0, seed))
    return out


def _run_cell(args):
    return run_trial(*args)


def run_grid(grid, workers=1):
    """Every ``(k, trial)`` cell of the grid, sorted by ``(k, trial, algorithm)``.

    Cells are independent, so the records do not depend on ``workers``
    (apart from ``wall_time_s``).
    """
    cells = [(grid, k, t) for k in grid.k_values for t in range(grid.trials_per_k)]
    if workers <= 1:
        batches = map(_run_cell, cells)
        records = [r for batch in batches for r in batch]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = [r for batch in pool.map(_run_cell, cells, chunksize=4) for r in batch]
    records.sort(key=lambda r: (r.k, r.trial, r.algorithm))
    return records


def success_frequency(records, algorithm, k):
    """Exact fraction of successful trials of ``algorithm`` at sparsity ``k``."""
    hits = [r.success for r in records if r.algorithm == algorithm and r.k == k]
    if not hits:
        raise LookupError(f"no records for algorithm {algorithm!r} at k={k}")
    return Fraction(sum(hits), len(hits))


def success_curves(records):
    """One ``SuccessCurve`` per algorithm, in order of first appearance."""
    tally = {}
    for r in records:
        per_k = tally.setdefault(r.algorithm, {})
        s, t = per_k.get(r.k, (0, 0))
        per_k[r.k] = (s + int(r.success), t + 1)
    return [
        SuccessCurve(alg, tuple((k, s, t) for k, (s, t) in sorted(pts.items())))
        for alg, pts in tally.items()
    ]


# Configuration --------------------------------------------------------------

def _schema(name):
    return json.loads(resources.files("optthresh").joinpath("schemas", name).read_text())


def _pointer(path):
    return "/" + "/".join(str(p) for p in path) if path else "/"


def _validate(doc, schema_name, what):
    validator = jsonschema.Draft202012Validator(_schema(schema_name))
    errors = sorted(validator.iter_errors(doc), key=lambda e: [str(p) for p in e.absolute_path])
    if errors:
        lines = [f"{_pointer(e.absolute_path)}: {e.message}" for e in errors]
        raise ConfigError(f"invalid {what}:\n  " + "\n  ".join(lines))


def _algorithm_to_json(cfg):
    return {
        "name": cfg.name,
        "max_iter": cfg.max_iter,
        "stepsize": cfg.stepsize,
        "omega": cfg.omega,
        "early_stop_rel_residual": cfg.early_stop_rel_residual,
        "stop_on_fixed_point": cfg.stop_on_fixed_point,
        "qp": {"tol": cfg.qp.tol, "max_iter": cfg.qp.max_iter, "restart": cfg.qp.restart},
    }


def _algorithm_from_json(doc):
    doc = dict(doc)
    qp = QpConfig(**doc.pop("qp", {}))
    return AlgorithmConfig(k=0, qp=qp, **doc)


def grid_to_json(grid):
    return {
        "m": grid.m,
        "n": grid.n,
        "k_values": list(grid.k_values),
        "trials_per_k": grid.trials_per_k,
        "ensemble": grid.ensemble,
        "scaling": grid.scaling,
        "noise_scale": grid.noise_scale,
        "base_seed": int(grid.base_seed),
        "success_tol": grid.success_tol,
        "algorithms": [_algorithm_to_json(a) for a in grid.algorithms],
    }


def grid_from_json(doc):
    """Validate a grid document against the shipped schema and build the grid.

    Schema violations raise ``ConfigError`` listing JSON-pointer paths.
    """
    _validate(doc, "grid.schema.json", "grid config")
    try:
        algs = [_algorithm_from_json(a) for a in doc["algorithms"]]
        kw = {key: doc[key] for key in ("ensemble", "scaling", "noise_scale",
                                        "base_seed", "success_tol") if key in doc}
        return ExperimentGrid(doc["m"], doc["n"], doc["k_values"], doc["trials_per_k"],
                              algs, **kw)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"invalid grid config: {e}") from None


def load_grid(path):
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}") from None
    return grid_from_json(doc)


# Persistence ----------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def _summary_path(csv_path):
    return Path(csv_path).with_suffix(".json")


def write_results(records, curves, path, grid=None, summary_path=None):
    """Write ``path`` (CSV records) and a JSON summary beside it.

    The summary defaults to ``path`` with a ``.json`` suffix.  Returns the
    pair of paths written.
    """
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([r.k, r.trial, r.algorithm, _fmt(r.relative_error),
                    "true" if r.success else "false", r.iterations,
                    _fmt(r.wall_time_s), r.seed])
    path.write_text(buf.getvalue())
    summary = {
        "format_version": 1,
        "software": {"name": "optthresh", "version": __version__,
                     "numpy": np.__version__},
        "prng": PRNG_PIN,
        "grid": grid_to_json(grid) if grid is not None else {},
        "records": len(records),
        "curves": [c.to_json() for c in curves],
    }
    validate_summary(summary)
    spath = Path(summary_path) if summary_path else _summary_path(path)
    spath.write_text(json.dumps(summary, indent=2) + "\n")
    return path, spath


def _parse_bool(s):
    if s == "true":
        return True
    if s == "false":
        return False
    raise ValueError(f"expected true/false, got {s!r}")


def read_results(path):
    """Parse a results CSV back into ``TrialRecord`` objects.

    Malformed content raises ``ResultsParseError`` naming the line.
    """
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != CSV_HEADER:
        raise ResultsParseError(f"{path}:1: expected header {','.join(CSV_HEADER)}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_HEADER):
            raise ResultsParseError(
                f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        try:
            out.append(TrialRecord(int(row[0]), int(row[1]), row[2], float(row[3]),
                                   _parse_bool(row[4]), int(row[5]), float(row[6]),
                                   int(row[7])))
        except ValueError as e:
            raise ResultsParseError(f"{path}:{lineno}: {e}") from None
    return out


def validate_summary(doc):
    _validate(doc, "summary.schema.json", "results summary")


def read_summary(path):
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise ResultsParseError(f"{path}:{e.lineno}: {e.msg}") from None
    validate_summary(doc)
    return doc
