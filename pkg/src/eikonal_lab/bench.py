"""Benchmark runs, cross-solver verification and convergence studies."""
from __future__ import annotations

import csv
import io
import itertools
import math
import statistics
import sys
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import ConfigurationError, Problem, SolverState, axis_indices, build_problem
from .heap_cell import solve_hcm
from .local_update import residual_field
from .parallel_heap_cell import solve_phcm
from .parallel_sweep import solve_dfsm, solve_dlsm
from .serial_solvers import SolveStats, solve_fmm, solve_fsm, solve_lsm

METHODS = ("fmm", "fsm", "lsm", "hcm", "phcm", "dfsm", "dlsm")
CELL_METHODS = ("hcm", "phcm")
THREADED_METHODS = ("phcm", "dfsm", "dlsm")

CSV_HEADER = ("method", "problem", "n", "r", "P", "rep", "wall_time_s", "sweeps",
              "heap_removals", "gridpoint_updates", "avs", "overhead_frac")
_NUMERIC = CSV_HEADER[6:]


@dataclass
class BenchConfig:
    method: str
    problem: str
    n: int
    r: int | None = None
    P: int | None = None
    kappa: float = 0.0
    heuristic: str = "min_inflow"
    reps: int = 1
    out: str | None = None
    verify: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}; choose from {METHODS}")
        if (self.r is not None) != (self.method in CELL_METHODS):
            raise ConfigurationError(
                f"cell size r is required for {'/'.join(CELL_METHODS)} and only for them")
        if (self.P is not None) != (self.method in THREADED_METHODS):
            raise ConfigurationError(
                f"thread count P is required for {'/'.join(THREADED_METHODS)} and only for them")
        if self.P is not None and self.P < 1:
            raise ConfigurationError(f"thread count must be >= 1, got {self.P}")
        if self.reps < 1:
            raise ConfigurationError(f"reps must be >= 1, got {self.reps}")
        if self.kappa < 0:
            raise ConfigurationError("kappa must be >= 0")


def run_solver(method: str, problem: Problem, r: int | None = None, P: int | None = None,
               kappa: float = 0.0, heuristic: str = "min_inflow",
               seed: int = 0) -> tuple[SolverState, SolveStats]:
    if method == "fmm":
        return solve_fmm(problem)
    if method == "fsm":
        return solve_fsm(problem, kappa)
    if method == "lsm":
        return solve_lsm(problem, kappa)
    if method == "hcm":
        return solve_hcm(problem, r, kappa, heuristic)
    if method == "phcm":
        return solve_phcm(problem, r, P, kappa, heuristic, seed)
    if method == "dfsm":
        return solve_dfsm(problem, P, kappa)
    if method == "dlsm":
        return solve_dlsm(problem, P, kappa)
    raise ConfigurationError(f"unknown method {method!r}")


@dataclass
class BenchReport:
    rows: list[dict] = field(default_factory=list)
    aggregates: list[dict] = field(default_factory=list)

    def write_csv(self, fh) -> None:
        w = csv.DictWriter(fh, fieldnames=CSV_HEADER, lineterminator="\n")
        w.writeheader()
        for row in itertools.chain(self.rows, self.aggregates):
            w.writerow({k: "" if row.get(k) is None else row[k] for k in CSV_HEADER})

    def to_csv(self) -> str:
        buf = io.StringIO()
        self.write_csv(buf)
        return buf.getvalue()


def _row(config: BenchConfig, rep, stats: SolveStats) -> dict:
    cell = config.method in CELL_METHODS
    return {
        "method": config.method, "problem": config.problem, "n": config.n, "r": config.r,
        "P": config.P, "rep": rep, "wall_time_s": stats.wall_time,
        "sweeps": stats.sweep_count if config.method != "fmm" else 0,
        "heap_removals": stats.heap_removal_count,
        "gridpoint_updates": stats.gridpoint_update_count,
        "avs": stats.avs if cell else None,
        "overhead_frac": stats.overhead_fraction if cell else None,
    }


def aggregate(rows: list[dict]) -> list[dict]:
    """Median, min and max rows over the repetitions of one configuration."""
    if not rows:
        return []
    out = []
    for label, fn in (("median", statistics.median), ("min", min), ("max", max)):
        agg = {k: rows[0][k] for k in CSV_HEADER[:5]}
        agg["rep"] = label
        for key in _NUMERIC:
            vals = [r[key] for r in rows if r.get(key) is not None]
            agg[key] = fn(vals) if vals else None
        out.append(agg)
    return out


def run_benchmark(config: BenchConfig) -> BenchReport:
    config.validate()
    problem = build_problem(config.problem, config.n)
    report = BenchReport()
    reference = None
    for rep in range(config.reps):
        state, stats = run_solver(config.method, problem, config.r, config.P, config.kappa,
                                  config.heuristic, config.seed + rep)
        report.rows.append(_row(config, rep, stats))
        if config.verify:
            if reference is None:
                reference = solve_fmm(problem)[0]
            dev = max_deviation(state, reference)[0]
            if dev > 1e-12:
                raise VerificationError(
                    f"{config.method} rep {rep} deviates from fmm by {dev:.3e}")
    report.aggregates = aggregate(report.rows)
    if config.out:
        if config.out == "-":
            report.write_csv(sys.stdout)
        else:
            with open(config.out, "w", encoding="utf-8", newline="") as fh:
                report.write_csv(fh)
    return report


class VerificationError(RuntimeError):
    pass


def max_deviation(a: SolverState, b: SolverState) -> tuple[float, int]:
    """Max-norm difference and its location; mismatched finiteness counts as infinite."""
    va, vb = a.values, b.values
    fa, fb = np.isfinite(va), np.isfinite(vb)
    diff = np.where(fa & fb, np.abs(np.where(fa, va, 0.0) - np.where(fb, vb, 0.0)), 0.0)
    diff[fa != fb] = math.inf
    idx = int(np.argmax(diff))
    return float(diff[idx]), idx


SolverFn = Callable[[Problem], tuple[SolverState, SolveStats]]


def parse_method(spec: str, r: int = 8, P: int = 4, heuristic: str = "min_inflow",
                 kappa: float = 0.0) -> tuple[str, SolverFn]:
    """``"phcm:r=8:P=4"`` style specs; omitted r/P use the given defaults."""
    name, *opts = spec.strip().split(":")
    for opt in opts:
        key, _, val = opt.partition("=")
        if key == "r":
            r = int(val)
        elif key == "P":
            P = int(val)
        else:
            raise ConfigurationError(f"unknown method option {opt!r} in {spec!r}")
    if name not in METHODS:
        raise ConfigurationError(f"unknown method {name!r}; choose from {METHODS}")
    rr = r if name in CELL_METHODS else None
    pp = P if name in THREADED_METHODS else None
    if pp is not None and pp < 1:
        raise ConfigurationError(f"thread count must be >= 1, got {pp}")
    opts = [f"r={rr}"] * (rr is not None) + [f"P={pp}"] * (pp is not None)
    label = name + (f"({','.join(opts)})" if opts else "")
    return label, lambda prob: run_solver(name, prob, rr, pp, kappa, heuristic)


@dataclass
class VerifyResult:
    max_deviation: float
    worst_pair: tuple[str, str] | None
    worst_gridpoint: tuple[int, int, int] | None
    residual: float
    tolerance: float
    residual_tolerance: float
    deviations: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tolerance and self.residual <= self.residual_tolerance

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        lines = [f"{status}: max pairwise deviation {self.max_deviation:.3e} "
                 f"(tol {self.tolerance:.1e}), residual {self.residual:.3e} "
                 f"(tol {self.residual_tolerance:.1e})"]
        if self.worst_pair and self.max_deviation > 0:
            lines.append(f"  worst: {self.worst_pair[0]} vs {self.worst_pair[1]} "
                         f"at gridpoint {self.worst_gridpoint}")
        return "\n".join(lines)


def verify_equivalence(problem: Problem, methods, tolerance: float = 1e-12,
                       residual_tolerance: float = 1e-10, r: int = 8, P: int = 4,
                       heuristic: str = "min_inflow") -> VerifyResult:
    """Run each method once and compare all solutions pairwise.

    ``methods`` holds spec strings (see ``parse_method``) or ``(label, solver)``
    pairs.  The residual is checked on the first method's solution.
    """
    solvers = [parse_method(m, r, P, heuristic) if isinstance(m, str) else tuple(m)
               for m in methods]
    if len(solvers) < 2:
        raise ConfigurationError("verification needs at least two methods")
    states = [(label, fn(problem)[0]) for label, fn in solvers]
    worst, pair, where = 0.0, None, None
    deviations = {}
    for (la, sa), (lb, sb) in itertools.combinations(states, 2):
        dev, idx = max_deviation(sa, sb)
        deviations[(la, lb)] = dev
        if pair is None or dev > worst:
            worst, pair, where = dev, (la, lb), axis_indices(idx, problem.geometry)
    res = float(np.max(np.abs(residual_field(states[0][1], problem))))
    return VerifyResult(worst, pair, where, res, tolerance, residual_tolerance, deviations)


@dataclass
class ConvergenceRow:
    n: int
    h: float
    linf: float
    order: float | None


def distance_to_center(problem: Problem) -> np.ndarray:
    g = problem.geometry
    ax = np.arange(g.side) * g.h
    z, y, x = np.meshgrid(ax, ax, ax, indexing="ij")
    dist = np.sqrt((x - 0.5) ** 2 + (y - 0.5) ** 2 + (z - 0.5) ** 2).reshape(-1)
    return dist / problem.speed.params[0]


def convergence_study(n_list, method: str = "fmm", problem="constant",
                      exact: Callable[[Problem], np.ndarray] = distance_to_center
                      ) -> list[ConvergenceRow]:
    """L-infinity error against ``exact`` (exit points excluded) for each n.

    ``problem`` is a catalog key or a callable ``n -> Problem``.
    """
    rows: list[ConvergenceRow] = []
    for n in n_list:
        prob = build_problem(problem, n) if isinstance(problem, str) else problem(n)
        state, _ = run_solver(method, prob, r=8 if method in CELL_METHODS else None,
                              P=2 if method in THREADED_METHODS else None)
        mask = ~state.is_exit.astype(bool)
        err = np.abs(state.values - exact(prob))[mask]
        linf = float(err.max()) if err.size else 0.0
        order = None
        if rows and rows[-1].linf > 0 and linf > 0:
            order = math.log2(rows[-1].linf / linf)
        rows.append(ConvergenceRow(n, prob.geometry.h, linf, order))
    return rows
