"""Command line entry point: ``eikonal-lab run | verify | convergence``."""
from __future__ import annotations

import argparse
import sys

from .bench import (METHODS, BenchConfig, VerificationError, convergence_study, run_benchmark,
                    verify_equivalence)
from .grid import CATALOG, ConfigurationError, build_problem

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eikonal-lab",
                                     description="Eikonal solver benchmarks and verification")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="time one solver configuration")
    run.add_argument("--method", required=True, choices=METHODS)
    run.add_argument("--problem", required=True, choices=CATALOG)
    run.add_argument("--n", type=int, required=True)
    run.add_argument("--r", type=int)
    run.add_argument("--threads", type=int, dest="P")
    run.add_argument("--kappa", type=float, default=0.0)
    run.add_argument("--heuristic", default="min-inflow", choices=("min-inflow", "legacy"))
    run.add_argument("--reps", type=int, default=1)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--verify", action="store_true",
                     help="check every repetition against fast marching")
    run.add_argument("--out", required=True, help="CSV output path ('-' for stdout)")

    ver = sub.add_parser("verify", help="compare solvers on one problem")
    ver.add_argument("--problem", required=True, choices=CATALOG)
    ver.add_argument("--n", type=int, required=True)
    ver.add_argument("--methods", required=True,
                     help="comma separated, e.g. fmm,lsm,hcm:r=8,phcm:r=8:P=4,dlsm:P=4")
    ver.add_argument("--tol", type=float, default=1e-12)
    ver.add_argument("--r", type=int, default=8, help="default cell size")
    ver.add_argument("--threads", type=int, default=4, dest="P", help="default thread count")

    conv = sub.add_parser("convergence", help="error study on the constant-speed problem")
    conv.add_argument("--n-list", type=_int_list, required=True)
    conv.add_argument("--method", default="fmm", choices=METHODS)
    return parser


def _cmd_run(args) -> int:
    config = BenchConfig(method=args.method, problem=args.problem, n=args.n, r=args.r,
                         P=args.P, kappa=args.kappa, heuristic=args.heuristic.replace("-", "_"),
                         reps=args.reps, out=args.out, verify=args.verify, seed=args.seed)
    try:
        report = run_benchmark(config)
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    if args.out != "-":
        med = report.aggregates[0]
        print(f"{args.method} {args.problem} n={args.n}: median {med['wall_time_s']:.4f} s "
              f"over {args.reps} rep(s), {med['sweeps']} sweeps -> {args.out}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    problem = build_problem(args.problem, args.n)
    methods = [m for m in args.methods.split(",") if m.strip()]
    result = verify_equivalence(problem, methods, args.tol, r=args.r, P=args.P)
    for (a, b), dev in result.deviations.items():
        print(f"  {a} vs {b}: {dev:.3e}")
    print(result.summary())
    return EXIT_OK if result.passed else EXIT_FAIL


def _cmd_convergence(args) -> int:
    print(f"{'n':>6} {'h':>12} {'Linf error':>14} {'order':>8}")
    for row in convergence_study(args.n_list, args.method):
        order = "" if row.order is None else f"{row.order:.3f}"
        print(f"{row.n:>6} {row.h:>12.6f} {row.linf:>14.6e} {order:>8}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "verify": _cmd_verify, "convergence": _cmd_convergence}
    try:
        return handler[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
