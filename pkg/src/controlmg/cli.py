"""Command-line experiment runner.

Exit codes: 0 all runs completed, 1 runtime or I/O failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiments
from .experiments import ExperimentSpec
from .results import emit

log = logging.getLogger("controlmg")


def _common(p: argparse.ArgumentParser, mg: bool = False) -> None:
    p.add_argument("--beta", type=float, nargs="+", default=[1e-2], help="regularization values")
    p.add_argument("--n", type=int, nargs="+", default=[64], dest="n_cells",
                   help="cells per side (h = 1/n), powers of two >= 8")
    p.add_argument("--nu", type=int, nargs="+", default=[1], help="total smoothing steps")
    p.add_argument("--variant", choices=("stiffness", "diag"), default="stiffness")
    p.add_argument("--omega", type=float, default=None, help="relaxation weight (default: optimal)")
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("-o", "--output", default="-", help="output path ('-' for stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--timing", action="store_true",
                   help="fill runtime_ms (outputs are then no longer byte-reproducible)")
    if mg:
        p.add_argument("--cycle", choices=("V", "W"), default="W")
        p.add_argument("--schur", choices=("exact", "inner"), default="exact",
                       help="exact Schur solve or inner V(2,2) Jacobi multigrid")
        p.add_argument("--omega-j", type=float, default=0.8)
        p.add_argument("--inner-cycles", type=int, default=3)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--export-matrices", metavar="DIR", default=None,
                       help="write finest-level M, K, A_fd, L as MatrixMarket files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="controlmg", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lfa-smooth", help="LFA smoothing factor (optimal omega unless --omega)")
    _common(p)
    p = sub.add_parser("lfa-two-grid", help="LFA two-grid convergence factor")
    _common(p)
    p = sub.add_parser("mg-measure", help="measured multigrid factor on the homogeneous problem")
    _common(p, mg=True)
    p.add_argument("--n-cycles", type=int, default=100)
    p = sub.add_parser("mg-solve", help="iterations to reduce the residual by --tol")
    _common(p, mg=True)
    p.add_argument("--table", type=int, choices=(5, 6), default=None,
                   help="use the table's setup: corner problem, inexact BSR, W-cycles")
    p.add_argument("--problem", choices=("corner", "zero"), default="corner")
    p.add_argument("--initial", choices=("random", "zero"), default="random")
    p.add_argument("--tol", type=float, default=1e-10)
    p = sub.add_parser("reproduce", help="rerun a table and diff against the tabulated values")
    p.add_argument("table", choices=experiments.TABLES)
    p.add_argument("--include-512", action="store_true", help="add the h=1/512 rows (tables 5-6)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--timing", action="store_true")
    return parser


def spec_from_args(args: argparse.Namespace) -> ExperimentSpec:
    if args.command == "reproduce":
        return ExperimentSpec(command="reproduce", table=args.table, include_512=args.include_512,
                              seed=args.seed, timing=args.timing)
    kw = dict(command=args.command, betas=args.beta, n_cells=args.n_cells, nus=args.nu,
              variant=args.variant, omega=args.omega, alpha=args.alpha, timing=args.timing)
    if args.command in ("mg-measure", "mg-solve"):
        kw.update(cycle=args.cycle, schur="exact" if args.schur == "exact" else "inner_mg",
                  omega_J=args.omega_j, inner_cycles=args.inner_cycles, seed=args.seed,
                  export_dir=args.export_matrices)
    if args.command == "mg-measure":
        kw["n_cycles"] = args.n_cycles
    if args.command == "mg-solve":
        kw.update(problem=args.problem, initial=args.initial, tol=args.tol)
        if args.table is not None:
            kw.update(schur="inner_mg", cycle="W", problem="corner")
    return ExperimentSpec(**kw)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = spec_from_args(args)
    except ValueError as exc:
        parser.error(str(exc))  # exits with 2

    try:
        if spec.command == "reproduce":
            rows, diff = experiments.reproduce(spec)
        else:
            rows, diff = experiments.run(spec), None
    except Exception as exc:  # noqa: BLE001 - any failed run maps to exit code 1
        log.error("run failed: %s", exc)
        return 1

    try:
        text = emit(rows, args.format, args.output)
    except OSError as exc:
        log.error("cannot write %s: %s", args.output, exc)
        return 1
    to_stdout = args.output == "-"
    if to_stdout:
        sys.stdout.write(text)
    if diff is not None:
        report = experiments.format_diff(spec.table, diff)
        (sys.stderr if to_stdout else sys.stdout).write(report)
    return 0


if __name__ == "__main__":
    sys.exit(main())
