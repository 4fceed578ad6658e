"""Command-line interface.

Exit codes: 0 ok, 1 usage error, 2 solver hit max_iters, 3 solver diverged,
4 cone hypothesis violated (0 in the shifted subdifferential).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .experiments import (
    PhaseGrid,
    PhaseProtocol,
    canonical_method,
    compare_methods,
    contour_csv_text,
    extract_contour,
    run_phase_grid,
    write_metadata,
)
from .geometry import (
    BERNOULLI_PSI2_NORM,
    ConeDescriptor,
    ConeHypothesisError,
    compute_v,
    mc_width_estimate,
    sample_size_bound,
    width_bound_sq,
)
from .model import CASES, SensingProblem, read_matrix, read_vector, write_vector
from .prox import Regularizer
from .solvers import SolverConfig, solve

EXIT_OK, EXIT_USAGE, EXIT_MAX_ITERS, EXIT_DIVERGED, EXIT_HYPOTHESIS = 0, 1, 2, 3, 4
SEED_ENV = "PRIORCS_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    return int(raw) if raw else 0


def _solver_args(p):
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--max-iters", type=int, default=5000)
    p.add_argument("--tol-abs", type=float, default=1e-6)
    p.add_argument("--tol-rel", type=float, default=1e-5)
    p.add_argument("--no-adaptive-rho", action="store_true",
                   help="keep the penalty fixed")


def _solver_config(args) -> SolverConfig:
    return SolverConfig(rho=args.rho, max_iters=args.max_iters, tol_abs=args.tol_abs,
                        tol_rel=args.tol_rel, adaptive_rho=not args.no_adaptive_rho)


def _protocol_args(p):
    p.add_argument("--n", type=int, default=128)
    p.add_argument("--step", type=int, default=2)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--tol", type=float, default=1e-2)
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--case", default="a")
    p.add_argument("--lam", type=float, default=1.0,
                   help="prior weight for l1l1/l1l2 (prior = shift / lam)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    _solver_args(p)


def _protocol(args, method: str) -> PhaseProtocol:
    if args.case not in CASES:
        raise UsageError(f"unknown case {args.case!r}; expected one of {', '.join(CASES)}")
    try:
        method = canonical_method(method)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    seed = _default_seed() if args.seed is None else args.seed
    return PhaseProtocol(n=args.n, grid_step=args.step, trials_per_cell=args.trials,
                         tol=args.tol, delta=args.delta, case_tag=args.case, method=method,
                         base_seed=seed, solver=_solver_config(args), prior_weight=args.lam)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="priorcs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="recover a signal from A and y")
    p.add_argument("--matrix", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--method", required=True, choices=["lasso", "mc", "l1l1", "l1l2"])
    p.add_argument("--shift", help="shift vector p = lam*phi (method mc)")
    p.add_argument("--prior", help="prior vector phi (methods l1l1, l1l2)")
    p.add_argument("--lam", type=float, help="prior weight (methods l1l1, l1l2)")
    p.add_argument("--delta", type=float, default=0.0)
    p.add_argument("--out", required=True, help="solution vector CSV")
    p.add_argument("--report", help="key=value report (default: <out>.meta)")
    _solver_args(p)

    p = sub.add_parser("geom", help="cone geometry quantities")
    gsub = p.add_subparsers(dest="geom_command", required=True, parser_class=_Parser)
    g = gsub.add_parser("v", help="v parameter of a signal/shift pair")
    g.add_argument("--signal", required=True)
    g.add_argument("--shift", required=True)
    g = gsub.add_parser("width", help="squared-width bound")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--s", type=int, required=True)
    g.add_argument("--v", type=float, required=True)
    g = gsub.add_parser("mc", help="Monte-Carlo statistical dimension")
    g.add_argument("--signal", required=True)
    g.add_argument("--shift", required=True)
    g.add_argument("--samples", type=int, default=100_000)
    g.add_argument("--seed", type=int, default=None)
    g = gsub.add_parser("predict", help="measurement-count predictor")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--s", type=int, required=True)
    g.add_argument("--v", type=float, required=True)
    g.add_argument("--K", type=float, default=BERNOULLI_PSI2_NORM)
    g.add_argument("--C", type=float, default=1.0)
    g.add_argument("--eps", type=float, default=0.0)

    p = sub.add_parser("phase", help="phase-transition grid")
    _protocol_args(p)
    p.add_argument("--method", default="mc")
    p.add_argument("--out", required=True)

    p = sub.add_parser("contour", help="transition curve from a grid CSV")
    p.add_argument("--grid", required=True)
    p.add_argument("--level", type=float, default=0.5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("compare", help="transition curves of several methods")
    _protocol_args(p)
    p.add_argument("--methods", default="mc,l1l1,l1l2")
    p.add_argument("--level", type=float, default=0.5)
    p.add_argument("--out", required=True)
    return parser


def _kv(items) -> str:
    return "".join(f"{k}={v}\n" for k, v in items)


def cmd_solve(args) -> int:
    A = read_matrix(args.matrix)
    y = read_vector(args.obs)
    problem = SensingProblem(A, y, args.delta)
    if args.method == "lasso":
        reg = Regularizer.lasso()
    elif args.method == "mc":
        if not args.shift:
            raise UsageError("--method mc requires --shift")
        reg = Regularizer.max_corr(read_vector(args.shift))
    else:
        if not args.prior or args.lam is None:
            raise UsageError(f"--method {args.method} requires --prior and --lam")
        reg = Regularizer(canonical_method(args.method), prior=read_vector(args.prior),
                          lam=args.lam)
    report = solve(problem, reg, _solver_config(args))
    write_vector(args.out, report.solution)
    text = _kv([
        ("status", report.status),
        ("iterations", report.iterations),
        ("primal_residual", repr(report.primal_residual)),
        ("dual_residual", repr(report.dual_residual)),
        ("objective", repr(report.objective_value)),
        ("method", reg.kind),
        ("delta", repr(args.delta)),
        ("matrix", args.matrix),
        ("obs", args.obs),
    ])
    Path(args.report or f"{args.out}.meta").write_text(text)
    sys.stdout.write(text)
    return {"converged": EXIT_OK, "max_iters": EXIT_MAX_ITERS}.get(report.status, EXIT_DIVERGED)


def cmd_geom(args) -> int:
    sub = args.geom_command
    if sub in ("v", "mc"):
        cone = ConeDescriptor(read_vector(args.signal), read_vector(args.shift))
        if sub == "v":
            print(f"v={compute_v(cone):.12g}")
            return EXIT_OK
        seed = _default_seed() if args.seed is None else args.seed
        try:
            est = mc_width_estimate(cone, args.samples, np.random.default_rng(seed))
        except ConeHypothesisError as exc:
            print(f"priorcs geom mc: hypothesis violated: {exc}", file=sys.stderr)
            return EXIT_HYPOTHESIS
        sys.stdout.write(_kv([
            ("mean_sq_dist", repr(est.mean_sq_dist)),
            ("std_error", repr(est.std_error)),
            ("closed_form_bound", repr(est.closed_form_bound)),
            ("samples", est.samples),
        ]))
        return EXIT_OK
    wsq = width_bound_sq(args.n, args.s, args.v)
    if sub == "width":
        print(f"width_sq={wsq:.12g}")
        return EXIT_OK
    m = sample_size_bound(wsq, args.K, args.C, args.eps)
    sys.stdout.write(_kv([("width_sq", f"{wsq:.12g}"), ("m_predicted", f"{m:.12g}")]))
    return EXIT_OK


def _run_meta(args, extra) -> dict[str, str]:
    return {"command": args.command, "threads": str(args.threads), **extra}


def cmd_phase(args) -> int:
    protocol = _protocol(args, args.method)
    grid = run_phase_grid(protocol, workers=args.threads)
    grid.write_csv(args.out)
    write_metadata(f"{args.out}.meta", _run_meta(args, grid.metadata))
    return EXIT_OK


def cmd_contour(args) -> int:
    grid = PhaseGrid.read_csv(args.grid)
    contour = extract_contour(grid, args.level)
    Path(args.out).write_text(contour_csv_text(contour))
    meta = {"command": "contour", "grid": args.grid, "level": repr(args.level)}
    meta.update({f"grid.{k}": v for k, v in grid.metadata.items()})
    write_metadata(f"{args.out}.meta", meta)
    return EXIT_OK


def cmd_compare(args) -> int:
    protocols = [_protocol(args, tok.strip()) for tok in args.methods.split(",") if tok.strip()]
    table = compare_methods(protocols, args.level, workers=args.threads)
    Path(args.out).write_text(table.csv_text())
    first = table.grids[table.methods[0]].metadata
    meta = _run_meta(args, {k: v for k, v in first.items() if k != "method"})
    meta["methods"] = ",".join(table.methods)
    meta["level"] = repr(args.level)
    for k in table.methods:
        for key, val in table.grids[k].metadata.items():
            if key.startswith("status."):
                meta[f"{k}.{key}"] = val
    write_metadata(f"{args.out}.meta", meta)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "geom": cmd_geom, "phase": cmd_phase,
            "contour": cmd_contour, "compare": cmd_compare}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"priorcs {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"priorcs {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
