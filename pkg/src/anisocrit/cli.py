"""Command-line front end.

    anisocrit eig CONFIG --modes M
    anisocrit ground CONFIG --lambda X [--refine]
    anisocrit sweep CONFIG --lambda-min A --lambda-max B --steps S [--refine]
    anisocrit lambda-star CONFIG --m M --resolution R
    anisocrit bounds CONFIG [--family power|exp|tab --table FILE] [--p P]
    anisocrit certify CONFIG --p P [--tau T]
    anisocrit lift CONFIG [--refine]

Outputs go to the config's output directory (or stdout when it has none).
Exit codes: 0 success, 1 solver failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .bounds import (FFamily, certify_nonexistence, comparison_bound, exp_bound, generic_f_bound,
                     optimize_gamma, power_bound)
from .config import RunConfig, csv_text, dumps
from .domain import Box
from .eigen import locate_interval
from .errors import AnisocritError, ConfigurationError, SolverError, SpectrumError, ValidationError
from .fieldio import write_field
from .lift import energy_identity_check, omega_k, sine_field
from .nehari import ground_state, transfer
from .thresholds.sweep import CSV_COLUMNS, bracket_lambda_star, classify, sweep

log = logging.getLogger("anisocrit")

EXIT_OK, EXIT_SOLVER, EXIT_USAGE = 0, 1, 2


class UsageError(AnisocritError):
    pass


def _emit(cfg: RunConfig, name: str, text: str) -> Optional[Path]:
    if cfg.output is None:
        sys.stdout.write(text)
        return None
    cfg.output.mkdir(parents=True, exist_ok=True)
    path = cfg.output / name
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return path


def _doubled(spec):
    return tuple(2 * g for g in spec.grid)


def cmd_eig(cfg: RunConfig, args) -> int:
    if args.modes is not None and args.modes < 1:
        raise UsageError("--modes must be at least 1")
    problem = cfg.problem(modes=args.modes)
    basis = problem.basis
    rows = [(j + 1, float(v), float(r)) for j, (v, r) in enumerate(zip(basis.values, basis.residuals))]
    _emit(cfg, "eig.csv", csv_text(("index", "eigenvalue", "residual"), rows))
    return EXIT_OK


def _ground_report(problem, res, classification="unrefined", refined=None) -> dict:
    d = res.diagnostics
    loc = locate_interval(res.lam, problem.basis)
    report = {
        "lambda": res.lam,
        "m": res.m,
        "interval": [loc.lower, loc.upper],
        "ell": res.ell,
        "kappa": res.kappa,
        "residual": res.residual,
        "iterations": res.iterations,
        "converged": res.converged,
        "t": res.t,
        "z": [float(v) for v in res.z],
        "start_levels": [float(v) for v in res.start_levels],
        "classification": classification,
        "diagnostics": {
            "max_abs": d.max_abs,
            "peak": [float(v) for v in d.peak],
            "radius_nodes": d.radius_nodes,
            "radius": d.radius,
            "peak_to_xi": d.peak_to_xi,
            "mass_in_radius": d.mass_in_radius,
        },
        "grid": list(problem.spec.grid),
    }
    if refined is not None:
        report["ell_refined"] = refined.ell
        report["grid_refined"] = list(refined.u.grid.spec.grid)
    return report


def cmd_ground(cfg: RunConfig, args) -> int:
    problem = cfg.problem()
    res = ground_state(problem, args.lam, cfg.solver)
    classification, refined = "unrefined", None
    if args.refine:
        fine = cfg.problem(grid=_doubled(cfg.spec))
        start = transfer(res.w, problem.grid, fine.grid)
        refined = ground_state(fine, args.lam, cfg.solver, starts=[start])
        classification = classify(res.kappa, res, refined)
    report = _ground_report(problem, res, classification, refined)
    _emit(cfg, "ground.json", dumps(report))
    if cfg.output is not None:
        write_field(cfg.output / "ground.sbnf", problem.grid, res.u.values)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    if args.steps < 1:
        raise UsageError("--steps must be at least 1")
    if not args.lambda_max > args.lambda_min and args.steps > 1:
        raise UsageError("--lambda-max must exceed --lambda-min")
    problem = cfg.problem()
    lambdas = np.linspace(args.lambda_min, args.lambda_max, args.steps)
    refine = cfg.problem(grid=_doubled(cfg.spec)) if args.refine else None
    curve = sweep(problem, lambdas, cfg.solver, refine=refine)
    rows = [p.row() for p in curve.points]
    _emit(cfg, "sweep.csv", csv_text(CSV_COLUMNS, rows))
    bad = curve.monotonicity_violations()
    if bad:
        log.error("monotonicity violated beyond tolerance at %s", bad)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_lambda_star(cfg: RunConfig, args) -> int:
    if args.m < 0:
        raise UsageError("--m must be nonnegative")
    if not args.resolution > 0:
        raise UsageError("--resolution must be positive")
    modes = max(cfg.modes, args.m + 2)
    problems = [cfg.problem(modes=modes), cfg.problem(grid=_doubled(cfg.spec), modes=modes)]
    br = bracket_lambda_star(problems, args.m, args.resolution, cfg.solver)
    report = {
        "m": br.m,
        "lo": br.lo,
        "hi": br.hi,
        "status": br.status,
        "resolution": br.resolution,
        "interval": list(br.interval),
        "kappa": problems[-1].kappa.value,
        "grids": [list(p.spec.grid) for p in problems],
        "evaluations": [{"lambda": e.lam, "ell_coarse": e.ell_coarse, "ell_fine": e.ell_fine,
                         "margin": e.margin, "below": e.below} for e in br.evaluations],
    }
    _emit(cfg, "lambda_star.json", dumps(report))
    return EXIT_OK


def _read_table(path: Path) -> FFamily:
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read table {path}: {exc}") from exc
    if data.shape[1] != 4:
        raise ConfigurationError("table needs columns t,f,df,d2f")
    return FFamily.tabulated(*data.T)


def _certificate_dict(cert) -> dict:
    return {
        "p": cert.p, "N": cert.N, "k": cert.k, "tau": cert.tau, "t0": cert.t0, "t1": cert.t1,
        "xi0": list(cert.xi0), "xi1": list(cert.xi1), "critical_exponent": cert.critical,
        "lambda1": cert.lambda1, "threshold": cert.threshold,
        "starshape_min_0": cert.starshape_min_0, "starshape_min_1": cert.starshape_min_1,
        "t_range_ok": cert.t_range_ok, "samples": cert.samples, "valid": cert.valid,
    }


def _certify(cfg: RunConfig, p: float, tau: Optional[float]):
    problem = cfg.problem(modes=1)
    lam1 = float(problem.basis.values[0])
    return certify_nonexistence(cfg.spec, p, lam1, t0=tau)


def cmd_bounds(cfg: RunConfig, args) -> int:
    spec = cfg.spec
    k, n, alpha, beta = spec.k, spec.n, spec.alpha, spec.beta
    if k < 1:
        raise UsageError("bounds need a weight exponent k >= 1 in the domain block")
    report = {"k": k, "n": n, "alpha": alpha, "beta": beta,
              "bound_power": power_bound(k, n, beta),
              "bound_exp": exp_bound(k, n, alpha, beta)}
    family = args.family
    if family == "tab":
        if args.table is None:
            raise UsageError("--family tab needs --table")
        fam = _read_table(Path(args.table))
        report["bound_generic"] = generic_f_bound(fam, k, n, alpha, beta)
        report["family"] = "tabulated"
    else:
        if args.table is not None:
            raise UsageError("--table only applies to --family tab")
        kind = "exponential" if family == "exp" else "power"
        opt = optimize_gamma(kind, k, n, alpha, beta)
        report["family"] = kind
        report["bound_generic"] = None if opt is None else opt.bound
        report["gamma"] = None if opt is None else opt.gamma
    problem = cfg.problem(modes=1)
    report["bound_comparison"] = comparison_bound(problem.a, problem.b, k, spec, problem.grid)
    report["certificate"] = None
    if args.p is not None:
        report["certificate"] = _certificate_dict(_certify(cfg, args.p, args.tau))
    _emit(cfg, "bounds.json", dumps(report))
    return EXIT_OK


def cmd_certify(cfg: RunConfig, args) -> int:
    if args.p is None:
        raise UsageError("certify needs --p")
    cert = _certify(cfg, args.p, args.tau)
    _emit(cfg, "certify.json", dumps(_certificate_dict(cert)))
    return EXIT_OK


def cmd_lift(cfg: RunConfig, args) -> int:
    spec = cfg.spec
    if spec.k < 1:
        raise UsageError("lift needs k >= 1")
    if not isinstance(spec.shape, Box):
        raise UsageError("the lift identity check uses a box domain")
    field_ = sine_field(spec)
    res = energy_identity_check(field_, spec)
    report = {"k": spec.k, "omega_k": omega_k(spec.k), "grid": list(spec.grid),
              "lhs": res.lhs, "rhs": res.rhs, "gap": res.gap}
    if args.refine:
        fine = energy_identity_check(field_, spec.with_grid(_doubled(spec)))
        report["refined"] = {"grid": list(fine.cells), "rhs": fine.rhs, "gap": fine.gap,
                             "ratio": res.gap / fine.gap if fine.gap > 0 else None}
    _emit(cfg, "lift.json", dumps(report))
    return EXIT_OK


COMMANDS = {
    "eig": cmd_eig, "ground": cmd_ground, "sweep": cmd_sweep, "lambda-star": cmd_lambda_star,
    "bounds": cmd_bounds, "certify": cmd_certify, "lift": cmd_lift,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anisocrit", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="run configuration (JSON)")
        p.add_argument("--output", help="override the output directory")
        return p

    p = add("eig", "smallest eigenpairs, CSV index,eigenvalue,residual")
    p.add_argument("--modes", type=int, default=None)
    p = add("ground", "ground state at one lambda: report JSON and SBNF field")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--refine", action="store_true", help="also solve on the doubled grid")
    p = add("sweep", "ell over a lambda range, CSV")
    p.add_argument("--lambda-min", type=float, required=True)
    p.add_argument("--lambda-max", type=float, required=True)
    p.add_argument("--steps", type=int, default=25)
    p.add_argument("--refine", action="store_true")
    p = add("lambda-star", "bracket for lambda_{m,*}")
    p.add_argument("--m", type=int, default=0)
    p.add_argument("--resolution", type=float, default=0.5)
    p = add("bounds", "closed-form lower bounds for lambda_{0,*}")
    p.add_argument("--family", choices=("power", "exp", "tab"), default="power")
    p.add_argument("--table", help="CSV t,f,df,d2f for --family tab")
    p.add_argument("--p", type=float)
    p.add_argument("--tau", type=float)
    p = add("certify", "doubly-starshaped certificate and nonexistence threshold")
    p.add_argument("--p", type=float)
    p.add_argument("--tau", type=float)
    p = add("lift", "energy identity between Theta and Omega")
    p.add_argument("--refine", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = RunConfig.load(args.config)
        if args.output is not None:
            cfg.output = Path(args.output)
        return COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigurationError, ValidationError, SpectrumError) as exc:
        print(f"anisocrit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"anisocrit: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
