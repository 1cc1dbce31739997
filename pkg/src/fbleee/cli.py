"""Command-line entry point: ``fbleee {eval,opt-eps,opt-power,solve,sweep,cross-check}``.

SNR is given and reported in dB here; everything below this layer works in linear SNR.
Exit status: 0 success, 2 invalid input, 3 infeasible problem.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import FIELDS, ConfigError, ParameterBundle, default_bundle, parse_config
from .effcap import (InfeasibleError, Method, effective_capacity, eee, expected_rate, resolve_point,
                     transmit_probability)
from .optimize import (DegenerateProblemError, db_to_linear, linear_to_db, optimal_epsilon_details,
                       optimal_power, solve_constrained)
from .sweeps import CsvTable, Figure, cross_check, default_spec, run_sweep

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3

log = logging.getLogger("fbleee")


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key-value config file (INI sections)")
    common.add_argument("--out", type=Path, help="write CSV here instead of standard output")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    common.add_argument("--shannon", action="store_true", help="drop the finite-blocklength penalty")
    common.add_argument("-v", "--verbose", action="store_true")
    group = common.add_argument_group("config overrides (same names as the config keys)")
    for key, (section, _, _) in FIELDS.items():
        group.add_argument(f"--{key}", metavar=key.upper(), help=f"[{section}] {key}")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(prog="fbleee", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", parents=[common], help="EC and EEE at one operating point")
    p.add_argument("--cross-check", action="store_true", help="add the quadrature-oracle EC")
    sub.add_parser("opt-eps", parents=[common], help="EC-maximizing error probability at snr_db")
    sub.add_parser("opt-power", parents=[common], help="EEE-maximizing SNR at fixed epsilon")
    p = sub.add_parser("solve", parents=[common], help="buffer-constrained joint maximization")
    p.add_argument("--relax-rate", action="store_true", help="report, but do not enforce, EC >= arrival_rate")
    for name, helptext in (("sweep", "figure-reproduction sweep"),
                           ("cross-check", "closed form vs quadrature vs Monte Carlo")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--figure", type=int, choices=[f.value for f in Figure], required=True)
        p.add_argument("--count", type=int, help="grid points (default per figure)")
    return parser


def load_bundle(args) -> ParameterBundle:
    overrides = {key: getattr(args, key) for key in FIELDS if getattr(args, key) is not None}
    # a direct delay exponent and the (delta, lambda_out) pair exclude each other
    if "theta" in overrides:
        overrides.setdefault("delta", "")
        overrides.setdefault("lambda_out", "")
    elif "delta" in overrides or "lambda_out" in overrides:
        overrides["theta"] = ""
    if args.config is not None:
        if not args.config.is_file():
            raise ConfigError(f"config file not found: {args.config}")
        return parse_config(args.config, overrides)
    return default_bundle(overrides)


def _point_table(bundle: ParameterBundle, command: str, columns: dict, notes=()) -> CsvTable:
    footer = [f"tool=fbleee {__version__}", f"kind={command}", f"config_sha256={bundle.config_hash()}",
              f"method={bundle.method.value}", *notes]
    return CsvTable(list(columns), [list(columns.values())], footer)


def cmd_eval(args, bundle):
    cfg = bundle.channel
    pm = bundle.power
    point = resolve_point(cfg, bundle.qos, pm, bundle.rho, bundle.epsilon, args.shannon)
    if point.theta == 0:
        raise InfeasibleError("delay constraint is slack (theta = 0); effective capacity is the mean rate")
    columns = {
        "snr_db": bundle.snr_db, "epsilon": point.epsilon, "theta": point.theta,
        "p_nb": transmit_probability(cfg, bundle.qos, pm, point.rho, point.epsilon, args.shannon),
        "mean_rate [bpcu]": expected_rate(cfg, point.rho, point.epsilon, args.shannon),
        "ec [bpcu]": effective_capacity(cfg, point, bundle.method, args.shannon),
        "eee [bpcu/W]": eee(cfg, bundle.qos, pm, point, bundle.method, shannon=args.shannon),
    }
    if args.cross_check:
        oracle = effective_capacity(cfg, point, Method.ORACLE, args.shannon)
        columns["ec_oracle [bpcu]"] = oracle
        columns["rel_err_vs_oracle"] = abs(columns["ec [bpcu]"] - oracle) / abs(oracle)
    return _point_table(bundle, "eval", columns), EXIT_OK


def cmd_opt_eps(args, bundle):
    cfg = bundle.channel
    point = resolve_point(cfg, bundle.qos, bundle.power, bundle.rho, bundle.epsilon, args.shannon)
    if point.theta == 0:
        raise InfeasibleError("delay constraint is slack (theta = 0); nothing to optimize")
    sol = optimal_epsilon_details(cfg, point.rho, point.theta, args.shannon)
    ec = effective_capacity(cfg, replace(point, epsilon=sol.epsilon), bundle.method, args.shannon)
    if sol.at_boundary:
        log.warning("epsilon* sits on the search boundary")
    columns = {"snr_db": bundle.snr_db, "theta": point.theta, "epsilon_star": sol.epsilon,
               "psi": sol.objective, "ec [bpcu]": ec, "at_boundary": sol.at_boundary}
    return _point_table(bundle, "opt-eps", columns), EXIT_OK


def cmd_opt_power(args, bundle):
    cfg = bundle.channel
    sol = optimal_power(cfg, bundle.qos, bundle.power, bundle.epsilon, shannon=args.shannon,
                        rho_hi=max(1e4, float(db_to_linear(bundle.rho_max_db))))
    for key, value in sol.diagnostics.items():
        log.info("%s: %s", key, value)
    columns = {
        "epsilon": bundle.epsilon, "rho_star_db": float(linear_to_db(sol.rho)), "eee [bpcu/W]": sol.eee,
        "rho_root_db": None if sol.rho_root is None else float(linear_to_db(sol.rho_root)),
        "rho_golden_db": float(linear_to_db(sol.rho_golden)),
        "route_disagreement_db": sol.disagreement_db, "bracketed": sol.bracketed,
    }
    return _point_table(bundle, "opt-power", columns), EXIT_OK


def cmd_solve(args, bundle):
    cons = bundle.constraints(require_rate=not args.relax_rate)
    res = solve_constrained(bundle.channel, cons, shannon=args.shannon)
    for key, value in res.diagnostics.items():
        if key != "bracket_history":
            log.info("%s: %s", key, value)
    if not math.isfinite(res.rho_star):
        raise InfeasibleError(res.diagnostics.get("reason", "no admissible operating point"))
    columns = {
        "rho_star_db": float(linear_to_db(res.rho_star)), "epsilon_star": res.epsilon_star,
        "theta_star": res.theta_star, "p_nb": res.p_nb, "ec_star [bpcu]": res.ec_star,
        "eee_star [bpcu/W]": res.eee_star, "feasible": res.feasible,
    }
    notes = [f"reason={res.diagnostics['reason']}"] if "reason" in res.diagnostics else []
    status = EXIT_OK if res.feasible or args.relax_rate else EXIT_INFEASIBLE
    if status == EXIT_INFEASIBLE:
        print(f"infeasible: {res.diagnostics.get('reason', 'constraints not met at the optimum')}", file=sys.stderr)
    return _point_table(bundle, "solve", columns, notes), status


def cmd_sweep(args, bundle):
    spec = default_spec(args.figure, bundle, args.count)
    return run_sweep(spec, jobs=args.jobs), EXIT_OK


def cmd_cross_check(args, bundle):
    spec = default_spec(args.figure, bundle, args.count)
    table = cross_check(spec, bundle.samples, bundle.seed, jobs=args.jobs)
    for line in table.footer:
        if line.startswith(("max_rel_err", "monte_carlo")):
            log.info("%s", line)
    return table, EXIT_OK


COMMANDS = {
    "eval": cmd_eval, "opt-eps": cmd_opt_eps, "opt-power": cmd_opt_power, "solve": cmd_solve,
    "sweep": cmd_sweep, "cross-check": cmd_cross_check,
}


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        out.write_text(text, encoding="utf-8", newline="\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        if args.jobs < 1:
            raise ValueError("--jobs must be >= 1")
        bundle = load_bundle(args)
        table, status = COMMANDS[args.command](args, bundle)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DegenerateProblemError as exc:
        print(f"degenerate problem: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    _emit(table.to_csv(), args.out)
    return status


if __name__ == "__main__":
    sys.exit(main())
