"""
Command line interface.

Subcommands: ``run``, ``verify``, ``oracle`` and ``gen-scenario``. Values
given as flags override those in the JSON scenario file, which override the
built-in defaults. The default output directory comes from
``$TVDISPATCH_OUTPUT_DIR`` or ``./tvdispatch-out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .metrics import DEFAULT_BURN_IN, emit_outputs
from .oracle import dump_solutions_csv, solve_instance
from .runner import simulate
from .scenario import (ConfigError, ScenarioConfig, SupplyFormatError, build_scenario,
                       dump_scenario, scenario_from_dict, scenario_hash)
from .verify import SUITES, run_suites

log = logging.getLogger("tvdispatch")

OUTPUT_ENV = "TVDISPATCH_OUTPUT_DIR"
EXIT_OK, EXIT_ERROR, EXIT_BOUNDS = 0, 1, 2


class CliError(Exception):
    pass


def default_output_dir():
    return Path(os.environ.get(OUTPUT_ENV, "tvdispatch-out"))


def _parse_rho(text):
    if text == "formula":
        return "formula"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("--rho must be a positive number or 'formula'") from None
    if value <= 0:
        raise argparse.ArgumentTypeError("--rho must be positive")
    return value


def load_scenario_arg(path, seed=None, steps=None):
    """
    Load a scenario config or a scenario dump.

    Returns ``(scenario, rho)`` where rho is None for the curvature formula.
    """
    if path is None:
        cfg = ScenarioConfig()
    else:
        path = Path(path)
        if not path.is_file():
            raise CliError(f"scenario file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"{path}: invalid JSON ({exc})") from None
        if isinstance(data, dict) and "instances" in data:
            if seed is not None or steps is not None:
                log.warning("--seed/--steps ignored for a scenario dump")
            scenario = scenario_from_dict(data)
            cfg_data = scenario.metadata.get("config", {})
            rho = cfg_data.get("rho_value") if cfg_data.get("rho_mode") == "fixed" else None
            return scenario, rho
        if not isinstance(data, dict):
            raise CliError(f"{path}: top level must be a JSON object")
        try:
            cfg = ScenarioConfig.from_dict(data, base_dir=path.parent)
        except ConfigError as exc:
            raise CliError(f"{path}: {exc}") from None
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if steps is not None:
        overrides["n_steps"] = steps
    try:
        if overrides:
            cfg = cfg.replace(**overrides)
        scenario = build_scenario(cfg)
    except (ConfigError, SupplyFormatError) as exc:
        raise CliError(str(exc)) from None
    rho = cfg.rho_value if cfg.rho_mode == "fixed" else None
    return scenario, rho


def cmd_run(args):
    scenario, rho = load_scenario_arg(args.scenario, args.seed, args.steps)
    if args.rho == "formula":
        rho = None
    elif args.rho is not None:
        rho = args.rho
    result = simulate(scenario, args.algo, rho, burn_in=args.burn_in)
    report = result.report
    out = Path(args.out) if args.out else default_output_dir()
    paths = emit_outputs(result.records, out, report)
    with (out / "transcript.jsonl").open("w") as fh:
        result.network.export_jsonl(fh)
    with (out / "counters.csv").open("w") as fh:
        result.network.export_counters_csv(fh)
    print(f"scenario {scenario_hash(scenario)[:12]}  algorithm={args.algo}  "
          f"rho={result.rho:.6g}  K={len(scenario)}")
    for name, p in sorted(paths.items()):
        print(f"  wrote {p}")
    if report is None:
        print("  bound check skipped: run shorter than burn-in")
        return EXIT_OK
    if args.algo == "total":
        print(f"  sup|u-u*|_G   = {report.sup_u_err_g:.6g}  <= c1 = {report.c1:.6g}  "
              f"{'PASS' if report.u_ok else 'FAIL'}")
        print(f"  sup|q-q*|^2   = {report.sup_q_err_sq:.6g}  <= c2 = {report.c2:.6g}  "
              f"{'PASS' if report.q_ok else 'FAIL'}")
    else:
        print(f"  sup|e| per coordinate = {report.sup_abs_e}")
    return EXIT_OK if report.passed else EXIT_BOUNDS


def cmd_verify(args):
    names = list(SUITES) if args.suite == "all" else [args.suite]
    results = run_suites(names, cases=args.cases, seed=args.seed)
    print(f"{'suite':<12} {'cases':>6} {'metric':>12} {'limit':>10} {'time[s]':>8}  result")
    for r in results:
        print(f"{r.name:<12} {r.cases:>6} {r.metric:>12.3e} {r.threshold:>10.1e} "
              f"{r.seconds:>8.2f}  {'PASS' if r.passed else 'FAIL'}  {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_ERROR


def cmd_oracle(args):
    scenario, _ = load_scenario_arg(args.scenario, args.seed, args.steps)
    solutions = [solve_instance(inst) for inst in scenario]
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        with open(args.out, "w", newline="") as fh:
            dump_solutions_csv(solutions, fh)
    else:
        dump_solutions_csv(solutions, sys.stdout)
    return EXIT_OK


def cmd_gen_scenario(args):
    scenario, _ = load_scenario_arg(args.config, args.seed, args.steps)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dump_scenario(scenario, out)
    print(f"wrote {out} ({len(scenario)} steps, sha256 {scenario_hash(scenario)[:12]})")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tvdispatch", description="Time-varying ADMM economic dispatch simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    scen.add_argument("--steps", type=int, default=None, help="override the number of steps K")

    p = sub.add_parser("run", parents=[scen], help="simulate one engine and write reports")
    p.add_argument("--algo", choices=("total", "partial"), default="total")
    p.add_argument("--scenario", help="scenario config or dump (JSON); defaults built in")
    p.add_argument("--rho", type=_parse_rho, default=None,
                   help="penalty value, or 'formula' for sqrt(L*sigma/(N*R))")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./tvdispatch-out)")
    p.add_argument("--burn-in", type=int, default=DEFAULT_BURN_IN, dest="burn_in")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("verify", help="run randomized property suites")
    p.add_argument("--suite", choices=("all",) + tuple(SUITES), default="all")
    p.add_argument("--cases", type=int, default=1000)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle", parents=[scen], help="dump the oracle series as CSV")
    p.add_argument("--scenario")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("gen-scenario", parents=[scen], help="write a scenario dump")
    p.add_argument("--config", help="scenario config JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_scenario)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
