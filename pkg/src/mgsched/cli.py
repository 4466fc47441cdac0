"""``mgsched`` command line: generate, solve, study, export-mps.

Exit codes: 0 success, 2 configuration error, 3 infeasible model,
4 solver failure, 5 audit failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path
from typing import List, Optional

import numpy as np

from .config import ConfigError, MgConfig, default_config_path, load_config
from .milp.external import BridgeError
from .milp.model import SolveOptions, Status
from .milp.mps import write_mps
from .mgmodel import DRP_OFF, DRP_ON, RiskSpec, build_milp
from .pipeline import (InfeasibleModel, RiskSettings, SolverChoice, SolverFailure, StudyError,
                       _jsonable, run_case, run_step3_wcdrc, run_step5_drp_wcdrc, run_study,
                       write_csv)
from .scenarios import ScenarioSet, build_scenarios
from .validation import check_horizon, check_lambda, parse_grid

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_SOLVER, EXIT_AUDIT = 0, 2, 3, 4, 5
log = logging.getLogger("mgsched")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None,
                        help="JSON configuration (default: bundled synthetic dataset)")
    common.add_argument("--seed", type=int, default=None, help="scenario seed (default: config)")
    common.add_argument("--n-scenarios", type=int, default=None)
    common.add_argument("--horizon", type=int, default=None, help="hours to model, 1..24")
    common.add_argument("--scenarios", type=Path, default=None,
                        help="read a scenario CSV bundle instead of sampling")
    common.add_argument("--out", type=Path, default=Path("out"))
    common.add_argument("-v", "--verbose", action="store_true")

    solve_opts = argparse.ArgumentParser(add_help=False)
    solve_opts.add_argument("--solver", choices=("internal", "external", "auto"), default="auto")
    solve_opts.add_argument("--solver-command", default=None,
                            help="external command template with {mps} and {sol}")
    solve_opts.add_argument("--time-limit", type=float, default=None, help="seconds per solve")
    solve_opts.add_argument("--gap", type=float, default=1e-9, help="relative MIP gap")
    solve_opts.add_argument("--lambda-grid", default=None, help="e.g. 0.99,0.9,0.7")
    solve_opts.add_argument("--participation", default=None,
                            help="participation rate, or a grid for study (e.g. 0.2,0.25,0.3)")

    case_opts = argparse.ArgumentParser(add_help=False)
    case_opts.add_argument("--drp", choices=("on", "off"), default="off")
    case_opts.add_argument("--risk", choices=("wcdrc", "cdrc"), default="wcdrc")
    case_opts.add_argument("--lambda", dest="lam", type=float, default=None,
                           help="risk budget fraction for cdrc (default: first grid value)")
    case_opts.add_argument("--target", type=float, default=None,
                           help="target profit override (default: risk-free average)")
    case_opts.add_argument("--edr-baseline", type=float, default=None,
                           help="with --target, skip the risk-free solve for cdrc")

    ap = argparse.ArgumentParser(prog="mgsched", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write a scenario CSV bundle")
    sub.add_parser("solve", parents=[common, solve_opts, case_opts],
                   help="solve one case and audit it")
    p = sub.add_parser("study", parents=[common, solve_opts], help="run the full study")
    p.add_argument("--no-sensitivity", action="store_true")
    sub.add_parser("export-mps", parents=[common, solve_opts, case_opts],
                   help="write the model solve would build")
    return ap


def _load(args) -> tuple:
    cfg = load_config(args.config) if args.config else load_config(default_config_path())
    if args.horizon is not None:
        cfg = cfg.with_(horizon=check_horizon(args.horizon))
    if args.n_scenarios is not None:
        cfg = cfg.with_(n_scenarios=args.n_scenarios)
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    part = getattr(args, "participation", None)
    if part is not None and args.command != "study":
        grid = parse_grid(part)
        if len(grid) != 1:
            raise ConfigError("--participation takes a single value outside 'study'")
        cfg = cfg.with_participation(grid[0])
    if args.scenarios is not None:
        scen = ScenarioSet.from_csv_bundle(args.scenarios)
        if scen.horizon > cfg.horizon:
            scen = scen.truncated(cfg.horizon)
    else:
        if cfg.profiles is None:
            raise ConfigError("configuration has no profiles; pass --scenarios")
        scen = build_scenarios(cfg.profiles, cfg.n_scenarios, cfg.seed, cfg.horizon)
    return cfg, scen


def _settings(args) -> RiskSettings:
    kw = {}
    if args.lambda_grid:
        kw["lambda_grid"] = parse_grid(args.lambda_grid)
    if args.command == "study" and args.participation:
        kw["participation_grid"] = parse_grid(args.participation)
    if getattr(args, "target", None) is not None:
        kw["target_p"] = args.target
    return RiskSettings(**kw)


def _solver(args) -> SolverChoice:
    return SolverChoice(args.solver, args.solver_command,
                        SolveOptions(rel_gap=args.gap, time_limit=args.time_limit))


def _risk_for(args, cfg, scen, solver, settings) -> RiskSpec:
    if args.risk == "wcdrc":
        return RiskSpec.wcdrc()
    lam = check_lambda(args.lam if args.lam is not None else settings.lambda_grid[0])
    mode = DRP_ON if args.drp == "on" else DRP_OFF
    if args.target is not None and args.edr_baseline is not None:
        return RiskSpec.cdrc(lam, args.target, args.edr_baseline)
    step = run_step5_drp_wcdrc if mode == DRP_ON else run_step3_wcdrc
    base = step(cfg, scen, solver, args.target)
    return RiskSpec.cdrc(lam, base.target, base.edr_baseline)


def cmd_generate(args) -> int:
    cfg, scen = _load(args)
    paths = scen.to_csv_bundle(args.out)
    print(f"wrote {len(scen)} scenarios x {scen.horizon} h to {args.out} ({len(paths)} files)")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg, scen = _load(args)
    settings = _settings(args)
    solver = _solver(args)
    mode = DRP_ON if args.drp == "on" else DRP_OFF
    risk = _risk_for(args, cfg, scen, solver, settings)
    run = run_case(cfg, scen, mode, risk, solver)
    target = risk.target if risk.constrained else (
        args.target if args.target is not None else run.avg_profit)
    if run.risks is None:
        run = run.with_target(target)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    run.schedule.to_csv(out / "schedule.csv")
    run.audit.to_csv(out / "audit.csv")
    rows = [["scenario", "prob", "profit", "risk"]]
    rows += [[str(s + 1), p, pr, rk] for s, (p, pr, rk) in
             enumerate(zip(run.probs, run.profits, run.risks))]
    rows.append(["average", float(run.probs.sum()), run.avg_profit, run.edr])
    write_csv(out / "profit_risk.csv", rows)
    info = {"mode": mode, "risk": risk.kind, "lambda": risk.lambda_p if risk.constrained else None,
            "target": target, "edr_budget": risk.budget() if risk.constrained else None,
            "status": run.status.value, "objective": run.objective, "bound": run.bound,
            "avg_profit": run.avg_profit, "edr": run.edr, "nodes": run.nodes,
            "wall_time_s": run.wall_time, "seed": scen.seed, "n_scenarios": len(scen),
            "horizon": cfg.horizon, "audit_violations": len(run.audit),
            **solver.resolve(len(scen)).describe()}
    (out / "solve.json").write_text(json.dumps(_jsonable(info), indent=2) + "\n")
    print(f"{mode}/{risk.kind}: status {run.status.value}, expected profit "
          f"{run.avg_profit:.6f} $, expected downside risk {run.edr:.6f} $")
    if run.status != Status.OPTIMAL:
        print(f"warning: stopped with status {run.status.value}", file=sys.stderr)
    if not run.audit.ok:
        for v in run.audit.violations[:20]:
            print(f"audit: {v}", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


def cmd_study(args) -> int:
    cfg, scen = _load(args)
    report = run_study(cfg, scen, _settings(args), _solver(args),
                       sensitivity=not args.no_sensitivity)
    report.write(args.out)
    print(report.summary_text(), end="")
    bad = report.audit_failures()
    if bad:
        for tag, v in bad[:20]:
            print(f"audit {tag}: {v}", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


def cmd_export_mps(args) -> int:
    cfg, scen = _load(args)
    solver = _solver(args)
    mode = DRP_ON if args.drp == "on" else DRP_OFF
    risk = _risk_for(args, cfg, scen, solver, _settings(args))
    inst = build_milp(cfg, scen, mode, risk)
    out = args.out if args.out.suffix == ".mps" else args.out / "model.mps"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_mps(inst.model, out)
    s = inst.model.summary()
    print(f"wrote {out}: {s['variables']} columns ({s['integer']} integer), "
          f"{s['constraints']} rows")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "study": cmd_study,
            "export-mps": cmd_export_mps}


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            return COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleModel as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SolverFailure, BridgeError, StudyError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
