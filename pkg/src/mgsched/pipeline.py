"""Study orchestration: baselines, risk-budget sweeps, DRP comparison, sensitivity."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import MgConfig
from .milp import external
from .milp.bnb import solve as internal_solve
from .milp.model import SolveOptions, Solution, Status
from .mgmodel import (CDRC, DRP_OFF, DRP_ON, WCDRC, AuditReport, DecisionSchedule, MgInstance,
                      RiskSpec, Violation, audit_solution, build_milp, compute_profit,
                      supply_shortfall_hours)
from .riskmeasures import downside_risk, edr_bound, expected_downside_risk
from .scenarios import ScenarioSet

DEFAULT_LAMBDAS = (0.99, 0.95, 0.9, 0.85, 0.8, 0.75, 0.7)
DEFAULT_PARTICIPATION = (0.20, 0.25, 0.30)
FULL_TIME_LIMIT = 600.0


class StudyError(RuntimeError):
    exit_code = 4


class InfeasibleModel(StudyError):
    exit_code = 3


class SolverFailure(StudyError):
    exit_code = 4


@dataclass(frozen=True)
class RiskSettings:
    lambda_grid: Tuple[float, ...] = DEFAULT_LAMBDAS
    participation_grid: Tuple[float, ...] = DEFAULT_PARTICIPATION
    target_p: Optional[float] = None
    literal_w_r: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))
        object.__setattr__(self, "participation_grid",
                           tuple(float(v) for v in self.participation_grid))
        if not self.lambda_grid or not self.participation_grid:
            raise ValueError("lambda and participation grids must be non-empty")
        if any(not 0 < v <= 1 for v in self.lambda_grid):
            raise ValueError("every lambda must lie in (0, 1]")
        if any(not 0 <= v <= 1 for v in self.participation_grid):
            raise ValueError("every participation rate must lie in [0, 1]")


@dataclass
class SolverChoice:
    """Which MILP engine to use.

    ``"auto"`` picks the internal solver for single-scenario runs and the
    external bridge for larger ones when a command is configured; otherwise
    the internal solver with ``FULL_TIME_LIMIT``.
    """

    name: str = "internal"
    command: Optional[str] = None
    options: SolveOptions = field(default_factory=lambda: SolveOptions(rel_gap=1e-9))
    timeout: Optional[float] = None

    def __post_init__(self):
        if self.name not in ("internal", "external", "auto"):
            raise ValueError(f"solver must be internal, external or auto, got {self.name!r}")

    def resolve(self, n_scenarios: int) -> "SolverChoice":
        if self.name != "auto":
            return self
        cmd = self.command or _env_command()
        if n_scenarios > 1 and cmd:
            return SolverChoice("external", cmd, self.options, self.timeout)
        opts = self.options
        if n_scenarios > 1 and opts.time_limit is None:
            opts = replace(opts, time_limit=FULL_TIME_LIMIT)
        return SolverChoice("internal", None, opts, self.timeout)

    def describe(self) -> dict:
        return {"solver": self.name, "command": self.command, "rel_gap": self.options.rel_gap,
                "int_tol": self.options.int_tol, "time_limit": self.options.time_limit}


def _env_command() -> Optional[str]:
    import os

    return os.environ.get(external.ENV_VAR)


def solve_model(inst: MgInstance, solver: SolverChoice) -> Solution:
    choice = solver.resolve(len(inst.scen))
    if choice.name == "external":
        try:
            return external.external_solve(inst.model, choice.command, choice.timeout)
        except external.BridgeError as exc:
            raise SolverFailure(f"external solver: {exc}") from exc
    return internal_solve(inst.model, choice.options)


@dataclass
class RunResult:
    mode: str
    risk: RiskSpec
    status: Status
    profits: np.ndarray
    probs: np.ndarray
    schedule: Optional[DecisionSchedule]
    audit: Optional[AuditReport]
    objective: float = math.nan
    bound: float = math.nan
    wall_time: float = 0.0
    nodes: int = 0
    risks: Optional[np.ndarray] = None
    target: Optional[float] = None

    @property
    def feasible(self) -> bool:
        return self.schedule is not None

    @property
    def avg_profit(self) -> float:
        return float(self.probs @ self.profits) if self.feasible else math.nan

    @property
    def edr(self) -> float:
        if self.risks is None:
            return math.nan
        return expected_downside_risk(self.risks, self.probs)

    @property
    def total_risk(self) -> float:
        return float(np.sum(self.risks)) if self.risks is not None else math.nan

    def with_target(self, target: float) -> "RunResult":
        risks = np.array([downside_risk(p, target) for p in self.profits])
        return replace(self, risks=risks, target=target)


def _concat_schedules(parts: Sequence[DecisionSchedule]) -> DecisionSchedule:
    data = {}
    for name, val in parts[0].__dict__.items():
        if val is None:
            data[name] = None
        else:
            data[name] = np.concatenate([getattr(p, name) for p in parts], axis=-1)
    return DecisionSchedule(**data)


def _diagnose_infeasible(cfg: MgConfig, scen: ScenarioSet, mode: str) -> str:
    short = supply_shortfall_hours(cfg, scen, mode)
    if short:
        where = ", ".join(f"t={t + 1}/s={s + 1}" for t, s in short[:8])
        return f"power_balance: load exceeds maximum supply at {where}"
    return "no single hour is short of supply; the constraint set is jointly infeasible"


def run_case(cfg: MgConfig, scen: ScenarioSet, mode: str = DRP_OFF,
             risk: Optional[RiskSpec] = None, solver: Optional[SolverChoice] = None,
             raise_infeasible: bool = True) -> RunResult:
    """Build, solve, extract and audit one (mode, risk) case.

    Risk-free runs without first-stage coupling are separable, so each
    scenario is then solved on its own.
    """
    risk = risk or RiskSpec.wcdrc()
    solver = solver or SolverChoice()
    t0 = time.monotonic()
    if risk.kind == WCDRC and not cfg.first_stage and len(scen) > 1:
        parts, nodes, statuses = [], 0, []
        for s in range(len(scen)):
            sub = run_case(cfg, scen.subset([s]), mode, risk, solver, raise_infeasible)
            if not sub.feasible:
                return replace(sub, probs=scen.probs, profits=np.full(len(scen), math.nan))
            parts.append(sub)
            nodes += sub.nodes
            statuses.append(sub.status)
        sched = _concat_schedules([p.schedule for p in parts])
        profits = np.concatenate([p.profits for p in parts])
        status = Status.OPTIMAL if all(st == Status.OPTIMAL for st in statuses) else \
            next(st for st in statuses if st != Status.OPTIMAL)
        audit = audit_solution(sched, scen, cfg, mode, risk)
        obj = float(scen.probs @ profits)
        return RunResult(mode, risk, status, profits, scen.probs, sched, audit, obj,
                         float(scen.probs @ np.array([p.bound for p in parts])),
                         time.monotonic() - t0, nodes)

    inst = build_milp(cfg, scen, mode, risk)
    sol = solve_model(inst, solver)
    wall = time.monotonic() - t0
    if sol.status == Status.INFEASIBLE:
        if raise_infeasible:
            raise InfeasibleModel(f"{mode}/{risk.kind} infeasible: "
                                  f"{_diagnose_infeasible(cfg, scen, mode)}")
        return RunResult(mode, risk, sol.status, np.full(len(scen), math.nan), scen.probs,
                         None, None, wall_time=wall, nodes=sol.nodes)
    if not sol.has_point:
        raise SolverFailure(f"{mode}/{risk.kind}: solver returned {sol.status.value} "
                            f"without a solution ({sol.message})")
    sched = inst.schedule(sol.x)
    profits = compute_profit(sched, scen, cfg, mode)
    audit = audit_solution(sched, scen, cfg, mode, risk)
    res = RunResult(mode, risk, sol.status, profits, scen.probs, sched, audit, sol.objective,
                    sol.bound, wall, sol.nodes)
    if risk.constrained:
        res = res.with_target(risk.target)
    return res


@dataclass
class Baseline:
    """Risk-free run together with the target and expected risk it defines."""

    run: RunResult
    target: float
    edr_baseline: float

    @property
    def profits(self) -> np.ndarray:
        return self.run.profits

    @property
    def risks(self) -> np.ndarray:
        return self.run.risks


def _baseline(cfg, scen, mode, solver, target=None) -> Baseline:
    run = run_case(cfg, scen, mode, RiskSpec.wcdrc(), solver)
    tgt = float(scen.probs @ run.profits) if target is None else float(target)
    run = run.with_target(tgt)
    return Baseline(run, tgt, run.edr)


def run_step3_wcdrc(cfg: MgConfig, scen: ScenarioSet, solver: Optional[SolverChoice] = None,
                    target: Optional[float] = None) -> Baseline:
    return _baseline(cfg, scen, DRP_OFF, solver, target)


def run_step5_drp_wcdrc(cfg: MgConfig, scen: ScenarioSet, solver: Optional[SolverChoice] = None,
                        target: Optional[float] = None) -> Baseline:
    return _baseline(cfg, scen, DRP_ON, solver, target)


@dataclass
class LambdaSweep:
    mode: str
    baseline: Baseline
    runs: Dict[float, RunResult]

    def rows(self) -> List[dict]:
        base = self.baseline
        out = []
        for lam, r in self.runs.items():
            bound = edr_bound(lam, base.edr_baseline)
            avg = r.avg_profit
            edr = r.edr
            out.append({
                "lambda": lam, "status": r.status.value, "avg_profit": avg,
                "total_rip": r.total_risk, "avg_rip": edr, "edr_bound": bound,
                "profit_reduction_pct": _pct(base.run.avg_profit, avg),
                "rip_reduction_pct": _pct(base.edr_baseline, edr),
            })
        return out


def _pct(base: float, value: float) -> float:
    if not math.isfinite(value) or base == 0:
        return math.nan
    return 100.0 * (base - value) / base


def _sweep(cfg, scen, mode, settings, baseline, solver) -> LambdaSweep:
    runs = {}
    for lam in settings.lambda_grid:
        spec = RiskSpec(CDRC, lam, baseline.target, baseline.edr_baseline, settings.literal_w_r)
        runs[lam] = run_case(cfg, scen, mode, spec, solver, raise_infeasible=False)
    return LambdaSweep(mode, baseline, runs)


def run_step4_cdrc(cfg: MgConfig, scen: ScenarioSet, settings: Optional[RiskSettings] = None,
                   solver: Optional[SolverChoice] = None,
                   baseline: Optional[Baseline] = None) -> LambdaSweep:
    settings = settings or RiskSettings()
    baseline = baseline or run_step3_wcdrc(cfg, scen, solver, settings.target_p)
    return _sweep(cfg, scen, DRP_OFF, settings, baseline, solver)


def run_step6_drp_cdrc(cfg: MgConfig, scen: ScenarioSet, settings: Optional[RiskSettings] = None,
                       solver: Optional[SolverChoice] = None,
                       baseline: Optional[Baseline] = None) -> LambdaSweep:
    settings = settings or RiskSettings()
    baseline = baseline or run_step5_drp_wcdrc(cfg, scen, solver, settings.target_p)
    return _sweep(cfg, scen, DRP_ON, settings, baseline, solver)


@dataclass
class Sensitivity:
    participation: Tuple[float, ...]
    sweeps: Dict[float, LambdaSweep]

    def surface(self, key: str) -> List[dict]:
        """One row per participation rate: the risk-free value, then one per lambda."""
        rows = []
        for p in self.participation:
            sw = self.sweeps[p]
            if key == "profit":
                row = {"participation": p, "target": sw.baseline.target,
                       "wcdrc": sw.baseline.run.avg_profit}
                row.update({f"{lam:g}": r.avg_profit for lam, r in sw.runs.items()})
            else:
                row = {"participation": p, "target": sw.baseline.target,
                       "wcdrc": sw.baseline.edr_baseline}
                row.update({f"{lam:g}": r.edr for lam, r in sw.runs.items()})
            rows.append(row)
        return rows


def run_step7_sensitivity(cfg: MgConfig, scen: ScenarioSet, settings: Optional[RiskSettings] = None,
                          solver: Optional[SolverChoice] = None) -> Sensitivity:
    settings = settings or RiskSettings()
    sweeps = {}
    for p in settings.participation_grid:
        cp = cfg.with_participation(p)
        base = run_step5_drp_wcdrc(cp, scen, solver, settings.target_p)
        sweeps[p] = _sweep(cp, scen, DRP_ON, settings, base, solver)
    return Sensitivity(settings.participation_grid, sweeps)


# --------------------------------------------------------------------------
@dataclass
class StudyReport:
    wcdrc: Baseline
    cdrc: LambdaSweep
    drp_wcdrc: Baseline
    drp_cdrc: LambdaSweep
    sensitivity: Optional[Sensitivity]
    meta: dict = field(default_factory=dict)

    def all_runs(self) -> List[RunResult]:
        runs = [self.wcdrc.run, self.drp_wcdrc.run]
        runs += list(self.cdrc.runs.values()) + list(self.drp_cdrc.runs.values())
        if self.sensitivity:
            for sw in self.sensitivity.sweeps.values():
                runs.append(sw.baseline.run)
                runs += list(sw.runs.values())
        return runs

    def audit_failures(self) -> List[Tuple[str, Violation]]:
        bad = []
        for r in self.all_runs():
            if r.audit is not None:
                tag = f"{r.mode}/{r.risk.kind}/{r.risk.lambda_p:g}"
                bad += [(tag, v) for v in r.audit.violations]
        return bad

    @staticmethod
    def _scenario_table(b: Baseline) -> List[list]:
        rows = [["scenario", "prob", "profit", "risk"]]
        for s, (p, pr, rk) in enumerate(zip(b.run.probs, b.profits, b.risks)):
            rows.append([str(s + 1), p, pr, rk])
        rows.append(["average", float(b.run.probs.sum()), b.run.avg_profit, b.edr_baseline])
        return rows

    @staticmethod
    def _lambda_profit_table(sw: LambdaSweep) -> List[list]:
        S = len(sw.baseline.profits)
        rows = [["lambda", "status"] + [f"s{s + 1}" for s in range(S)] + ["average"]]
        for lam, r in sw.runs.items():
            rows.append([lam, r.status.value] + list(r.profits) + [r.avg_profit])
        return rows

    @staticmethod
    def _lambda_summary_table(sw: LambdaSweep) -> List[list]:
        keys = ["lambda", "status", "avg_profit", "total_rip", "avg_rip", "edr_bound",
                "profit_reduction_pct", "rip_reduction_pct"]
        return [keys] + [[row[k] for k in keys] for row in sw.rows()]

    def tables(self) -> Dict[str, List[list]]:
        out = {
            "table2": self._scenario_table(self.wcdrc),
            "table3": self._lambda_profit_table(self.cdrc),
            "table4": self._lambda_summary_table(self.cdrc),
            "table5": self._scenario_table(self.drp_wcdrc),
            "table6": self._lambda_profit_table(self.drp_cdrc),
            "table7": self._lambda_summary_table(self.drp_cdrc),
        }
        if self.sensitivity is not None:
            for key in ("profit", "rip"):
                rows = self.sensitivity.surface(key)
                head = list(rows[0].keys())
                out[f"sensitivity_{key}"] = [head] + [[r[h] for h in head] for r in rows]
        return out

    def summary(self) -> dict:
        d = {
            "target_wcdrc": self.wcdrc.target, "edr_wcdrc": self.wcdrc.edr_baseline,
            "target_drp": self.drp_wcdrc.target, "edr_drp": self.drp_wcdrc.edr_baseline,
            "drp_profit_change_pct": -_pct(self.wcdrc.run.avg_profit, self.drp_wcdrc.run.avg_profit),
            "drp_rip_change_pct": -_pct(self.wcdrc.edr_baseline, self.drp_wcdrc.edr_baseline),
            "lambda_sweep": self.cdrc.rows(), "drp_lambda_sweep": self.drp_cdrc.rows(),
        }
        if self.sensitivity is not None:
            d["participation_targets"] = {f"{p:g}": sw.baseline.target
                                          for p, sw in self.sensitivity.sweeps.items()}
        d["audit_violations"] = len(self.audit_failures())
        d.update(self.meta)
        return d

    def summary_text(self) -> str:
        s = self.summary()
        lines = [f"risk-free target profit: {s['target_wcdrc']:.4f} $ "
                 f"(expected downside risk {s['edr_wcdrc']:.4f} $)",
                 f"with demand response:    {s['target_drp']:.4f} $ "
                 f"(expected downside risk {s['edr_drp']:.4f} $)",
                 f"demand response changes profit by {s['drp_profit_change_pct']:+.4f} % "
                 f"and risk by {s['drp_rip_change_pct']:+.4f} %", "",
                 "lambda  avg_profit  avg_rip  profit_red%  rip_red%   (no DRP)"]
        for r in s["lambda_sweep"]:
            lines.append(f"{r['lambda']:<6g}  {r['avg_profit']:10.4f}  {r['avg_rip']:7.4f}  "
                         f"{r['profit_reduction_pct']:11.4f}  {r['rip_reduction_pct']:8.4f}")
        lines += ["", "lambda  avg_profit  avg_rip  profit_red%  rip_red%   (with DRP)"]
        for r in s["drp_lambda_sweep"]:
            lines.append(f"{r['lambda']:<6g}  {r['avg_profit']:10.4f}  {r['avg_rip']:7.4f}  "
                         f"{r['profit_reduction_pct']:11.4f}  {r['rip_reduction_pct']:8.4f}")
        if "participation_targets" in s:
            lines += ["", "participation targets: " + ", ".join(
                f"{k}: {v:.4f}" for k, v in s["participation_targets"].items())]
        lines.append(f"audit violations: {s['audit_violations']}")
        return "\n".join(lines) + "\n"

    def write(self, directory: Union[str, Path]) -> List[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, rows in self.tables().items():
            paths.append(write_csv(d / f"{name}.csv", rows))
        paths.append(_write_text(d / "summary.json",
                                 json.dumps(_jsonable(self.summary()), indent=2) + "\n"))
        paths.append(_write_text(d / "summary.txt", self.summary_text()))
        return paths


def run_study(cfg: MgConfig, scen: ScenarioSet, settings: Optional[RiskSettings] = None,
              solver: Optional[SolverChoice] = None, sensitivity: bool = True) -> StudyReport:
    settings = settings or RiskSettings()
    solver = solver or SolverChoice()
    t0 = time.monotonic()
    b3 = run_step3_wcdrc(cfg, scen, solver, settings.target_p)
    s4 = run_step4_cdrc(cfg, scen, settings, solver, b3)
    b5 = run_step5_drp_wcdrc(cfg, scen, solver, settings.target_p)
    s6 = run_step6_drp_cdrc(cfg, scen, settings, solver, b5)
    s7 = run_step7_sensitivity(cfg, scen, settings, solver) if sensitivity else None
    meta = {"seed": scen.seed, "n_scenarios": len(scen), "horizon": cfg.horizon,
            "first_stage": list(cfg.first_stage), "lambda_grid": list(settings.lambda_grid),
            "participation_grid": list(settings.participation_grid),
            "wall_time_s": time.monotonic() - t0}
    meta.update(solver.resolve(len(scen)).describe())
    return StudyReport(b3, s4, b5, s6, s7, meta)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, rows: List[list]) -> Path:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    tmp.replace(path)
    return path


def _write_text(path: Path, text: str) -> Path:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(float(obj)) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj
