"""Day-ahead microgrid scheduling MILP: builder, schedule extraction, audit.

Index conventions: ``g`` DGR, ``i`` PV unit, ``j`` wind turbine, ``t`` hour,
``s`` scenario, all zero-based in arrays and one-based in variable names.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import MgConfig
from .drp import drp_constraint_block
from .milp.model import EQ, GE, LE, MilpModel
from .riskmeasures import edr_bound
from .scenarios import Scenario, ScenarioSet

DRP_OFF, DRP_ON = "drp_off", "drp_on"
WCDRC, CDRC = "wcdrc", "cdrc"
AUDIT_TOL = 1e-6


class InfeasibleSupplyWarning(UserWarning):
    """Load exceeds every possible source of supply in some hour."""


@dataclass(frozen=True)
class RiskSpec:
    """Risk setting for one run.

    ``wcdrc`` adds nothing.  ``cdrc`` adds per-scenario shortfall variables
    and bounds their expectation by ``lambda_p * edr_baseline``; when
    ``literal_w_r`` is given the budget is ``lambda_p * (literal_w_r - target)``
    instead.
    """

    kind: str = WCDRC
    lambda_p: float = 1.0
    target: Optional[float] = None
    edr_baseline: Optional[float] = None
    literal_w_r: Optional[float] = None

    def __post_init__(self):
        if self.kind not in (WCDRC, CDRC):
            raise ValueError(f"risk kind must be {WCDRC!r} or {CDRC!r}")
        if self.kind == CDRC:
            if not 0 < self.lambda_p <= 1:
                raise ValueError(f"lambda must lie in (0, 1], got {self.lambda_p}")
            if self.target is None:
                raise ValueError("cdrc needs a target profit")
            if self.literal_w_r is None and (self.edr_baseline is None or self.edr_baseline < 0):
                raise ValueError("cdrc needs a nonnegative baseline expected downside risk")

    @classmethod
    def wcdrc(cls) -> "RiskSpec":
        return cls(WCDRC)

    @classmethod
    def cdrc(cls, lambda_p: float, target: float, edr_baseline: float) -> "RiskSpec":
        return cls(CDRC, lambda_p, target, edr_baseline)

    @property
    def constrained(self) -> bool:
        return self.kind == CDRC

    def budget(self) -> float:
        if self.literal_w_r is not None:
            return self.lambda_p * (self.literal_w_r - self.target)
        return edr_bound(self.lambda_p, self.edr_baseline)


def _check_mode(mode: str) -> bool:
    if mode not in (DRP_OFF, DRP_ON):
        raise ValueError(f"mode must be {DRP_OFF!r} or {DRP_ON!r}, got {mode!r}")
    return mode == DRP_ON


@dataclass
class MgInstance:
    """A built model plus the bookkeeping needed to read its solutions."""

    model: MilpModel
    cfg: MgConfig
    scen: ScenarioSet
    mode: str
    risk: RiskSpec
    index: Dict[str, np.ndarray]
    weights: np.ndarray
    big_m: Optional[float] = None
    warnings: List[str] = field(default_factory=list)

    @property
    def drp(self) -> bool:
        return self.mode == DRP_ON

    def schedule(self, x: np.ndarray) -> "DecisionSchedule":
        return extract_schedule(self, x)


def supply_shortfall_hours(cfg: MgConfig, scen: ScenarioSet, mode: str) -> List[Tuple[int, int]]:
    """(t, s) pairs where even maximal supply cannot cover the load."""
    drp = _check_mode(mode)
    fixed = cfg.grid.mctl + sum(g.p_max for g in cfg.dgrs) + cfg.bess.p_disch_max
    out = []
    for s, sc in enumerate(scen):
        for t in range(cfg.horizon):
            supply = fixed + sc.pv_max[:, t].sum() + sc.wt_max[:, t].sum()
            need = sc.load[t] * ((1 - cfg.drp.participation) if drp else 1.0)
            if need > supply + 1e-9:
                out.append((t, s))
    return out


def profit_upper_bound(cfg: MgConfig, sc: Scenario, drp: bool) -> float:
    """Bound on |profit| of any feasible schedule in one scenario."""
    T = cfg.horizon
    price = max(float(np.max(sc.price_sell[:T])), float(np.max(sc.price_buy[:T])))
    bound = T * cfg.grid.mctl * price
    bound += T * sum(g.b_g * g.p_max + g.c_g for g in cfg.dgrs)
    bound += T * sum(g.startup_cost + g.shutdown_cost for g in cfg.dgrs)
    if drp:
        bound += 2 * cfg.drp.participation * float(np.asarray(cfg.drp.incentive[:T]) @ sc.load[:T])
    return bound


def build_milp(cfg: MgConfig, scen: ScenarioSet, mode: str = DRP_OFF,
               risk: Optional[RiskSpec] = None, weights: str = "prob") -> MgInstance:
    """Translate configuration, scenarios and settings into a maximisation MILP.

    ``weights="prob"`` weights scenario profits by their probabilities;
    ``"unit"`` gives every scenario weight one (used when a single scenario
    is solved on its own).
    """
    drp = _check_mode(mode)
    risk = risk or RiskSpec.wcdrc()
    T = cfg.horizon
    if scen.horizon < T:
        raise ValueError(f"scenarios cover {scen.horizon} h, configuration needs {T}")
    if scen.n_pv != cfg.n_pv or scen.n_wt != cfg.n_wt:
        raise ValueError("scenario unit counts do not match the configuration")
    S, G, I, J = len(scen), len(cfg.dgrs), cfg.n_pv, cfg.n_wt
    if weights == "prob":
        w = scen.probs.copy()
    elif weights == "unit":
        w = np.ones(S)
    else:
        raise ValueError("weights must be 'prob' or 'unit'")

    short = supply_shortfall_hours(cfg, scen, mode)
    msgs = []
    if short:
        hours = ", ".join(f"t={t + 1}/s={s + 1}" for t, s in short[:8])
        msgs.append(f"load exceeds maximum supply (power balance cannot hold) at {hours}"
                    + (" ..." if len(short) > 8 else ""))
        warnings.warn(msgs[-1], InfeasibleSupplyWarning, stacklevel=2)

    m = MilpModel(f"mg_{mode}_{risk.kind}", sense="max")
    idx: Dict[str, np.ndarray] = {}

    def grid3(name, shape, lb, ub, integer=False):
        arr = np.empty(shape, dtype=int)
        for pos in np.ndindex(*shape):
            tag = "_".join(f"{k}{v + 1}" for k, v in zip(_axes(len(shape)), pos))
            lo = lb(*pos) if callable(lb) else lb
            hi = ub(*pos) if callable(ub) else ub
            arr[pos] = m.add_var(f"{name}_{tag}", lo, hi, integer)
        idx[name] = arr
        return arr

    def _axes(n):
        return {3: ("g", "t", "s"), 2: ("t", "s"), 1: ("s",)}[n]

    dg = cfg.dgrs
    P = grid3("p_dgr", (G, T, S), 0.0, lambda g, t, s: dg[g].p_max)
    V = grid3("commit", (G, T, S), 0.0, 1.0, integer=True)
    Y = grid3("started", (G, T, S), 0.0, 1.0)
    SS = grid3("stopped", (G, T, S), 0.0, 1.0)
    SU = grid3("startup_cost", (G, T, S), 0.0, lambda g, t, s: dg[g].startup_cost)
    SD = grid3("shutdown_cost", (G, T, S), 0.0, lambda g, t, s: dg[g].shutdown_cost)
    mctl = cfg.grid.mctl
    BUY = grid3("p_buy", (T, S), 0.0, mctl)
    SELL = grid3("p_sell", (T, S), 0.0, mctl)
    X = grid3("grid_flag", (T, S), 0.0, 1.0, integer=True)
    b = cfg.bess
    CH = grid3("p_ch", (T, S), 0.0, b.p_ch_max)
    DIS = grid3("p_disch", (T, S), 0.0, b.p_disch_max)
    B = grid3("bess_flag", (T, S), 0.0, 1.0, integer=True)
    SOC = grid3("soc", (T, S), b.soc_min, b.soc_max)
    PV = np.empty((I, T, S), dtype=int)
    for i in range(I):
        for t in range(T):
            for s in range(S):
                PV[i, t, s] = m.add_var(f"p_pv_i{i + 1}_t{t + 1}_s{s + 1}", 0.0,
                                        float(scen[s].pv_max[i, t]))
    idx["p_pv"] = PV
    WT = np.empty((J, T, S), dtype=int)
    for j in range(J):
        for t in range(T):
            for s in range(S):
                WT[j, t, s] = m.add_var(f"p_wt_j{j + 1}_t{t + 1}_s{s + 1}", 0.0,
                                        float(scen[s].wt_max[j, t]))
    idx["p_wt"] = WT
    if drp:
        blocks = [drp_constraint_block(scen[s].load[:T], cfg.drp.truncated(T)) for s in range(S)]
        SH = grid3("pl_shift", (T, S), lambda t, s: blocks[s].shift_lb[t],
                   lambda t, s: blocks[s].shift_ub[t])
        UP = grid3("pl_shift_up", (T, S), 0.0, lambda t, s: blocks[s].shift_ub[t])
        DN = grid3("pl_shift_down", (T, S), 0.0, lambda t, s: blocks[s].shift_ub[t])

    for s in range(S):
        sf = f"s{s + 1}"
        for g in range(G):
            prm = dg[g]
            for t in range(T):
                tf = f"g{g + 1}_t{t + 1}_{sf}"
                prev_v = V[g, t - 1, s] if t else None
                v0 = 1.0 if prm.initial_on else 0.0
                # started - stopped = v_t - v_{t-1}
                row = {Y[g, t, s]: 1.0, SS[g, t, s]: -1.0, V[g, t, s]: -1.0}
                if prev_v is not None:
                    row[prev_v] = 1.0
                m.add_constraint(row, EQ, 0.0 if prev_v is not None else -v0,
                                 f"commit_link_{tf}")
                if prm.startup_cost > 0:
                    row = {SU[g, t, s]: 1.0, V[g, t, s]: -prm.startup_cost}
                    if prev_v is not None:
                        row[prev_v] = prm.startup_cost
                    m.add_constraint(row, GE, 0.0 if prev_v is not None
                                     else -prm.startup_cost * v0, f"startup_cost_{tf}")
                if prm.shutdown_cost > 0:
                    row = {SD[g, t, s]: 1.0, V[g, t, s]: prm.shutdown_cost}
                    if prev_v is not None:
                        row[prev_v] = -prm.shutdown_cost
                    m.add_constraint(row, GE, 0.0 if prev_v is not None
                                     else prm.shutdown_cost * v0, f"shutdown_cost_{tf}")
                p0 = prm.initial_power
                if t:
                    m.add_constraint({P[g, t, s]: 1.0, P[g, t - 1, s]: -1.0}, LE, prm.up_rate,
                                     f"ramp_up_{tf}")
                    m.add_constraint({P[g, t - 1, s]: 1.0, P[g, t, s]: -1.0}, LE,
                                     prm.down_rate, f"ramp_down_{tf}")
                else:
                    m.add_constraint({P[g, t, s]: 1.0}, LE, prm.up_rate + p0, f"ramp_up_{tf}")
                    m.add_constraint({P[g, t, s]: -1.0}, LE, prm.down_rate - p0,
                                     f"ramp_down_{tf}")
                m.add_constraint({P[g, t, s]: 1.0, V[g, t, s]: -prm.p_max}, LE, 0.0,
                                 f"dgr_max_{tf}")
                if prm.p_min > 0:
                    m.add_constraint({P[g, t, s]: 1.0, V[g, t, s]: -prm.p_min}, GE, 0.0,
                                     f"dgr_min_{tf}")
        for t in range(T):
            tf = f"t{t + 1}_{sf}"
            m.add_constraint({BUY[t, s]: 1.0, SELL[t, s]: 1.0}, LE, mctl, f"trade_cap_{tf}")
            m.add_constraint({CH[t, s]: 1.0, B[t, s]: -b.p_ch_max}, LE, 0.0, f"charge_gate_{tf}")
            m.add_constraint({DIS[t, s]: 1.0, B[t, s]: b.p_disch_max}, LE, b.p_disch_max,
                             f"discharge_gate_{tf}")
            row = {SOC[t, s]: 1.0, CH[t, s]: -b.eta_ch / b.s_base,
                   DIS[t, s]: 1.0 / (b.eta_disch * b.s_base)}
            if t:
                row[SOC[t - 1, s]] = -1.0
            m.add_constraint(row, EQ, 0.0 if t else b.soc_init, f"soc_dynamics_{tf}")
            m.add_constraint({BUY[t, s]: 1.0, X[t, s]: -mctl}, LE, 0.0, f"buy_gate_{tf}")
            m.add_constraint({SELL[t, s]: 1.0, X[t, s]: mctl}, LE, mctl, f"sell_gate_{tf}")
            row = {P[g, t, s]: 1.0 for g in range(G)}
            row.update({BUY[t, s]: 1.0, SELL[t, s]: -1.0, CH[t, s]: -1.0, DIS[t, s]: 1.0})
            row.update({PV[i, t, s]: 1.0 for i in range(I)})
            row.update({WT[j, t, s]: 1.0 for j in range(J)})
            if drp:
                row[SH[t, s]] = -1.0
            m.add_constraint(row, EQ, float(scen[s].load[t]), f"power_balance_{tf}")
        m.add_constraint({SOC[T - 1, s]: 1.0}, GE, b.soc_init, f"soc_terminal_{sf}")
        if drp:
            for t in range(T):
                m.add_constraint({SH[t, s]: 1.0, UP[t, s]: -1.0, DN[t, s]: 1.0}, EQ, 0.0,
                                 f"shift_split_t{t + 1}_{sf}")
            m.add_constraint({SH[t, s]: 1.0 for t in range(T)}, EQ, 0.0, f"shift_zero_sum_{sf}")

    for group in cfg.first_stage:
        fams = {"dgr": ("p_dgr", "commit"), "bess": ("p_ch", "p_disch", "bess_flag"),
                "grid": ("p_buy", "p_sell", "grid_flag")}[group]
        for fam in fams:
            arr = idx[fam]
            for pos in np.ndindex(*arr.shape[:-1]):
                for s in range(1, S):
                    m.add_constraint({arr[pos + (s,)]: 1.0, arr[pos + (0,)]: -1.0}, EQ, 0.0,
                                     f"first_stage_{m.variables[arr[pos + (s,)]].name}")

    profit_rows = [profit_coefficients(idx, cfg, scen[s], s, drp) for s in range(S)]
    obj: Dict[int, float] = {}
    for s in range(S):
        for j, a in profit_rows[s].items():
            obj[j] = obj.get(j, 0.0) + w[s] * a
    m.set_objective(obj)

    big_m = None
    if risk.constrained:
        target = float(risk.target)
        big_m = 2.0 * (max(profit_upper_bound(cfg, sc, drp) for sc in scen) + abs(target))
        m.register_big_m("risk", big_m, "2*(max |profit| bound over scenarios + |target|)")
        R = np.array([m.add_var(f"risk_s{s + 1}", 0.0, big_m) for s in range(S)])
        W = np.array([m.add_var(f"below_target_s{s + 1}", 0.0, 1.0, True) for s in range(S)])
        idx["risk"], idx["below_target"] = R, W
        for s in range(S):
            # target <= risk + profit <= target + M (1 - W)
            row = dict(profit_rows[s])
            row[R[s]] = row.get(R[s], 0.0) + 1.0
            m.add_constraint(row, GE, target, f"risk_lower_s{s + 1}")
            row = dict(row)
            row[W[s]] = big_m
            m.add_constraint(row, LE, target + big_m, f"risk_upper_s{s + 1}")
            m.add_constraint({R[s]: 1.0, W[s]: -big_m}, LE, 0.0, f"risk_gate_s{s + 1}")
        budget = risk.budget()
        m.add_constraint({R[s]: float(scen[s].prob) for s in range(S)}, LE, budget,
                         "expected_risk_budget")
    return MgInstance(m, cfg, scen, mode, risk, idx, w, big_m, msgs)


def profit_coefficients(idx: Dict[str, np.ndarray], cfg: MgConfig, sc: Scenario, s: int,
                        drp: bool) -> Dict[int, float]:
    """Linear profit of scenario ``s`` as ``{variable index: coefficient}``."""
    T = cfg.horizon
    row: Dict[int, float] = {}
    for t in range(T):
        row[idx["p_sell"][t, s]] = float(sc.price_sell[t])
        row[idx["p_buy"][t, s]] = -float(sc.price_buy[t])
        for g, prm in enumerate(cfg.dgrs):
            row[idx["p_dgr"][g, t, s]] = -prm.b_g
            if prm.c_g:
                row[idx["commit"][g, t, s]] = -prm.c_g
            row[idx["startup_cost"][g, t, s]] = -1.0
            row[idx["shutdown_cost"][g, t, s]] = -1.0
        if drp:
            a = float(cfg.drp.incentive[t])
            row[idx["pl_shift_up"][t, s]] = -a
            row[idx["pl_shift_down"][t, s]] = -a
    return {j: a for j, a in row.items() if a != 0.0}


# --------------------------------------------------------------------------
_TS_FIELDS = ("p_buy", "p_sell", "grid_flag", "p_ch", "p_disch", "bess_flag", "soc")
_GTS_FIELDS = ("p_dgr", "commit", "started", "stopped", "startup_cost", "shutdown_cost")
_DRP_FIELDS = ("pl_shift", "pl_shift_up", "pl_shift_down")


@dataclass
class DecisionSchedule:
    p_dgr: np.ndarray
    commit: np.ndarray
    started: np.ndarray
    stopped: np.ndarray
    startup_cost: np.ndarray
    shutdown_cost: np.ndarray
    p_buy: np.ndarray
    p_sell: np.ndarray
    grid_flag: np.ndarray
    p_ch: np.ndarray
    p_disch: np.ndarray
    bess_flag: np.ndarray
    soc: np.ndarray
    p_pv: np.ndarray
    p_wt: np.ndarray
    pl_shift: Optional[np.ndarray] = None
    pl_shift_up: Optional[np.ndarray] = None
    pl_shift_down: Optional[np.ndarray] = None
    risk: Optional[np.ndarray] = None
    below_target: Optional[np.ndarray] = None

    @property
    def horizon(self) -> int:
        return self.p_buy.shape[0]

    @property
    def n_scenarios(self) -> int:
        return self.p_buy.shape[1]

    @property
    def pl_shift_abs(self) -> Optional[np.ndarray]:
        if self.pl_shift is None:
            return None
        if self.pl_shift_up is not None:
            return self.pl_shift_up + self.pl_shift_down
        return np.abs(self.pl_shift)

    @classmethod
    def zeros(cls, cfg: MgConfig, horizon: Optional[int] = None, n_scenarios: int = 1,
              drp: bool = False, risk: bool = False, soc: Optional[float] = None):
        T = horizon or cfg.horizon
        S = n_scenarios
        G = len(cfg.dgrs)
        z = lambda *sh: np.zeros(sh)  # noqa: E731
        return cls(z(G, T, S), z(G, T, S), z(G, T, S), z(G, T, S), z(G, T, S), z(G, T, S),
                   z(T, S), z(T, S), z(T, S), z(T, S), z(T, S), z(T, S),
                   np.full((T, S), cfg.bess.soc_init if soc is None else soc),
                   z(cfg.n_pv, T, S), z(cfg.n_wt, T, S),
                   z(T, S) if drp else None, z(T, S) if drp else None,
                   z(T, S) if drp else None, z(S) if risk else None, z(S) if risk else None)

    def copy(self) -> "DecisionSchedule":
        return DecisionSchedule(**{k: (None if v is None else v.copy())
                                   for k, v in self.__dict__.items()})

    # CSV ------------------------------------------------------------------
    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        G = self.p_dgr.shape[0]
        header = ["t", "s"] + list(_TS_FIELDS)
        for f in _GTS_FIELDS:
            header += [f"{f}_{g + 1}" for g in range(G)]
        header += [f"p_pv_{i + 1}" for i in range(self.p_pv.shape[0])]
        header += [f"p_wt_{j + 1}" for j in range(self.p_wt.shape[0])]
        drp = self.pl_shift is not None
        if drp:
            header += list(_DRP_FIELDS) + ["pl_shift_abs"]
        if self.risk is not None:
            header += ["risk", "below_target"]
        rows = [header]
        for s in range(self.n_scenarios):
            for t in range(self.horizon):
                r = [t + 1, s + 1] + [getattr(self, f)[t, s] for f in _TS_FIELDS]
                for f in _GTS_FIELDS:
                    r += list(getattr(self, f)[:, t, s])
                r += list(self.p_pv[:, t, s]) + list(self.p_wt[:, t, s])
                if drp:
                    r += [getattr(self, f)[t, s] for f in _DRP_FIELDS] + \
                         [self.pl_shift_abs[t, s]]
                if self.risk is not None:
                    r += [self.risk[s], self.below_target[s]]
                rows.append([v if isinstance(v, int) else repr(float(v)) for v in r])
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\r\n").writerows(rows)
        tmp.replace(path)
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "DecisionSchedule":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: empty schedule")
        T = max(int(r["t"]) for r in rows)
        S = max(int(r["s"]) for r in rows)
        cols = rows[0].keys()
        count = lambda pre: sum(1 for c in cols if c.startswith(pre) and  # noqa: E731
                                c[len(pre):].isdigit())
        G, I, J = count("p_dgr_"), count("p_pv_"), count("p_wt_")
        data = {f: np.zeros((T, S)) for f in _TS_FIELDS}
        data.update({f: np.zeros((G, T, S)) for f in _GTS_FIELDS})
        data["p_pv"], data["p_wt"] = np.zeros((I, T, S)), np.zeros((J, T, S))
        drp = "pl_shift" in cols
        if drp:
            data.update({f: np.zeros((T, S)) for f in _DRP_FIELDS})
        has_risk = "risk" in cols
        if has_risk:
            data["risk"], data["below_target"] = np.zeros(S), np.zeros(S)
        for r in rows:
            t, s = int(r["t"]) - 1, int(r["s"]) - 1
            for f in _TS_FIELDS + (_DRP_FIELDS if drp else ()):
                data[f][t, s] = float(r[f])
            for f in _GTS_FIELDS:
                for g in range(G):
                    data[f][g, t, s] = float(r[f"{f}_{g + 1}"])
            for i in range(I):
                data["p_pv"][i, t, s] = float(r[f"p_pv_{i + 1}"])
            for j in range(J):
                data["p_wt"][j, t, s] = float(r[f"p_wt_{j + 1}"])
            if has_risk:
                data["risk"][s] = float(r["risk"])
                data["below_target"][s] = float(r["below_target"])
        return cls(**data)


def extract_schedule(inst: MgInstance, x: np.ndarray, canonical: bool = True) -> DecisionSchedule:
    """Read a solution vector into arrays.

    With ``canonical`` the relaxed start/stop indicators are replaced by their
    unique binary values implied by the commitment pattern, the cost variables
    by their lower bounds, binaries are rounded, and the split of each load
    shift is made complementary.  None of this changes the profit when the
    costs are nonnegative.
    """
    x = np.asarray(x, dtype=float)
    get = lambda name: x[inst.index[name]]  # noqa: E731
    d = {f: get(f) for f in _TS_FIELDS + _GTS_FIELDS + ("p_pv", "p_wt")}
    if inst.drp:
        d.update({f: get(f) for f in _DRP_FIELDS})
    if inst.risk.constrained:
        d["risk"] = get("risk")
        d["below_target"] = get("below_target")
    sched = DecisionSchedule(**d)
    if canonical:
        _canonicalise(sched, inst.cfg)
    return sched


def _canonicalise(sched: DecisionSchedule, cfg: MgConfig) -> None:
    sched.commit = np.round(sched.commit)
    sched.grid_flag = np.round(sched.grid_flag)
    sched.bess_flag = np.round(sched.bess_flag)
    if sched.below_target is not None:
        sched.below_target = np.round(sched.below_target)
    v0 = np.array([1.0 if g.initial_on else 0.0 for g in cfg.dgrs])[:, None, None]
    prev = np.concatenate([np.broadcast_to(v0, sched.commit[:, :1].shape),
                           sched.commit[:, :-1]], axis=1)
    delta = sched.commit - prev
    sched.started = np.maximum(delta, 0.0)
    sched.stopped = np.maximum(-delta, 0.0)
    su = np.array([g.startup_cost for g in cfg.dgrs])[:, None, None]
    sd = np.array([g.shutdown_cost for g in cfg.dgrs])[:, None, None]
    sched.startup_cost = su * sched.started
    sched.shutdown_cost = sd * sched.stopped
    # exactly zero values below the solver's tolerance
    for f in ("p_dgr", "p_buy", "p_sell", "p_ch", "p_disch", "p_pv", "p_wt"):
        arr = getattr(sched, f)
        arr[np.abs(arr) < 1e-11] = 0.0
    if sched.pl_shift is not None:
        sched.pl_shift_up = np.maximum(sched.pl_shift, 0.0)
        sched.pl_shift_down = np.maximum(-sched.pl_shift, 0.0)


# --------------------------------------------------------------------------
def compute_profit(sched: DecisionSchedule, scen: Union[Scenario, ScenarioSet], cfg: MgConfig,
                   mode: str = DRP_OFF, s: Optional[int] = None):
    """Profit per scenario (array) or of scenario ``s`` (float).

    Passing a single :class:`Scenario` evaluates column ``s`` (default 0) of
    the schedule against it.
    """
    drp = _check_mode(mode)
    if isinstance(scen, Scenario):
        return _profit_one(sched, scen, cfg, drp, 0 if s is None else s)
    if len(scen) != sched.n_scenarios:
        raise ValueError(f"schedule has {sched.n_scenarios} scenarios, set has {len(scen)}")
    vals = np.array([_profit_one(sched, scen[k], cfg, drp, k) for k in range(len(scen))])
    return vals if s is None else float(vals[s])


def _profit_one(sched: DecisionSchedule, sc: Scenario, cfg: MgConfig, drp: bool, s: int) -> float:
    T = sched.horizon
    if sc.horizon < T or not 0 <= s < sched.n_scenarios:
        raise ValueError("schedule and scenario dimensions do not match")
    if sched.p_dgr.shape[0] != len(cfg.dgrs):
        raise ValueError("schedule DGR count differs from the configuration")
    b = np.array([g.b_g for g in cfg.dgrs])
    c = np.array([g.c_g for g in cfg.dgrs])
    val = float(sched.p_sell[:, s] @ sc.price_sell[:T] - sched.p_buy[:, s] @ sc.price_buy[:T])
    val -= float(b @ sched.p_dgr[:, :, s].sum(axis=1) + c @ sched.commit[:, :, s].sum(axis=1))
    val -= float(sched.startup_cost[:, :, s].sum() + sched.shutdown_cost[:, :, s].sum())
    if drp and sched.pl_shift is not None:
        val -= float(sched.pl_shift_abs[:, s] @ np.asarray(cfg.drp.incentive[:T]))
    return val


def bus_injection(sched: DecisionSchedule, scen: Union[Scenario, ScenarioSet], cfg: MgConfig,
                  w: int, t: int, s: int = 0) -> float:
    """Net injection at bus ``w`` (1..6) in hour ``t`` (0-based) of scenario ``s``."""
    if w not in range(1, 7):
        raise ValueError(f"bus index must be in 1..6, got {w}")
    if w == 1:
        return float(sched.p_pv[: cfg.n_pv_bus1, t, s].sum())
    if w == 2:
        return float(sched.p_pv[cfg.n_pv_bus1:, t, s].sum())
    if w == 3:
        return float(sched.p_wt[:, t, s].sum())
    if w in (4, 5):
        return float(sched.p_dgr[w - 4, t, s])
    sc = scen if isinstance(scen, Scenario) else scen[s]
    load = sc.load[t]
    if sched.pl_shift is not None:
        load = load + sched.pl_shift[t, s]
    return float(sched.p_dgr[2, t, s] - sched.p_ch[t, s] + sched.p_disch[t, s] - load)


# --------------------------------------------------------------------------
@dataclass(frozen=True)
class Violation:
    family: str
    index: Tuple[int, ...]
    residual: float
    detail: str = ""

    def __str__(self) -> str:
        where = ",".join(str(i + 1) for i in self.index)
        return f"{self.family}[{where}] residual {self.residual:.3e} {self.detail}".rstrip()


@dataclass
class AuditReport:
    violations: List[Violation]
    checks: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __len__(self) -> int:
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def families(self) -> List[str]:
        return sorted({v.family for v in self.violations})

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        rows = [["family", "index", "residual", "detail"]]
        rows += [[v.family, " ".join(str(i + 1) for i in v.index), repr(v.residual), v.detail]
                 for v in self.violations]
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\r\n").writerows(rows)
        tmp.replace(path)
        return path


# Families reported by the audit, with the quantity each one checks.
AUDIT_FAMILIES = {
    "trade_cap": "p_buy + p_sell <= mctl",
    "commit_link": "started - stopped = commit_t - commit_{t-1}",
    "startup_cost": "startup cost >= startup_g * (commit_t - commit_{t-1}), >= 0",
    "shutdown_cost": "shutdown cost >= shutdown_g * (commit_{t-1} - commit_t), >= 0",
    "ramp_up": "p_t - p_{t-1} <= up_rate",
    "ramp_down": "p_{t-1} - p_t <= down_rate",
    "dgr_capacity": "p_min * commit <= p <= p_max * commit",
    "soc_bounds": "soc_min <= soc <= soc_max",
    "charge_exclusivity": "charge/discharge within limits gated by the BESS flag",
    "soc_dynamics": "soc recursion",
    "soc_terminal": "final soc >= initial soc",
    "trade_exclusivity": "buy/sell within mctl gated by the grid flag",
    "bus_accounting": "sum of bus injections + buy - sell = 0",
    "power_balance": "supply = served load",
    "res_caps": "0 <= renewable output <= available",
    "shift_bounds": "|shift| <= participation * load",
    "shift_zero_sum": "sum_t shift = 0",
    "shift_split": "up - down = shift, up * down = 0",
    "integrality": "binary decisions are 0 or 1",
    "nonnegativity": "power variables >= 0",
    "risk_definition": "risk = max(0, target - profit)",
    "risk_budget": "expected risk <= budget",
    "first_stage": "first-stage decisions equal across scenarios",
}


def audit_solution(sched: DecisionSchedule, scen: ScenarioSet, cfg: MgConfig, mode: str = DRP_OFF,
                   risk: Optional[RiskSpec] = None, tol: float = AUDIT_TOL) -> AuditReport:
    """Check every constraint family; an empty report means feasible."""
    drp = _check_mode(mode)
    risk = risk or RiskSpec.wcdrc()
    out: List[Violation] = []
    checks = 0
    T, S = sched.horizon, sched.n_scenarios
    if len(scen) != S or scen.horizon < T:
        return AuditReport([Violation("dimensions", (), math.inf,
                                      "schedule does not match the scenario set")], 1)

    def chk(family, arr, detail=""):
        nonlocal checks
        arr = np.asarray(arr, dtype=float)
        checks += arr.size
        bad = np.argwhere(arr > tol)
        for pos in bad:
            out.append(Violation(family, tuple(int(p) for p in pos), float(arr[tuple(pos)]),
                                 detail))

    b, mctl = cfg.bess, cfg.grid.mctl
    dg = cfg.dgrs
    G = len(dg)

    for name in ("p_dgr", "p_buy", "p_sell", "p_ch", "p_disch", "p_pv", "p_wt"):
        chk("nonnegativity", -getattr(sched, name), name)

    bins = [("commit", sched.commit), ("grid_flag", sched.grid_flag),
            ("bess_flag", sched.bess_flag), ("started", sched.started),
            ("stopped", sched.stopped)]
    if sched.below_target is not None and risk.constrained:
        bins.append(("below_target", sched.below_target))
    for name, arr in bins:
        chk("integrality", np.abs(arr - np.round(arr)), name)
        chk("integrality", np.maximum(-arr, arr - 1.0), name)

    chk("trade_cap", sched.p_buy + sched.p_sell - mctl)

    v0 = np.array([1.0 if g.initial_on else 0.0 for g in dg])[:, None, None]
    p0 = np.array([g.initial_power for g in dg])[:, None, None]
    v_prev = np.concatenate([np.broadcast_to(v0, (G, 1, S)), sched.commit[:, :-1]], axis=1)
    p_prev = np.concatenate([np.broadcast_to(p0, (G, 1, S)), sched.p_dgr[:, :-1]], axis=1)
    dv = sched.commit - v_prev
    chk("commit_link", np.abs(sched.started - sched.stopped - dv))
    su = np.array([g.startup_cost for g in dg])[:, None, None]
    sd = np.array([g.shutdown_cost for g in dg])[:, None, None]
    chk("startup_cost", np.maximum(su * dv - sched.startup_cost, -sched.startup_cost))
    chk("shutdown_cost", np.maximum(-sd * dv - sched.shutdown_cost, -sched.shutdown_cost))
    up = np.array([g.up_rate for g in dg])[:, None, None]
    down = np.array([g.down_rate for g in dg])[:, None, None]
    chk("ramp_up", sched.p_dgr - p_prev - up)
    chk("ramp_down", p_prev - sched.p_dgr - down)
    pmax = np.array([g.p_max for g in dg])[:, None, None]
    pmin = np.array([g.p_min for g in dg])[:, None, None]
    chk("dgr_capacity", np.maximum(sched.p_dgr - pmax * sched.commit,
                                   pmin * sched.commit - sched.p_dgr))

    chk("soc_bounds", np.maximum(b.soc_min - sched.soc, sched.soc - b.soc_max))
    chk("charge_exclusivity", np.maximum.reduce([
        sched.p_ch - b.p_ch_max * sched.bess_flag,
        sched.p_disch - b.p_disch_max * (1.0 - sched.bess_flag),
        np.minimum(sched.p_ch, sched.p_disch)]))
    soc_prev = np.vstack([np.full((1, S), b.soc_init), sched.soc[:-1]])
    chk("soc_dynamics", np.abs(sched.soc - soc_prev - b.eta_ch * sched.p_ch / b.s_base
                               + sched.p_disch / (b.eta_disch * b.s_base)))
    chk("soc_terminal", (b.soc_init - sched.soc[-1])[None, :])
    chk("trade_exclusivity", np.maximum.reduce([
        sched.p_buy - mctl * sched.grid_flag, sched.p_sell - mctl * (1.0 - sched.grid_flag),
        np.minimum(sched.p_buy, sched.p_sell)]))

    load = np.stack([scen[s].load[:T] for s in range(S)], axis=1)
    pvmax = np.stack([scen[s].pv_max[:, :T] for s in range(S)], axis=2)
    wtmax = np.stack([scen[s].wt_max[:, :T] for s in range(S)], axis=2)
    chk("res_caps", np.maximum(sched.p_pv - pvmax, -sched.p_pv), "pv")
    chk("res_caps", np.maximum(sched.p_wt - wtmax, -sched.p_wt), "wt")

    served = load.copy()
    if drp:
        if sched.pl_shift is None:
            out.append(Violation("shift_bounds", (), math.inf, "DRP mode but no shift data"))
        else:
            served = load + sched.pl_shift
            cap = cfg.drp.participation * np.abs(load)
            chk("shift_bounds", np.abs(sched.pl_shift) - cap)
            chk("shift_zero_sum", np.abs(sched.pl_shift.sum(axis=0))[None, :])
            upv = sched.pl_shift_up if sched.pl_shift_up is not None else \
                np.maximum(sched.pl_shift, 0)
            dnv = sched.pl_shift_down if sched.pl_shift_down is not None else \
                np.maximum(-sched.pl_shift, 0)
            chk("shift_split", np.maximum.reduce([np.abs(upv - dnv - sched.pl_shift),
                                                 np.minimum(upv, dnv), -upv, -dnv]))
    elif sched.pl_shift is not None and np.any(np.abs(sched.pl_shift) > tol):
        out.append(Violation("shift_bounds", (), float(np.max(np.abs(sched.pl_shift))),
                             "load shifted while DRP is off"))

    supply = (sched.p_dgr.sum(axis=0) + sched.p_buy - sched.p_sell + sched.p_pv.sum(axis=0)
              + sched.p_wt.sum(axis=0) - sched.p_ch + sched.p_disch)
    chk("power_balance", np.abs(supply - served))
    inj = (sched.p_pv.sum(axis=0) + sched.p_wt.sum(axis=0) + sched.p_dgr.sum(axis=0)
           - sched.p_ch + sched.p_disch - served)
    chk("bus_accounting", np.abs(inj + sched.p_buy - sched.p_sell))

    for group in cfg.first_stage:
        fams = {"dgr": ("p_dgr", "commit"), "bess": ("p_ch", "p_disch", "bess_flag"),
                "grid": ("p_buy", "p_sell", "grid_flag")}[group]
        for f in fams:
            arr = getattr(sched, f)
            chk("first_stage", np.abs(arr - arr[..., :1]), f)

    if risk.constrained:
        if sched.risk is None:
            out.append(Violation("risk_definition", (), math.inf, "no risk values"))
        else:
            prof = compute_profit(sched, scen, cfg, mode)
            expect = np.maximum(0.0, risk.target - prof)
            chk("risk_definition", np.abs(sched.risk - expect))
            chk("risk_budget", np.array([scen.probs @ sched.risk - risk.budget()]))
            if sched.below_target is not None:
                # the indicator must agree with the shortfall it gates
                chk("risk_definition", np.where(sched.below_target < 0.5, sched.risk, 0.0),
                    "risk with indicator off")
    return AuditReport(out, checks)
