import dataclasses
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mgsched.milp.bnb import branch_and_bound
from mgsched.milp.model import SolveOptions, Status
from mgsched.mgmodel import (AUDIT_FAMILIES, DRP_OFF, DRP_ON, DecisionSchedule,
                             InfeasibleSupplyWarning, RiskSpec, audit_solution, build_milp,
                             bus_injection, compute_profit, profit_upper_bound)
from mgsched.pipeline import InfeasibleModel, SolverChoice, run_case
from mgsched.scenarios import ScenarioSet, build_scenarios

GAP = SolveOptions(rel_gap=1e-9)
INTERNAL = SolverChoice("internal", options=GAP)


def _solve(cfg, scen, mode=DRP_OFF, risk=None):
    inst = build_milp(cfg, scen, mode, risk)
    sol = branch_and_bound(inst.model, GAP)
    assert sol.status == Status.OPTIMAL
    return inst, sol, inst.schedule(sol.x)


@pytest.fixture(scope="module")
def solved(small_cfg, small_scen):
    return _solve(small_cfg, small_scen)


@pytest.fixture(scope="module")
def solved_drp(cfg):
    c = cfg.with_(horizon=6)
    scen = build_scenarios(c.profiles, 2, 7, horizon=6)
    return c, scen, _solve(c, scen, DRP_ON)


# --- structure --------------------------------------------------------------
def test_binary_count(cfg, scen):
    inst = build_milp(cfg, scen, DRP_OFF)
    S, T = len(scen), cfg.horizon
    assert inst.model.integer_indices.size == S * T * (3 + 1 + 1) == 600


def test_cdrc_additions(cfg, scen):
    base = build_milp(cfg, scen, DRP_OFF)
    cd = build_milp(cfg, scen, DRP_OFF, RiskSpec.cdrc(0.9, 70.0, 2.0))
    S = len(scen)
    assert cd.model.n_vars - base.model.n_vars == 2 * S
    assert cd.model.integer_indices.size - base.model.integer_indices.size == S
    assert cd.model.n_rows - base.model.n_rows == 3 * S + 1
    assert cd.model.has_var("risk_s1") and cd.model.has_var("below_target_s5")
    ub = max(profit_upper_bound(cfg, sc, False) for sc in scen)
    assert cd.model.big_m["risk"][0] == cd.big_m == pytest.approx(2 * (ub + 70.0))


def test_drp_bounds(cfg):
    sc = build_scenarios(cfg.profiles, 1, 3)
    sc.scenarios[0].load[5] = 40.0
    inst = build_milp(cfg, sc, DRP_ON)
    v = inst.model.variables[inst.index["pl_shift"][5, 0]]
    assert (v.lb, v.ub) == (-10.0, 10.0)


def test_dimension_checks(cfg, scen):
    with pytest.raises(ValueError):
        build_milp(cfg.with_(horizon=24), scen.truncated(6))
    with pytest.raises(ValueError):
        build_milp(cfg, scen, "drp_maybe")


# --- evaluators -------------------------------------------------------------
def _one_hour_scenario(cfg, price=0.2):
    sc = build_scenarios(cfg.profiles, 1, 0)
    s0 = sc[0]
    return dataclasses.replace(s0, price_sell=np.full(24, price), price_buy=np.full(24, price))


def test_profit_examples(cfg):
    sc = _one_hour_scenario(cfg)
    z = DecisionSchedule.zeros(cfg)
    z.p_sell[0, 0] = 10.0
    assert compute_profit(z, sc, cfg) == pytest.approx(2.0)
    z = DecisionSchedule.zeros(cfg)
    z.p_dgr[1, 0, 0] = 6.0
    z.commit[1, 0, 0] = 1.0
    assert compute_profit(z, sc, cfg) == pytest.approx(-1.5)
    z = DecisionSchedule.zeros(cfg, drp=True)
    z.p_sell[3, 0] = 5.0
    z.p_dgr[2, 3, 0] = 5.0
    assert compute_profit(z, sc, cfg, DRP_ON) == compute_profit(z, sc, cfg, DRP_OFF)


def test_bus_examples(cfg):
    sc = _one_hour_scenario(cfg)
    z = DecisionSchedule.zeros(cfg)
    z.p_pv[:4, 0, 0] = 5.0
    assert bus_injection(z, sc, cfg, 1, 0) == pytest.approx(20.0)
    sc = dataclasses.replace(sc, load=np.full(24, 30.0))
    z.p_dgr[2, 0, 0] = 9.0
    z.p_disch[0, 0] = 10.0
    assert bus_injection(z, sc, cfg, 6, 0) == pytest.approx(-11.0)
    with pytest.raises(ValueError):
        bus_injection(z, sc, cfg, 7, 0)


def test_bus_sum_balances(solved, small_cfg, small_scen):
    _, _, sched = solved
    for t in range(small_cfg.horizon):
        inj = sum(bus_injection(sched, small_scen, small_cfg, w, t) for w in range(1, 7))
        assert inj + sched.p_buy[t, 0] - sched.p_sell[t, 0] == pytest.approx(0.0, abs=1e-6)


def test_profit_equals_objective(solved, small_cfg, small_scen):
    inst, sol, sched = solved
    p = compute_profit(sched, small_scen, small_cfg)
    assert float(small_scen.probs @ p) == pytest.approx(sol.objective, abs=1e-6)


# --- audit ------------------------------------------------------------------
def test_audit_clean_on_solver_output(solved, small_cfg, small_scen):
    assert audit_solution(solved[2], small_scen, small_cfg).ok


def test_audit_soc_breach(solved, small_cfg, small_scen):
    bad = solved[2].copy()
    bad.soc[2, 0] = 0.1
    rep = audit_solution(bad, small_scen, small_cfg)
    hits = [v for v in rep.violations if v.family == "soc_bounds"]
    assert len(hits) == 1 and hits[0].index == (2, 0)
    assert hits[0].residual == pytest.approx(0.1)


def test_audit_charge_exclusivity(solved, small_cfg, small_scen):
    bad = solved[2].copy()
    bad.p_ch[1, 0] = 5.0
    bad.p_disch[1, 0] = 5.0
    assert "charge_exclusivity" in audit_solution(bad, small_scen, small_cfg).families()


def test_audit_families_known(solved, small_cfg, small_scen):
    bad = solved[2].copy()
    bad.p_buy[:] = 100.0
    bad.grid_flag[:] = 0.5
    fams = audit_solution(bad, small_scen, small_cfg).families()
    assert fams and set(fams) <= set(AUDIT_FAMILIES)
    assert {"trade_cap", "integrality", "power_balance"} <= set(fams)


def test_audit_report_csv(tmp_path, solved, small_cfg, small_scen):
    bad = solved[2].copy()
    bad.soc[0, 0] = 0.1
    p = audit_solution(bad, small_scen, small_cfg).to_csv(tmp_path / "audit.csv")
    assert p.read_text().splitlines()[0] == "family,index,residual,detail"


# --- invariants on solved instances -----------------------------------------
def _check_invariants(cfg, scen, mode, sched, risk=None):
    b = cfg.bess
    assert np.all(np.minimum(sched.p_ch, sched.p_disch) <= 1e-6)
    assert np.all(np.minimum(sched.p_buy, sched.p_sell) <= 1e-6)
    prev = np.vstack([np.full((1, len(scen)), b.soc_init), sched.soc[:-1]])
    rec = sched.soc - prev - (b.eta_ch * sched.p_ch - sched.p_disch / b.eta_disch) / b.s_base
    assert np.abs(rec).max() <= 1e-9
    assert np.all(sched.soc[-1] >= b.soc_init - 1e-9)
    for g, d in enumerate(cfg.dgrs):
        p = np.concatenate([np.full((1, len(scen)), d.initial_power), sched.p_dgr[g]])
        step = np.diff(p, axis=0)
        assert step.max() <= d.up_rate + 1e-9 and -step.min() <= d.down_rate + 1e-9
        on = sched.p_dgr[g] > 1e-9
        assert np.all(sched.commit[g][on] == 1.0)
        v = np.concatenate([np.full((1, len(scen)), float(d.initial_on)), sched.commit[g]])
        assert np.allclose(sched.started[g] - sched.stopped[g], np.diff(v, axis=0))
    audit = audit_solution(sched, scen, cfg, mode, risk)
    assert audit.ok, audit.violations[:3]


@settings(max_examples=6, deadline=None)
@given(seed=st.integers(0, 10_000), drp=st.booleans())
def test_solved_instances_respect_invariants(cfg, seed, drp):
    c = cfg.with_(horizon=4)
    scen = build_scenarios(c.profiles, 2, seed, horizon=4)
    mode = DRP_ON if drp else DRP_OFF
    inst, sol, sched = _solve(c, scen, mode)
    _check_invariants(c, scen, mode, sched)
    assert float(scen.probs @ compute_profit(sched, scen, c, mode)) == \
        pytest.approx(sol.objective, abs=1e-6)
    if drp:
        assert np.abs(sched.pl_shift.sum(axis=0)).max() <= 1e-9
        load = np.stack([s.load[:4] for s in scen], axis=1)
        assert np.all(np.abs(sched.pl_shift) <= c.drp.participation * load + 1e-9)
        assert np.allclose(sched.pl_shift_abs, np.abs(sched.pl_shift), atol=1e-9)


def test_startup_costs_tight():
    from mgsched.config import bundled_config
    cfg = bundled_config()
    dg = tuple(dataclasses.replace(g, startup_cost=0.3, shutdown_cost=0.2, c_g=0.05)
               for g in cfg.dgrs)
    c = cfg.with_(dgrs=dg, horizon=6)
    scen = build_scenarios(c.profiles, 1, 5, horizon=6)
    _, _, sched = _solve(c, scen)
    v = np.concatenate([np.zeros((3, 1, 1)), sched.commit], axis=1)
    dv = np.diff(v, axis=1)
    su = np.array([0.3] * 3)[:, None, None]
    assert np.allclose(sched.startup_cost, su * np.maximum(dv, 0))
    assert np.allclose(sched.shutdown_cost, 0.2 * np.maximum(-dv, 0))
    _check_invariants(c, scen, DRP_OFF, sched)


def test_cdrc_risk_identity(cfg):
    c = cfg.with_(horizon=6)
    scen = build_scenarios(c.profiles, 3, 11, horizon=6)
    base = run_case(c, scen, DRP_OFF, solver=INTERNAL)
    target = base.avg_profit
    edr = float(scen.probs @ np.maximum(0, target - base.profits))
    risk = RiskSpec.cdrc(0.8, target, edr)
    inst, sol, sched = _solve(c, scen, DRP_OFF, risk)
    p = compute_profit(sched, scen, c)
    assert np.allclose(sched.risk, np.maximum(0.0, target - p), atol=1e-6)
    assert float(scen.probs @ sched.risk) <= 0.8 * edr + 1e-6
    _check_invariants(c, scen, DRP_OFF, sched, risk)


# --- schedule I/O and decomposition -------------------------------------------
def test_schedule_csv_round_trip(tmp_path, solved_drp):
    _, _, (_, _, sched) = solved_drp
    p = sched.to_csv(tmp_path / "schedule.csv")
    back = DecisionSchedule.from_csv(p)
    for k, v in sched.__dict__.items():
        if v is None:
            assert getattr(back, k) is None
        else:
            assert np.array_equal(getattr(back, k), v), k
    assert p.read_bytes().count(b"\r\n") == 1 + sched.horizon * sched.n_scenarios


def test_decomposition_matches_joint(small_cfg, cfg):
    c = small_cfg
    scen = build_scenarios(c.profiles, 3, 4, horizon=6)
    split = run_case(c, scen, DRP_OFF, solver=INTERNAL)
    joint = branch_and_bound(build_milp(c, scen).model, GAP)
    assert split.objective == pytest.approx(joint.objective, abs=1e-6)
    assert split.audit.ok


def test_infeasible_supply(small_cfg, small_scen):
    big = dataclasses.replace(small_scen[0], load=small_scen[0].load * 100)
    scen = ScenarioSet([big], seed=0)
    with pytest.warns(InfeasibleSupplyWarning):
        build_milp(small_cfg, scen)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        with pytest.raises(InfeasibleModel, match="power_balance"):
            run_case(small_cfg, scen, solver=INTERNAL)


def test_first_stage_coupling(cfg):
    c = cfg.with_(horizon=6)
    scen = build_scenarios(c.profiles, 2, 1, horizon=6)
    _, _, sched = _solve(c, scen)
    assert np.array_equal(sched.p_dgr[:, :, 0], sched.p_dgr[:, :, 1])
    assert np.array_equal(sched.bess_flag[:, 0], sched.bess_flag[:, 1])
