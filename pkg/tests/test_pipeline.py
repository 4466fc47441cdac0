import json

import numpy as np
import pytest

from mgsched.milp.model import SolveOptions, Status
from mgsched.mgmodel import DRP_OFF, DRP_ON
from mgsched.pipeline import (DEFAULT_LAMBDAS, FULL_TIME_LIMIT, RiskSettings, SolverChoice,
                              run_step3_wcdrc, run_study)
from mgsched.scenarios import build_scenarios

INTERNAL = SolverChoice("internal", options=SolveOptions(rel_gap=1e-9))


@pytest.fixture(scope="module")
def small_study(cfg):
    c = cfg.with_(horizon=6)
    scen = build_scenarios(c.profiles, 3, 42, horizon=6)
    settings = RiskSettings(lambda_grid=(1.0,) + DEFAULT_LAMBDAS)
    return c, scen, run_study(c, scen, settings, INTERNAL)


def test_target_is_weighted_average(small_study):
    _, scen, rep = small_study
    for b in (rep.wcdrc, rep.drp_wcdrc):
        assert b.target == pytest.approx(float(scen.probs @ b.profits), abs=1e-12)
        assert np.allclose(b.risks, np.maximum(0, b.target - b.profits))


def test_table_averages_recomputed(small_study):
    _, scen, rep = small_study
    tabs = rep.tables()
    for name in ("table2", "table5"):
        rows = tabs[name]
        assert rows[0] == ["scenario", "prob", "profit", "risk"]
        body, avg = rows[1:-1], rows[-1]
        p = np.array([r[1] for r in body])
        assert avg[0] == "average"
        assert avg[2] == pytest.approx(sum(pi * r[2] for pi, r in zip(p, body)), abs=1e-12)
        assert avg[3] == pytest.approx(sum(pi * r[3] for pi, r in zip(p, body)), abs=1e-12)
    for name in ("table3", "table6"):
        for row in tabs[name][1:]:
            vals = np.array(row[2:-1], float)
            assert row[-1] == pytest.approx(float(scen.probs @ vals), abs=1e-9)


def test_sweep_shapes_and_lambda_one(small_study):
    _, _, rep = small_study
    tabs = rep.tables()
    assert len(tabs["table4"]) == 1 + 8 and len(tabs["table7"]) == 1 + 8
    assert len(tabs["sensitivity_profit"]) == 1 + 3
    assert rep.cdrc.runs[1.0].avg_profit == pytest.approx(rep.wcdrc.run.avg_profit, abs=1e-6)
    assert rep.drp_cdrc.runs[1.0].avg_profit == pytest.approx(rep.drp_wcdrc.run.avg_profit,
                                                              abs=1e-6)


def test_sweep_trends(small_study):
    _, _, rep = small_study
    for sw in (rep.cdrc, rep.drp_cdrc):
        lams = sorted(l for l, r in sw.runs.items() if r.status == Status.OPTIMAL)
        prof = [sw.runs[l].avg_profit for l in lams]
        edr = [sw.runs[l].edr for l in lams]
        assert all(b >= a - 1e-6 for a, b in zip(prof, prof[1:]))
        assert all(b >= a - 1e-6 for a, b in zip(edr, edr[1:]))
        for l in lams:
            assert sw.runs[l].edr <= l * sw.baseline.edr_baseline + 1e-6
    assert rep.drp_wcdrc.run.avg_profit >= rep.wcdrc.run.avg_profit - 1e-9
    assert not rep.audit_failures()


def test_report_files(tmp_path, small_study):
    _, _, rep = small_study
    paths = rep.write(tmp_path)
    names = {p.name for p in paths}
    assert {"table2.csv", "table7.csv", "summary.json", "summary.txt"} <= names
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["audit_violations"] == 0 and len(summary["lambda_sweep"]) == 8
    assert "expected downside risk" in (tmp_path / "summary.txt").read_text()
    assert (tmp_path / "table2.csv").read_bytes().endswith(b"\r\n")


def test_fixed_target(small_cfg, small_scen):
    b = run_step3_wcdrc(small_cfg, small_scen, INTERNAL, target=100.0)
    assert b.target == 100.0 and b.edr_baseline == pytest.approx(100.0 - b.run.avg_profit)


def test_settings_validation():
    with pytest.raises(ValueError):
        RiskSettings(lambda_grid=(0.0,))
    with pytest.raises(ValueError):
        RiskSettings(participation_grid=())
    with pytest.raises(ValueError):
        SolverChoice("gurobi")


def test_auto_solver(monkeypatch):
    monkeypatch.delenv("MG_EXT_SOLVER", raising=False)
    auto = SolverChoice("auto")
    assert auto.resolve(1).name == "internal" and auto.resolve(1).options.time_limit is None
    assert auto.resolve(5).options.time_limit == FULL_TIME_LIMIT
    monkeypatch.setenv("MG_EXT_SOLVER", "x {mps} {sol}")
    assert auto.resolve(5).name == "external" and auto.resolve(5).command == "x {mps} {sol}"
