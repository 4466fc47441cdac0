import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import HighsLP, lp_vertices_max

from mgsched.milp.model import MilpModel, ModelError, Status
from mgsched.milp.simplex import solve_lp


def _random_lp(seed, n=8, m=6, equality=False):
    rng = np.random.default_rng(seed)
    mdl = MilpModel(sense=str(rng.choice(["max", "min"])))
    for j in range(n):
        lo = float(rng.choice([0.0, -3.0, -np.inf]))
        hi = float(rng.choice([4.0, 10.0, np.inf]))
        mdl.add_var(f"x{j}", lo, hi, obj=float(rng.normal()))
    for i in range(m):
        row = {j: float(rng.normal()) for j in range(n) if rng.random() < 0.6}
        sense = "=" if equality and i == 0 else str(rng.choice(["<=", ">="]))
        width = float(rng.uniform(1, 4)) if sense != "=" and rng.random() < 0.2 else None
        mdl.add_constraint(row, sense, float(rng.normal() * 3), range=width)
    return mdl


def test_trivial_bound():
    m = MilpModel()
    x = m.add_var("x", 0, np.inf, obj=1.0)
    m.add_constraint({x: 1.0}, "<=", 3.0)
    assert solve_lp(m).objective == pytest.approx(3.0)


def test_two_variable_vertex_oracle():
    m = MilpModel()
    x = m.add_var("x", 0, np.inf, obj=3.0)
    y = m.add_var("y", 0, np.inf, obj=2.0)
    m.add_constraint({x: 1, y: 1}, "<=", 4)
    m.add_constraint({x: 1}, "<=", 2)
    sol = solve_lp(m)
    best = lp_vertices_max(np.array([3.0, 2.0]),
                                  np.array([[1, 1], [1, 0], [-1, 0], [0, -1]], float),
                                  np.array([4, 2, 0, 0], float))
    assert sol.objective == pytest.approx(best) == pytest.approx(10.0)
    assert np.allclose(sol.x, [2, 2])


def test_infeasible_and_unbounded():
    m = MilpModel()
    x = m.add_var("x", -np.inf, np.inf, obj=1.0)
    m.add_constraint({x: 1}, ">=", 1)
    m.add_constraint({x: 1}, "<=", 0)
    assert solve_lp(m).status == Status.INFEASIBLE
    u = MilpModel()
    a = u.add_var("a", 0, np.inf, obj=1.0)
    b = u.add_var("b", 0, np.inf, obj=1.0)
    u.add_constraint({a: 1, b: -1}, "<=", 1)
    assert solve_lp(u).status == Status.UNBOUNDED


def test_model_errors():
    m = MilpModel()
    m.add_var("x")
    with pytest.raises(ModelError):
        m.add_var("x")
    with pytest.raises(ModelError):
        m.add_var("bad name")
    with pytest.raises(ModelError):
        m.add_var("y", 2.0, 1.0)
    with pytest.raises(ModelError):
        m.add_constraint({5: 1.0}, "<=", 1)
    with pytest.raises(ModelError):
        m.add_constraint({0: 1.0}, "<>", 1)
    with pytest.raises(ModelError):
        m.register_big_m("M", np.inf, "none")
    with pytest.raises(ModelError):
        MilpModel(sense="up")


def _slack_checks(m, sol):
    A = m.matrix()
    lo, hi = m.row_bounds()
    act = A @ sol.x
    assert np.all(act >= lo - 1e-9) and np.all(act <= hi + 1e-9)
    lb, ub = m.lower_bounds(), m.upper_bounds()
    assert np.all(sol.x >= lb - 1e-9) and np.all(sol.x <= ub + 1e-9)
    gap_row = np.minimum(np.where(np.isfinite(lo), act - lo, np.inf),
                         np.where(np.isfinite(hi), hi - act, np.inf))
    assert np.all(np.abs(sol.duals) * np.minimum(gap_row, 1e6) <= 1e-7)
    gap_col = np.minimum(np.where(np.isfinite(lb), sol.x - lb, np.inf),
                         np.where(np.isfinite(ub), ub - sol.x, np.inf))
    assert np.all(np.abs(sol.reduced_costs) * np.minimum(gap_col, 1e6) <= 1e-7)
    # stationarity: c = A^T y + d
    assert np.allclose(m.objective_vector(), A.T @ sol.duals + sol.reduced_costs, atol=1e-7)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 100_000), eq=st.booleans())
def test_random_lp_against_highs(seed, eq):
    m = _random_lp(seed, equality=eq)
    sol = solve_lp(m)
    ref = HighsLP(m).solve(m.lower_bounds(), m.upper_bounds())
    if sol.status == Status.OPTIMAL:
        assert ref is not None and sol.objective == pytest.approx(ref, abs=1e-7, rel=1e-9)
        _slack_checks(m, sol)
    elif sol.status == Status.INFEASIBLE:
        assert ref is None
    else:
        assert sol.status == Status.UNBOUNDED and ref is not None and np.isinf(ref)


def test_bound_override_and_warm_restart():
    m = _random_lp(4)
    lb, ub = m.lower_bounds(), m.upper_bounds()
    ub = np.minimum(ub, 2.0)
    lb = np.maximum(lb, -2.0)
    sol = solve_lp(m, lb, ub)
    ref = HighsLP(m).solve(lb, ub)
    if ref is None:
        assert sol.status == Status.INFEASIBLE
    else:
        assert sol.objective == pytest.approx(ref, abs=1e-7)
