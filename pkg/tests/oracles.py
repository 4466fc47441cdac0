"""Independent reference computations used by the tests.

Nothing here calls the package's own solver: LPs go to HiGHS (``highspy``)
or ``scipy.optimize.linprog``, integrals to ``scipy.integrate.quad``.
"""
import itertools
import math

import numpy as np

try:
    import highspy
except ImportError:  # pragma: no cover
    highspy = None

from mgsched.milp.model import MilpModel


def random_milp(rng, max_bin=12, max_cont=20, max_rows=11):
    """Small random MILP with bounded variables; feasibility is not guaranteed."""
    nb = int(rng.integers(1, max_bin + 1))
    nc = int(rng.integers(0, max_cont + 1))
    m = MilpModel(sense=str(rng.choice(["max", "min"])))
    for j in range(nb):
        m.add_binary(f"b{j}", obj=float(rng.normal()))
    for j in range(nc):
        m.add_var(f"c{j}", float(rng.choice([0.0, -2.0])), float(rng.choice([5.0, 10.0])),
                  obj=float(rng.normal()))
    n = nb + nc
    for _ in range(int(rng.integers(1, max_rows + 1))):
        row = {j: float(rng.normal()) for j in range(n) if rng.random() < 0.5}
        m.add_constraint(row, str(rng.choice(["<=", ">="])), float(rng.normal() * 2 + 1))
    return m


class HighsLP:
    """The LP relaxation of a model loaded once into HiGHS; bounds can be changed."""

    def __init__(self, model: MilpModel):
        if highspy is None:
            raise RuntimeError("highspy is required for this oracle")
        self.model = model
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("primal_feasibility_tolerance", 1e-9)
        h.setOptionValue("dual_feasibility_tolerance", 1e-9)
        A = model.matrix().tocsc()
        lo, hi = model.row_bounds()
        lp = highspy.HighsLp()
        lp.num_col_, lp.num_row_ = A.shape[1], A.shape[0]
        c = model.objective_vector()
        lp.col_cost_ = c if model.sense == "min" else -c
        lp.col_lower_ = model.lower_bounds()
        lp.col_upper_ = model.upper_bounds()
        lp.row_lower_ = np.where(np.isfinite(lo), lo, -highspy.kHighsInf)
        lp.row_upper_ = np.where(np.isfinite(hi), hi, highspy.kHighsInf)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr
        lp.a_matrix_.index_ = A.indices
        lp.a_matrix_.value_ = A.data
        h.passModel(lp)
        self.h = h
        self.sign = 1.0 if model.sense == "min" else -1.0

    def solve(self, lb, ub):
        """Objective in the model's own sense; None when infeasible, +-inf when unbounded."""
        n = len(lb)
        self.h.changeColsBounds(n, np.arange(n, dtype=np.int32), np.asarray(lb, float),
                                np.asarray(ub, float))
        self.h.run()
        st = self.h.getModelStatus()
        if st == highspy.HighsModelStatus.kOptimal:
            return self.sign * self.h.getInfo().objective_function_value + \
                self.model.obj_constant
        if st in (highspy.HighsModelStatus.kInfeasible,
                  highspy.HighsModelStatus.kUnboundedOrInfeasible):
            return None
        if st == highspy.HighsModelStatus.kUnbounded:
            return np.inf if self.model.sense == "max" else -np.inf
        raise RuntimeError(f"HiGHS returned {st}")


def enumerate_milp(model: MilpModel, int_idx=None):
    """Best objective over every 0/1 pattern of ``int_idx`` (default: all integers).

    Each pattern fixes those variables and solves the remaining LP with HiGHS.
    Returns None when no pattern is feasible.
    """
    int_idx = model.integer_indices if int_idx is None else np.asarray(int_idx)
    lp = HighsLP(model)
    lb0, ub0 = model.lower_bounds(), model.upper_bounds()
    best = None
    better = (lambda a, b: a > b) if model.sense == "max" else (lambda a, b: a < b)
    for bits in itertools.product((0.0, 1.0), repeat=len(int_idx)):
        lb, ub = lb0.copy(), ub0.copy()
        lb[int_idx] = bits
        ub[int_idx] = bits
        v = lp.solve(lb, ub)
        if v is not None and (best is None or better(v, best)):
            best = v
    return best


def lp_vertices_max(c, A, b):
    """max c x s.t. A x <= b, x >= 0 by enumerating basic solutions (tiny LPs only)."""
    c, A, b = map(lambda v: np.asarray(v, float), (c, A, b))
    m, n = A.shape
    G = np.vstack([A, -np.eye(n)])
    h = np.concatenate([b, np.zeros(n)])
    best = -math.inf
    for rows in itertools.combinations(range(m + n), n):
        M = G[list(rows)]
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        x = np.linalg.solve(M, h[list(rows)])
        if np.all(G @ x <= h + 1e-9):
            best = max(best, float(c @ x))
    return best
