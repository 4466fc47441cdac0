"""Bounded-variable revised simplex.

Every row ``lo <= a x <= hi`` gets a logical column ``s`` with ``a x - s = 0``
and ``lo <= s <= hi``, so the whole problem is ``[A, -I] z = 0`` with box
bounds on ``z``.  The basis is kept as a sparse LU factor plus product-form
eta updates and refactorised periodically.

Primal simplex uses a composite phase 1 (sum of bound infeasibilities).  The
dual simplex is used to re-optimise from a dual-feasible warm basis after
bound changes, which is what branch-and-bound needs.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .model import INF, MilpModel, Solution, Status

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
DUAL_TOL = 1e-9
REFACTOR_EVERY = 64
BLAND_AFTER = 50

BASIC, AT_LB, AT_UB, FREE = 0, 1, 2, 3


class NumericalError(RuntimeError):
    pass


@dataclass
class Basis:
    """Snapshot of a simplex basis, reusable as a warm start."""

    head: np.ndarray    # basic variable per row position
    status: np.ndarray  # per-variable status code

    def copy(self) -> "Basis":
        return Basis(self.head.copy(), self.status.copy())


class _Factor:
    def __init__(self, A: sparse.csc_matrix, head: np.ndarray):
        self.m = len(head)
        B = A[:, head].tocsc()
        try:
            self.lu = splu(B, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise NumericalError(f"singular basis matrix ({exc})") from exc
        self.etas: List[Tuple[int, np.ndarray]] = []

    def ftran(self, a: np.ndarray) -> np.ndarray:
        w = self.lu.solve(np.asarray(a, dtype=float))
        for r, alpha in self.etas:
            wr = w[r] / alpha[r]
            w -= alpha * wr
            w[r] = wr
        return w

    def btran(self, c: np.ndarray) -> np.ndarray:
        v = np.array(c, dtype=float)
        for r, alpha in reversed(self.etas):
            v[r] = (v[r] - (alpha @ v - alpha[r] * v[r])) / alpha[r]
        return self.lu.solve(v, trans="T")

    def update(self, r: int, alpha: np.ndarray) -> None:
        self.etas.append((r, alpha.copy()))


class BoundedSimplex:
    """LP ``min c z  s.t. [A -I] z = 0, lb <= z <= ub`` for a fixed matrix.

    The instance can be re-solved with different bounds (and a warm basis),
    which is how the branch-and-bound driver uses it.
    """

    def __init__(self, A: sparse.spmatrix, c: np.ndarray, lb: np.ndarray, ub: np.ndarray,
                 row_lo: np.ndarray, row_hi: np.ndarray):
        A = sparse.csr_matrix(A, dtype=float)
        self.m, self.n = A.shape
        self.A = sparse.hstack([A, -sparse.identity(self.m, format="csr")], format="csc")
        self.AT = self.A.T.tocsr()
        self.N = self.n + self.m
        self.cost = np.concatenate([np.asarray(c, dtype=float), np.zeros(self.m)])
        self.lb = np.concatenate([np.asarray(lb, dtype=float), np.asarray(row_lo, dtype=float)])
        self.ub = np.concatenate([np.asarray(ub, dtype=float), np.asarray(row_hi, dtype=float)])
        self.iterations = 0

    @classmethod
    def from_model(cls, model: MilpModel) -> "BoundedSimplex":
        sign = -1.0 if model.sense == "max" else 1.0
        lo, hi = model.row_bounds()
        return cls(model.matrix(), sign * model.objective_vector(), model.lower_bounds(),
                   model.upper_bounds(), lo, hi)

    # ------------------------------------------------------------------
    def slack_basis(self) -> Basis:
        head = np.arange(self.n, self.N)
        status = np.empty(self.N, dtype=np.int8)
        status[self.n:] = BASIC
        for j in range(self.n):
            status[j] = self._resting_status(j, self.lb[j], self.ub[j], AT_LB)
        return Basis(head, status)

    @staticmethod
    def _resting_status(j, lo, hi, preferred):
        if preferred == AT_UB and hi < INF:
            return AT_UB
        if lo > -INF:
            return AT_LB
        if hi < INF:
            return AT_UB
        return FREE

    def solve(self, lb: Optional[np.ndarray] = None, ub: Optional[np.ndarray] = None,
              basis: Optional[Basis] = None, max_iter: Optional[int] = None,
              deadline: Optional[float] = None) -> "LPResult":
        """Solve with structural bounds ``lb``/``ub`` (defaults: the model's)."""
        L = self.lb.copy()
        U = self.ub.copy()
        if lb is not None:
            L[: self.n] = lb
        if ub is not None:
            U[: self.n] = ub
        if np.any(L > U + FEAS_TOL):
            return LPResult(Status.INFEASIBLE, message="crossed bounds")
        if max_iter is None:
            max_iter = 50 * (self.N + 10)
        run = _Run(self, L, U, basis, max_iter, deadline)
        return run.execute()


@dataclass
class LPResult:
    status: Status
    z: Optional[np.ndarray] = None
    objective: float = math.nan
    y: Optional[np.ndarray] = None
    d: Optional[np.ndarray] = None
    basis: Optional[Basis] = None
    iterations: int = 0
    message: str = ""


class _Run:
    """State of one simplex solve."""

    def __init__(self, lp: BoundedSimplex, L, U, basis, max_iter, deadline):
        self.lp = lp
        self.L, self.U = L, U
        self.max_iter = max_iter
        self.deadline = deadline
        self.iters = 0
        self.m, self.N = lp.m, lp.N
        if basis is None:
            basis = lp.slack_basis()
        self.head = basis.head.astype(int).copy()
        self.status = basis.status.astype(np.int8).copy()
        self.z = np.zeros(self.N)
        self._place_nonbasics()
        self.factor: Optional[_Factor] = None

    # helpers -------------------------------------------------------------
    def _place_nonbasics(self):
        L, U, st = self.L, self.U, self.status
        for j in np.flatnonzero(st != BASIC):
            s = st[j]
            if s == AT_UB and U[j] < INF:
                self.z[j] = U[j]
            elif s == AT_LB and L[j] > -INF:
                self.z[j] = L[j]
            else:
                s = BoundedSimplex._resting_status(j, L[j], U[j], s)
                st[j] = s
                self.z[j] = L[j] if s == AT_LB else (U[j] if s == AT_UB else 0.0)

    def _refactor(self):
        try:
            self.factor = _Factor(self.lp.A, self.head)
        except NumericalError:
            self._repair_basis()
            self.factor = _Factor(self.lp.A, self.head)
        self._compute_xb()

    def _repair_basis(self):
        """Swap dependent basic columns for logicals until the basis is regular."""
        from scipy.linalg import lu, qr

        A = self.lp.A
        n = self.lp.n
        B = A[:, self.head].toarray()
        _, R, P = qr(B, pivoting=True, mode="economic")
        diag = np.abs(np.diag(R))
        rank = int(np.sum(diag > 1e-9 * max(1.0, diag.max(initial=1.0))))
        keep = np.sort(P[:rank])
        dropped = self.head[P[rank:]]
        # rows left without a pivot by the independent columns get their logicals
        perm, _, _ = lu(B[:, keep])
        row_of = np.argmax(perm, axis=0)
        free_rows = row_of[rank:]
        new_head = np.concatenate([self.head[keep], n + free_rows])
        if len(set(new_head.tolist())) != self.m:
            raise NumericalError("could not repair a singular basis")
        for j in dropped:
            self.status[j] = BoundedSimplex._resting_status(j, self.L[j], self.U[j], AT_LB)
        self.status[new_head] = BASIC
        self.head = new_head
        self._place_nonbasics()

    def _compute_xb(self):
        nb = self.status != BASIC
        rhs = -(self.lp.A[:, nb] @ self.z[nb])
        self.z[self.head] = self.factor.ftran(rhs)

    def _duals(self, cost):
        y = self.factor.btran(cost[self.head])
        d = cost - self.lp.AT @ y
        d[self.head] = 0.0
        return y, d

    def _infeasibility(self):
        xb = self.z[self.head]
        below = self.L[self.head] - xb
        above = xb - self.U[self.head]
        return below, above

    def _out_of_time(self):
        return self.deadline is not None and time.monotonic() > self.deadline

    def _pivot(self, r: int, q: int, alpha: np.ndarray, leave_status: int, leave_value: float):
        leaving = self.head[r]
        self.head[r] = q
        self.status[q] = BASIC
        self.status[leaving] = leave_status
        self.z[leaving] = leave_value
        self.factor.update(r, alpha)
        if len(self.factor.etas) >= REFACTOR_EVERY:
            self._refactor()

    # driver --------------------------------------------------------------
    def execute(self) -> LPResult:
        lp = self.lp
        if self.m == 0:
            return self._solve_unconstrained()
        self._refactor()
        y, d = self._duals(lp.cost)
        below, above = self._infeasibility()
        primal_infeasible = max(below.max(initial=0.0), above.max(initial=0.0)) > FEAS_TOL
        if primal_infeasible and self._dual_feasible(d):
            res = self._dual_simplex()
            if res is not None:
                return res
        return self._primal_simplex()

    def _solve_unconstrained(self) -> LPResult:
        c = self.lp.cost
        for j in range(self.N):
            if c[j] > 0:
                if self.L[j] == -INF:
                    return LPResult(Status.UNBOUNDED, message="unbounded variable")
                self.z[j] = self.L[j]
            elif c[j] < 0:
                if self.U[j] == INF:
                    return LPResult(Status.UNBOUNDED, message="unbounded variable")
                self.z[j] = self.U[j]
        return LPResult(Status.OPTIMAL, self.z.copy(), float(c @ self.z), np.zeros(0), c.copy(),
                        Basis(self.head.copy(), self.status.copy()))

    def _dual_feasible(self, d) -> bool:
        st = self.status
        bad = ((st == AT_LB) & (d < -DUAL_TOL) & (self.U > self.L)) | \
              ((st == AT_UB) & (d > DUAL_TOL) & (self.U > self.L)) | \
              ((st == FREE) & (np.abs(d) > DUAL_TOL))
        return not bad.any()

    def _dual_simplex(self) -> Optional[LPResult]:
        lp = self.lp
        while True:
            if self.iters >= self.max_iter or self._out_of_time():
                return None
            below, above = self._infeasibility()
            viol = np.maximum(below, above)
            r = int(np.argmax(viol))
            if viol[r] <= FEAS_TOL:
                return None  # primal feasible: let primal phase 2 certify
            y, d = self._duals(lp.cost)
            e = np.zeros(self.m)
            e[r] = 1.0
            rho = self.factor.btran(e)
            arow = lp.AT @ rho
            up = below[r] > 0  # leaving variable must increase to its lower bound
            st = self.status
            movable = (st != BASIC) & (self.U > self.L)
            if up:
                elig = movable & (((st == AT_LB) & (arow < -PIVOT_TOL)) |
                                  ((st == AT_UB) & (arow > PIVOT_TOL)) |
                                  ((st == FREE) & (np.abs(arow) > PIVOT_TOL)))
            else:
                elig = movable & (((st == AT_LB) & (arow > PIVOT_TOL)) |
                                  ((st == AT_UB) & (arow < -PIVOT_TOL)) |
                                  ((st == FREE) & (np.abs(arow) > PIVOT_TOL)))
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return self._finish(Status.INFEASIBLE, "dual unbounded")
            absd = np.abs(d[cand])
            absa = np.abs(arow[cand])
            theta_max = np.min((absd + DUAL_TOL) / absa)
            ok = cand[(absd / absa) <= theta_max]
            q = int(ok[np.argmax(np.abs(arow[ok]))])
            alpha = self.factor.ftran(lp.A[:, q].toarray().ravel())
            if abs(alpha[r]) < PIVOT_TOL or abs(alpha[r] - arow[q]) > 1e-7 * (1 + abs(arow[q])):
                self._refactor()
                self.iters += 1
                continue
            leaving = self.head[r]
            target = self.L[leaving] if up else self.U[leaving]
            step = (self.z[leaving] - target) / alpha[r]
            self.z[self.head] -= alpha * step
            self.z[q] += step
            self._pivot(r, q, alpha, AT_LB if up else AT_UB, target)
            self.iters += 1

    def _primal_simplex(self) -> LPResult:
        lp = self.lp
        degenerate = 0
        bland = False
        while True:
            if self.iters >= self.max_iter:
                return self._finish(Status.NUMERICAL, "iteration limit")
            if self._out_of_time():
                return self._finish(Status.TIME_LIMIT, "time limit")
            below, above = self._infeasibility()
            phase1 = max(below.max(initial=0.0), above.max(initial=0.0)) > FEAS_TOL
            if phase1:
                cost = np.zeros(self.N)
                cost[self.head[below > FEAS_TOL]] = -1.0
                cost[self.head[above > FEAS_TOL]] = 1.0
            else:
                cost = lp.cost
            y, d = self._duals(cost)
            st = self.status
            movable = (st != BASIC) & (self.U > self.L)
            inc = movable & ((st == AT_LB) | (st == FREE)) & (d < -DUAL_TOL)
            dec = movable & ((st == AT_UB) | (st == FREE)) & (d > DUAL_TOL)
            cand = np.flatnonzero(inc | dec)
            if cand.size == 0:
                if phase1:
                    return self._finish(Status.INFEASIBLE, "phase 1 optimum is infeasible")
                return self._finish(Status.OPTIMAL, "")
            if bland:
                q = int(cand[0])
            else:
                q = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if inc[q] else -1.0
            alpha = self.factor.ftran(lp.A[:, q].toarray().ravel())
            theta, r, leave_status = self._ratio_test(alpha, direction, q, phase1, below, above,
                                                      bland)
            if theta == INF:
                if phase1:
                    self._refactor()
                    self.iters += 1
                    continue
                return self._finish(Status.UNBOUNDED, "unbounded ray")
            if theta <= 1e-12:
                degenerate += 1
                if degenerate >= BLAND_AFTER:
                    bland = True
            else:
                degenerate = 0
                bland = False
            self.z[self.head] -= direction * theta * alpha
            self.z[q] += direction * theta
            if r < 0:
                self.status[q] = AT_UB if direction > 0 else AT_LB
                self.z[q] = self.U[q] if direction > 0 else self.L[q]
            else:
                leaving = self.head[r]
                value = self.L[leaving] if leave_status == AT_LB else self.U[leaving]
                self._pivot(r, q, alpha, leave_status, value)
            self.iters += 1

    def _ratio_test(self, alpha, direction, q, phase1, below, above, bland):
        """Harris two-pass ratio test.  Returns (step, row or -1 for bound flip, status)."""
        delta = -direction * alpha  # rate of change of each basic variable
        head = self.head
        xb = self.z[head]
        Lb, Ub = self.L[head], self.U[head]
        dec = delta < -PIVOT_TOL
        inc = delta > PIVOT_TOL
        if phase1:
            feas = (below <= FEAS_TOL) & (above <= FEAS_TOL)
            # infeasible variables only stop the step once they become feasible
            lo_lim = dec & feas & (Lb > -INF) | (dec & (above > FEAS_TOL))
            hi_lim = inc & feas & (Ub < INF) | (inc & (below > FEAS_TOL))
            lo_target = np.where(above > FEAS_TOL, Ub, Lb)
            hi_target = np.where(below > FEAS_TOL, Lb, Ub)
        else:
            lo_lim = dec & (Lb > -INF)
            hi_lim = inc & (Ub < INF)
            lo_target, hi_target = Lb, Ub
        own = self.U[q] - self.L[q]

        rows = np.flatnonzero(lo_lim | hi_lim)
        if rows.size == 0:
            if own < INF:
                return own, -1, None
            return INF, -1, None
        rate = np.abs(delta[rows])
        gap = np.where(lo_lim[rows], xb[rows] - lo_target[rows], hi_target[rows] - xb[rows])
        gap = np.maximum(gap, 0.0)
        if bland:
            ratios = gap / rate
            tmin = ratios.min()
            ties = rows[ratios <= tmin + 1e-12]
            k = int(ties[np.argmin(head[ties])])
            theta = float(tmin)
        else:
            tmax = np.min((gap + FEAS_TOL * 0.1) / rate)
            ok = (gap / rate) <= tmax
            pick = np.flatnonzero(ok)
            k = int(rows[pick[np.argmax(rate[pick])]])
            theta = float(max(gap[pick[np.argmax(rate[pick])]] /
                              rate[pick[np.argmax(rate[pick])]], 0.0))
        if own < INF and own <= theta:
            return own, -1, None
        leave_status = AT_LB if lo_lim[k] and lo_target[k] == Lb[k] else AT_UB
        if phase1 and (below[k] > FEAS_TOL):
            leave_status = AT_LB
        elif phase1 and (above[k] > FEAS_TOL):
            leave_status = AT_UB
        return theta, k, leave_status

    def _finish(self, status: Status, message: str) -> LPResult:
        basis = Basis(self.head.copy(), self.status.copy())
        self.lp.iterations += self.iters
        if status != Status.OPTIMAL:
            return LPResult(status, basis=basis, iterations=self.iters, message=message)
        self._refactor()
        below, above = self._infeasibility()
        worst = max(below.max(initial=0.0), above.max(initial=0.0))
        if worst > FEAS_TOL:
            # fresh factorisation disagrees with the updated iterate: continue from it
            if self.iters < self.max_iter:
                self.iters += 1
                return self._primal_simplex()
            return LPResult(Status.NUMERICAL, basis=basis, iterations=self.iters,
                            message=f"primal residual {worst:.3e} after refactorisation; "
                                    f"{self._condition_note()}")
        y, d = self._duals(self.lp.cost)
        return LPResult(Status.OPTIMAL, self.z.copy(), float(self.lp.cost @ self.z), y, d,
                        Basis(self.head.copy(), self.status.copy()), self.iters, message)

    def _condition_note(self) -> str:
        if self.m > 2000:
            return "basis too large for a condition estimate"
        B = self.lp.A[:, self.head].toarray()
        return f"basis condition number ~ {np.linalg.cond(B):.3e}"


def solve_lp(model: MilpModel, lb: Optional[np.ndarray] = None, ub: Optional[np.ndarray] = None,
             time_limit: Optional[float] = None) -> Solution:
    """Solve the continuous relaxation of ``model``.

    Integrality flags are ignored.  Returns a :class:`Solution` whose ``duals``
    are row multipliers and ``reduced_costs`` structural reduced costs, both in
    the model's own objective sense.
    """
    t0 = time.monotonic()
    lp = BoundedSimplex.from_model(model)
    deadline = None if time_limit is None else t0 + time_limit
    res = lp.solve(lb, ub, deadline=deadline)
    return lp_result_to_solution(model, lp, res, time.monotonic() - t0)


def lp_result_to_solution(model: MilpModel, lp: BoundedSimplex, res: LPResult,
                          wall: float) -> Solution:
    if res.status != Status.OPTIMAL:
        return Solution(res.status, wall_time=wall, message=res.message,
                        iterations=res.iterations, basis=res.basis)
    sign = -1.0 if model.sense == "max" else 1.0
    x = res.z[: lp.n].copy()
    obj = model.evaluate(x)
    return Solution(Status.OPTIMAL, obj, x, bound=obj, gap=0.0, wall_time=wall,
                    duals=sign * res.y, reduced_costs=sign * res.d[: lp.n], basis=res.basis,
                    iterations=res.iterations)
