"""Solver-neutral container for mixed-integer linear programs."""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Tuple

import numpy as np
from scipy import sparse

INF = math.inf

LE, EQ, GE = "<=", "=", ">="
_SENSES = (LE, EQ, GE)


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    GAP_LIMIT = "gap_limit"
    NODE_LIMIT = "node_limit"
    TIME_LIMIT = "time_limit"
    NUMERICAL = "numerical"


class ModelError(ValueError):
    """Raised for malformed models (bad bounds, unknown variables)."""


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = INF
    integer: bool = False

    @property
    def is_binary(self) -> bool:
        return self.integer and self.lb >= 0.0 and self.ub <= 1.0


@dataclass
class Constraint:
    """Sparse row ``coeffs @ x  <sense>  rhs``.

    ``range`` follows the MPS convention: a ranged row is ``lo <= a x <= hi``
    with ``|range|`` as the width (sign only matters for equality rows).
    """

    name: str
    coeffs: Dict[int, float]
    sense: str
    rhs: float
    range: Optional[float] = None

    def bounds(self) -> Tuple[float, float]:
        r = self.range
        if self.sense == LE:
            return (-INF if r is None else self.rhs - abs(r)), self.rhs
        if self.sense == GE:
            return self.rhs, (INF if r is None else self.rhs + abs(r))
        if r is None or r == 0:
            return self.rhs, self.rhs
        return (self.rhs, self.rhs + r) if r > 0 else (self.rhs + r, self.rhs)


@dataclass
class SolveOptions:
    int_tol: float = 1e-6
    rel_gap: float = 1e-6
    node_limit: Optional[int] = None
    time_limit: Optional[float] = None
    branching: str = "most_fractional"
    node_selection: str = "best_bound"
    deterministic: bool = True

    def __post_init__(self):
        if self.int_tol <= 0 or self.rel_gap <= 0:
            raise ValueError("tolerances must be positive")
        if self.branching not in ("most_fractional", "first_fractional"):
            raise ValueError(f"unknown branching rule {self.branching!r}")
        if self.node_selection not in ("best_bound", "depth_first"):
            raise ValueError(f"unknown node selection {self.node_selection!r}")


@dataclass
class Solution:
    status: Status
    objective: float = math.nan
    x: Optional[np.ndarray] = None
    bound: float = math.nan
    gap: float = math.nan
    nodes: int = 0
    wall_time: float = 0.0
    duals: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    basis: Optional[object] = None
    message: str = ""
    iterations: int = 0

    @property
    def is_optimal(self) -> bool:
        return self.status == Status.OPTIMAL

    @property
    def has_point(self) -> bool:
        return self.x is not None

    def values(self, model: "MilpModel") -> Dict[str, float]:
        if self.x is None:
            return {}
        return {v.name: float(self.x[i]) for i, v in enumerate(model.variables)}


class MilpModel:
    """Variables, sparse constraint rows and a linear objective.

    Variables and rows are addressed by integer index; names must be unique
    and free of whitespace so the model can round-trip through MPS.
    """

    def __init__(self, name: str = "model", sense: str = "max"):
        if sense not in ("max", "min"):
            raise ModelError(f"objective sense must be 'max' or 'min', got {sense!r}")
        self.name = name
        self.sense = sense
        self.variables: List[Variable] = []
        self.constraints: List[Constraint] = []
        self.objective: Dict[int, float] = {}
        self.obj_constant = 0.0
        self.big_m: Dict[str, Tuple[float, str]] = {}
        self._var_index: Dict[str, int] = {}
        self._row_index: Dict[str, int] = {}

    # construction -----------------------------------------------------
    def add_var(self, name: str, lb: float = 0.0, ub: float = INF,
                integer: bool = False, obj: float = 0.0) -> int:
        if name in self._var_index:
            raise ModelError(f"duplicate variable name {name!r}")
        if any(ch.isspace() for ch in name) or not name:
            raise ModelError(f"invalid variable name {name!r}")
        lb, ub = float(lb), float(ub)
        if math.isnan(lb) or math.isnan(ub) or lb > ub:
            raise ModelError(f"inconsistent bounds for {name}: [{lb}, {ub}]")
        idx = len(self.variables)
        self.variables.append(Variable(name, lb, ub, bool(integer)))
        self._var_index[name] = idx
        if obj:
            self.objective[idx] = float(obj)
        return idx

    def add_binary(self, name: str, obj: float = 0.0) -> int:
        return self.add_var(name, 0.0, 1.0, integer=True, obj=obj)

    def add_constraint(self, coeffs: Mapping[int, float] | Iterable[Tuple[int, float]],
                       sense: str, rhs: float, name: Optional[str] = None,
                       range: Optional[float] = None) -> int:
        if sense not in _SENSES:
            raise ModelError(f"unknown constraint sense {sense!r}")
        items = coeffs.items() if isinstance(coeffs, Mapping) else coeffs
        row: Dict[int, float] = {}
        n = len(self.variables)
        for j, a in items:
            if not 0 <= j < n:
                raise ModelError(f"constraint references unknown variable index {j}")
            row[j] = row.get(j, 0.0) + float(a)
        row = {j: a for j, a in row.items() if a != 0.0}
        idx = len(self.constraints)
        if name is None:
            name = f"R{idx}"
        if name in self._row_index:
            raise ModelError(f"duplicate constraint name {name!r}")
        self.constraints.append(Constraint(name, row, sense, float(rhs), range))
        self._row_index[name] = idx
        return idx

    def set_objective(self, coeffs: Mapping[int, float], sense: Optional[str] = None,
                      constant: float = 0.0) -> None:
        if sense is not None:
            if sense not in ("max", "min"):
                raise ModelError(f"objective sense must be 'max' or 'min', got {sense!r}")
            self.sense = sense
        self.objective = {int(j): float(a) for j, a in coeffs.items() if a != 0.0}
        self.obj_constant = float(constant)

    def register_big_m(self, key: str, value: float, provenance: str) -> None:
        if not math.isfinite(value) or value <= 0:
            raise ModelError(f"big-M {key} must be finite and positive, got {value}")
        self.big_m[key] = (float(value), provenance)

    # access -----------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_rows(self) -> int:
        return len(self.constraints)

    @property
    def integer_indices(self) -> np.ndarray:
        return np.array([i for i, v in enumerate(self.variables) if v.integer], dtype=int)

    def var_index(self, name: str) -> int:
        return self._var_index[name]

    def row_index(self, name: str) -> int:
        return self._row_index[name]

    def has_var(self, name: str) -> bool:
        return name in self._var_index

    def copy(self) -> "MilpModel":
        return copy.deepcopy(self)

    def relaxed(self) -> "MilpModel":
        m = self.copy()
        for v in m.variables:
            v.integer = False
        return m

    def with_bounds(self, bounds: Mapping[int, Tuple[float, float]]) -> "MilpModel":
        m = self.copy()
        for j, (lo, hi) in bounds.items():
            m.variables[j].lb, m.variables[j].ub = float(lo), float(hi)
        return m

    def lower_bounds(self) -> np.ndarray:
        return np.array([v.lb for v in self.variables], dtype=float)

    def upper_bounds(self) -> np.ndarray:
        return np.array([v.ub for v in self.variables], dtype=float)

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for j, a in self.objective.items():
            c[j] = a
        return c

    def matrix(self) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for i, con in enumerate(self.constraints):
            for j, a in con.coeffs.items():
                rows.append(i)
                cols.append(j)
                vals.append(a)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_rows, self.n_vars))

    def row_bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        lo = np.empty(self.n_rows)
        hi = np.empty(self.n_rows)
        for i, con in enumerate(self.constraints):
            lo[i], hi[i] = con.bounds()
        return lo, hi

    def evaluate(self, x: np.ndarray) -> float:
        return float(sum(a * x[j] for j, a in self.objective.items()) + self.obj_constant)

    def violations(self, x: np.ndarray, tol: float = 1e-6,
                   int_tol: Optional[float] = None) -> List[Tuple[str, float]]:
        """(name, residual) for every bound, row or integrality breach above ``tol``."""
        x = np.asarray(x, dtype=float)
        out: List[Tuple[str, float]] = []
        for j, v in enumerate(self.variables):
            r = max(v.lb - x[j], x[j] - v.ub, 0.0)
            if r > tol:
                out.append((f"bound:{v.name}", r))
            if v.integer and int_tol is not None:
                f = abs(x[j] - round(x[j]))
                if f > int_tol:
                    out.append((f"integrality:{v.name}", f))
        if self.n_rows:
            ax = self.matrix() @ x
            lo, hi = self.row_bounds()
            for i, con in enumerate(self.constraints):
                r = max(lo[i] - ax[i], ax[i] - hi[i], 0.0)
                if r > tol:
                    out.append((f"row:{con.name}", float(r)))
        return out

    def summary(self) -> Dict[str, int]:
        n_int = sum(v.integer for v in self.variables)
        return {"variables": self.n_vars, "integer": n_int,
                "continuous": self.n_vars - n_int, "constraints": self.n_rows,
                "nonzeros": sum(len(c.coeffs) for c in self.constraints)}

    def __repr__(self) -> str:
        s = self.summary()
        return (f"MilpModel({self.name!r}, {self.sense}, vars={s['variables']}, "
                f"int={s['integer']}, rows={s['constraints']})")
