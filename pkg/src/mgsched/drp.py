"""Demand response: elasticity load model and shiftable-load bookkeeping."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

T_DEFAULT = 24


def default_elasticity(horizon: int = T_DEFAULT, self_e: float = -0.2,
                       cross_e: float = 0.01) -> np.ndarray:
    E = np.full((horizon, horizon), cross_e, dtype=float)
    np.fill_diagonal(E, self_e)
    return E


@dataclass(frozen=True)
class DrpParams:
    participation: float = 0.25
    incentive: tuple = (0.02,) * T_DEFAULT
    penalty: tuple = (0.0,) * T_DEFAULT
    elasticity: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    rho0: tuple = (0.2,) * T_DEFAULT

    def __post_init__(self):
        if not 0.0 <= self.participation <= 1.0:
            raise ValueError(f"participation must be in [0, 1], got {self.participation}")
        for name in ("incentive", "penalty", "rho0"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        T = len(self.incentive)
        if len(self.penalty) != T or len(self.rho0) != T:
            raise ValueError("incentive, penalty and rho0 must have the same length")
        if any(a < 0 for a in self.incentive):
            raise ValueError("incentive must be nonnegative")
        E = default_elasticity(T) if self.elasticity is None else np.array(self.elasticity, float)
        if E.shape != (T, T):
            raise ValueError(f"elasticity must be {T}x{T}, got {E.shape}")
        off = E[~np.eye(T, dtype=bool)]
        if np.any(np.diag(E) > 0) or np.any(off < 0):
            raise ValueError("elasticity needs a nonpositive diagonal and nonnegative "
                             "off-diagonal entries")
        E.setflags(write=False)
        object.__setattr__(self, "elasticity", E)

    @property
    def horizon(self) -> int:
        return len(self.incentive)

    def with_participation(self, p: float) -> "DrpParams":
        return DrpParams(p, self.incentive, self.penalty, self.elasticity, self.rho0)

    def truncated(self, horizon: int) -> "DrpParams":
        return DrpParams(self.participation, self.incentive[:horizon], self.penalty[:horizon],
                         self.elasticity[:horizon, :horizon], self.rho0[:horizon])

    def to_dict(self) -> dict:
        return {"participation": self.participation, "incentive": list(self.incentive),
                "penalty": list(self.penalty), "rho0": list(self.rho0),
                "elasticity": self.elasticity.tolist()}

    @classmethod
    def from_dict(cls, d: dict, base_dir: Optional[Path] = None) -> "DrpParams":
        E = d.get("elasticity")
        if isinstance(E, str):
            path = Path(E)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            E = load_elasticity_csv(path)
        elif isinstance(E, dict):
            E = default_elasticity(len(d.get("incentive", [0] * T_DEFAULT)),
                                   E.get("self", -0.2), E.get("cross", 0.01))
        kw = {k: d[k] for k in ("participation", "incentive", "penalty", "rho0") if k in d}
        return cls(elasticity=E, **kw)


def load_elasticity_csv(path: Union[str, Path]) -> np.ndarray:
    """Square matrix, one row per line; a non-numeric first row is skipped as header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        [float(v) for v in rows[0]]
    except ValueError:
        rows = rows[1:]
    E = np.array([[float(v) for v in r] for r in rows])
    if E.ndim != 2 or E.shape[0] != E.shape[1]:
        raise ValueError(f"elasticity CSV must be square, got {E.shape}")
    return E


def responsive_load(pl0: Sequence[float], rho: Sequence[float], params: DrpParams) -> np.ndarray:
    """Load after customers react to prices and incentives (analysis only)."""
    pl0 = np.asarray(pl0, dtype=float)
    rho = np.asarray(rho, dtype=float)
    rho0 = np.asarray(params.rho0, dtype=float)
    if not (pl0.shape == rho.shape == rho0.shape):
        raise ValueError("pl0, rho and rho0 must have matching lengths")
    if np.any(rho0 == 0):
        raise ZeroDivisionError("rho0 must be nonzero in every hour")
    rel = (rho - rho0 + np.asarray(params.incentive) + np.asarray(params.penalty)) / rho0
    return pl0 * (1.0 + params.elasticity @ rel)


def drp_cost(pl_shift_abs: Sequence[float], incentive: Sequence[float]) -> float:
    s = np.asarray(pl_shift_abs, dtype=float)
    a = np.asarray(incentive, dtype=float)
    if s.shape != a.shape:
        raise ValueError("shift and incentive vectors differ in length")
    if np.any(s < 0):
        raise ValueError("absolute shifts must be nonnegative")
    return float(s @ a)


@dataclass(frozen=True)
class DrpBlock:
    """Linear description of the shiftable load for one scenario.

    Variables per hour: ``shift`` (signed, boxed), ``up`` and ``down``
    (nonnegative split of the shift).  Rows: ``shift - up + down == 0`` per
    hour and ``sum(shift) == 0``.  Served load is ``pl0 + shift``.
    """

    shift_lb: np.ndarray
    shift_ub: np.ndarray
    incentive: np.ndarray
    pl0: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.pl0)

    def served_load(self, shift: Sequence[float]) -> np.ndarray:
        return self.pl0 + np.asarray(shift, dtype=float)

    def split_rows(self) -> List[Tuple[dict, str, float]]:
        """Rows in terms of symbolic keys ``('shift'|'up'|'down', t)``."""
        rows = [({("shift", t): 1.0, ("up", t): -1.0, ("down", t): 1.0}, "E", 0.0)
                for t in range(self.horizon)]
        rows.append(({("shift", t): 1.0 for t in range(self.horizon)}, "E", 0.0))
        return rows


def drp_constraint_block(pl0: Sequence[float], params: DrpParams) -> DrpBlock:
    pl0 = np.asarray(pl0, dtype=float)
    cap = params.participation * np.abs(pl0)
    inc = np.asarray(params.incentive[: len(pl0)], dtype=float)
    if len(inc) != len(pl0):
        raise ValueError("DRP incentive vector shorter than the horizon")
    return DrpBlock(-cap, cap, inc, pl0)
