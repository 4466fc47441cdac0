"""Bridge to any MPS-capable solver run as a subprocess.

The command template (argument or ``MG_EXT_SOLVER``) must contain ``{mps}``
and ``{sol}``; both are replaced by shell-quoted paths inside a private
temporary directory which is removed once the solution file has been read.
An optional ``{sense}`` placeholder expands to ``maximize``/``minimize`` for
solvers that ignore the OBJSENSE section (CBC 2.10 does).  Examples::

    cbc {mps} -{sense} -ratioGap 1e-9 -solve -solu {sol}
    python3 -m mgsched.milp.highs_runner {mps} {sol}
"""
from __future__ import annotations

import csv
import io
import os
import re
import shlex
import subprocess
import tempfile
import time
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from .model import MilpModel, Solution, Status
from .mps import write_mps

ENV_VAR = "MG_EXT_SOLVER"
FEAS_TOL = 1e-6
PRINT_TOL = 1e-4


class BridgeError(RuntimeError):
    """The external solver could not be run or returned something unusable."""


_CBC_HEAD = re.compile(
    r"^(optimal|infeasible|integer infeasible|problem proven infeasible|unbounded|stopped)",
    re.IGNORECASE)


def _status_word(word: str) -> Status:
    w = word.strip().lower()
    if w.startswith("optimal"):
        return Status.OPTIMAL
    if "infeasible" in w:
        return Status.INFEASIBLE
    if "unbounded" in w:
        return Status.UNBOUNDED
    if "time" in w:
        return Status.TIME_LIMIT
    if "node" in w or "iteration" in w:
        return Status.NODE_LIMIT
    if "gap" in w:
        return Status.GAP_LIMIT
    if w.startswith("stopped"):
        return Status.NODE_LIMIT
    raise BridgeError(f"unrecognised solver status {word!r}")


def parse_solution_text(text: str) -> Tuple[Status, Dict[str, float]]:
    """Parse a solution file; the layout is auto-detected.

    Supported: ``name value`` lines (with optional ``status``/``objective``
    header lines), CSV with a ``name,value`` header, and CBC ``-solu`` output.
    """
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise BridgeError("empty solution file")
    first = lines[0].strip()
    values: Dict[str, float] = {}
    status = Status.OPTIMAL
    if "," in first:
        reader = csv.DictReader(io.StringIO("\n".join(lines)))
        fields = {f.lower(): f for f in (reader.fieldnames or [])}
        name_key = fields.get("name") or fields.get("variable")
        value_key = fields.get("value")
        if name_key is None or value_key is None:
            raise BridgeError(f"CSV solution needs name,value columns; got {reader.fieldnames}")
        for row in reader:
            key = row[name_key].strip()
            if key.lower() == "status":
                status = _status_word(row[value_key])
            elif key.lower() == "objective":
                continue
            else:
                values[key] = _to_float(row[value_key], key)
        return status, values
    if _CBC_HEAD.match(first):
        status = _status_word(first.split(" - ")[0])
        for ln in lines[1:]:
            tok = ln.replace("**", " ").split()
            if len(tok) < 3:
                raise BridgeError(f"unparseable CBC line {ln!r}")
            values[tok[1]] = _to_float(tok[2], tok[1])
        return status, values
    for ln in lines:
        tok = ln.split()
        if len(tok) < 2:
            raise BridgeError(f"unparseable solution line {ln!r}")
        key = tok[0]
        if key.lower() == "status":
            status = _status_word(" ".join(tok[1:]))
        elif key.lower() == "objective":
            continue
        else:
            values[key] = _to_float(tok[1], key)
    return status, values


def _to_float(tok: str, name: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise BridgeError(f"non-numeric value {tok!r} for {name}") from None


def resolve_command(solver_command: Optional[str] = None) -> str:
    cmd = solver_command or os.environ.get(ENV_VAR)
    if not cmd:
        raise BridgeError(f"no external solver configured (set {ENV_VAR})")
    if "{mps}" not in cmd or "{sol}" not in cmd:
        raise BridgeError("solver command template must contain {mps} and {sol}")
    return cmd


def external_solve(model: MilpModel, solver_command: Optional[str] = None,
                   timeout: Optional[float] = None, polish: bool = True) -> Solution:
    """Write ``model`` as MPS, run the external solver and read its answer back.

    The returned point is re-checked against the model; a point claimed
    optimal that violates any bound, row or integrality by more than 1e-6 is
    rejected with :class:`BridgeError`.  Solvers that print few digits (CBC
    writes 8 significant ones) can miss that by rounding alone; with
    ``polish`` a point off by at most ``PRINT_TOL`` keeps its integer values
    and has its continuous part recomputed by the internal LP.
    """
    template = resolve_command(solver_command)
    t0 = time.monotonic()
    with tempfile.TemporaryDirectory(prefix="mgsched-") as tmp:
        mps_path = Path(tmp) / "model.mps"
        sol_path = Path(tmp) / "model.sol"
        write_mps(model, mps_path)
        cmd = template.format(mps=shlex.quote(str(mps_path)), sol=shlex.quote(str(sol_path)),
                              sense="maximize" if model.sense == "max" else "minimize")
        try:
            proc = subprocess.run(shlex.split(cmd), capture_output=True, text=True,
                                  timeout=timeout)
        except FileNotFoundError as exc:
            raise BridgeError(f"solver executable not found: {exc.filename}") from None
        except subprocess.TimeoutExpired:
            raise BridgeError(f"external solver exceeded {timeout}s") from None
        if proc.returncode != 0:
            tail = (proc.stderr or proc.stdout)[-500:]
            raise BridgeError(f"solver exited with code {proc.returncode}: {tail}")
        if not sol_path.exists():
            raise BridgeError("solver finished without writing a solution file")
        status, values = parse_solution_text(sol_path.read_text())
    if status not in (Status.OPTIMAL, Status.NODE_LIMIT, Status.TIME_LIMIT, Status.GAP_LIMIT):
        return Solution(status, wall_time=time.monotonic() - t0, message="external")
    unknown = set(values) - {v.name for v in model.variables}
    if unknown:
        raise BridgeError(f"solution names unknown columns, e.g. {sorted(unknown)[:3]}")
    x = np.array([values.get(v.name, 0.0) for v in model.variables], dtype=float)
    bad = model.violations(x, tol=FEAS_TOL, int_tol=FEAS_TOL)
    message = "external"
    if bad and polish and max(r for _, r in bad) <= PRINT_TOL:
        polished = _polish(model, x)
        if polished is not None:
            x = polished
            bad = model.violations(x, tol=FEAS_TOL, int_tol=FEAS_TOL)
            message = "external (continuous part re-solved at full precision)"
    if bad and status == Status.OPTIMAL:
        worst = max(bad, key=lambda b: b[1])
        raise BridgeError(f"solver claimed optimal but point violates {len(bad)} checks; "
                          f"worst {worst[0]} by {worst[1]:.3e}")
    obj = model.evaluate(x)
    return Solution(status, obj, x, bound=obj, gap=0.0 if status == Status.OPTIMAL else np.nan,
                    wall_time=time.monotonic() - t0, message=message)


def _polish(model: MilpModel, x: np.ndarray) -> Optional[np.ndarray]:
    """Keep the integer assignment, recompute the continuous part with our LP."""
    from .simplex import solve_lp

    ints = model.integer_indices
    lb, ub = model.lower_bounds(), model.upper_bounds()
    lb[ints] = ub[ints] = np.round(x[ints])
    res = solve_lp(model, lb, ub)
    return res.x if res.status == Status.OPTIMAL else None


def default_cbc_command() -> Optional[str]:
    """CBC template if a ``cbc`` binary is reachable (PATH or the pulp wheel)."""
    import shutil

    exe = shutil.which("cbc")
    if exe is None:
        try:
            import pulp  # noqa: F401

            cand = Path(pulp.__file__).parent / "solverdir" / "cbc" / "linux" / "i64" / "cbc"
            exe = str(cand) if cand.exists() else None
        except ImportError:
            exe = None
    if exe is None:
        return None
    return f"{exe} {{mps}} -{{sense}} -ratioGap 1e-9 -allowableGap 1e-9 -solve -solu {{sol}}"
