"""Free-format MPS writer and reader.

The writer is deterministic: rows and columns keep model order and numbers are
printed with ``repr`` so identical models produce identical bytes.
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, List, Tuple, Union

from .model import EQ, GE, INF, LE, MilpModel, ModelError

MAX_NAME = 255
OBJ_ROW = "OBJ"

_ROW_CODE = {LE: "L", GE: "G", EQ: "E"}
_CODE_ROW = {v: k for k, v in _ROW_CODE.items()}


class MpsError(ValueError):
    pass


def _num(v: float) -> str:
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _card(code: str, a: str, b: str = "", c: str = "") -> str:
    """One data card laid out on the fixed MPS columns (2, 5, 15, 25).

    Whitespace still separates every field, so free-format readers see the
    same tokens.  Some readers (CBC) guess fixed format for short lines and
    misread cards that are not column-aligned.
    """
    return f" {code:<2} {a:<8}  {b:<8}  {c}".rstrip()


def _check_name(name: str) -> None:
    if len(name) > MAX_NAME:
        raise MpsError(f"name longer than {MAX_NAME} characters: {name[:40]}...")


def export_mps(model: MilpModel) -> str:
    names = {v.name for v in model.variables} | {c.name for c in model.constraints}
    if OBJ_ROW in {c.name for c in model.constraints}:
        raise MpsError(f"row name {OBJ_ROW!r} is reserved for the objective")
    for n in names:
        _check_name(n)

    out: List[str] = [f"NAME {model.name}"]
    out.append("OBJSENSE")
    out.append("    MAX" if model.sense == "max" else "    MIN")
    out.append("ROWS")
    out.append(f" N  {OBJ_ROW}")
    for con in model.constraints:
        out.append(f" {_ROW_CODE[con.sense]}  {con.name}")

    # column-major view of the rows
    cols: List[List[Tuple[str, float]]] = [[] for _ in model.variables]
    for j, a in sorted(model.objective.items()):
        cols[j].append((OBJ_ROW, a))
    for con in model.constraints:
        for j, a in con.coeffs.items():
            cols[j].append((con.name, a))

    out.append("COLUMNS")
    in_int = False
    marker = 0
    for j, var in enumerate(model.variables):
        if var.integer and not in_int:
            out.append(_card("", f"MARKER{marker}", "'MARKER'", "'INTORG'"))
            in_int = True
        elif not var.integer and in_int:
            out.append(_card("", f"MARKER{marker}", "'MARKER'", "'INTEND'"))
            marker += 1
            in_int = False
        entries = cols[j]
        if not entries:
            # keep empty columns visible to readers
            out.append(_card("", var.name, OBJ_ROW, "0"))
        for row, a in entries:
            out.append(_card("", var.name, row, _num(a)))
    if in_int:
        out.append(_card("", f"MARKER{marker}", "'MARKER'", "'INTEND'"))

    out.append("RHS")
    if model.obj_constant:
        out.append(_card("", "RHS", OBJ_ROW, _num(-model.obj_constant)))
    for con in model.constraints:
        if con.rhs != 0.0:
            out.append(_card("", "RHS", con.name, _num(con.rhs)))

    ranged = [c for c in model.constraints if c.range is not None]
    if ranged:
        out.append("RANGES")
        for con in ranged:
            out.append(_card("", "RNG", con.name, _num(con.range)))

    out.append("BOUNDS")
    for var in model.variables:
        out.extend(_bound_lines(var))
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def _bound_lines(var) -> List[str]:
    n, lb, ub = var.name, var.lb, var.ub
    if var.integer and lb == 0.0 and ub == 1.0:
        return [_card("BV", "BND", n)]
    if lb == ub:
        return [_card("FX", "BND", n, _num(lb))]
    if lb == -INF and ub == INF:
        return [_card("FR", "BND", n)]
    lines = []
    if lb == -INF:
        lines.append(_card("MI", "BND", n))
    elif lb != 0.0 or ub < 0.0 or var.integer:
        lines.append(_card("LO", "BND", n, _num(lb)))
    if ub != INF:
        lines.append(_card("UP", "BND", n, _num(ub)))
    elif var.integer:
        lines.append(_card("PL", "BND", n))
    return lines


def write_mps(model: MilpModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(export_mps(model), encoding="ascii")
    return path


def import_mps(text: str) -> MilpModel:
    """Parse free-format MPS text into a :class:`MilpModel`."""
    name = "model"
    sense = "min"
    section = None
    obj_row = None
    row_sense: Dict[str, str] = {}
    row_order: List[str] = []
    free_rows = set()
    coeffs: Dict[str, Dict[str, float]] = {}
    col_order: List[str] = []
    col_int: Dict[str, bool] = {}
    obj: Dict[str, float] = {}
    rhs: Dict[str, float] = {}
    ranges: Dict[str, float] = {}
    bounds: Dict[str, List[float]] = {}
    obj_const = 0.0
    integer_block = False

    def col(cname: str) -> Dict[str, float]:
        if cname not in coeffs:
            coeffs[cname] = {}
            col_order.append(cname)
            col_int[cname] = integer_block
        return coeffs[cname]

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.rstrip()
        if not line.strip() or line.lstrip().startswith("*"):
            continue
        tok = line.split()
        if not raw[0].isspace():
            head = tok[0].upper()
            if head == "NAME":
                name = tok[1] if len(tok) > 1 else name
                section = "NAME"
                continue
            if head == "OBJSENSE":
                section = "OBJSENSE"
                if len(tok) > 1:
                    sense = _parse_sense(tok[1], lineno)
                continue
            if head in ("ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS"):
                section = head
                continue
            if head == "ENDATA":
                break
            raise MpsError(f"line {lineno}: unknown section {tok[0]!r}")

        if section == "OBJSENSE":
            sense = _parse_sense(tok[0], lineno)
        elif section == "ROWS":
            code, rname = tok[0].upper(), tok[1]
            if code == "N":
                if obj_row is None:
                    obj_row = rname
                else:
                    free_rows.add(rname)
            elif code in _CODE_ROW:
                row_sense[rname] = _CODE_ROW[code]
                row_order.append(rname)
            else:
                raise MpsError(f"line {lineno}: bad row type {tok[0]!r}")
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1].strip("'\"").upper() == "MARKER":
                kind = tok[2].strip("'\"").upper()
                if kind == "INTORG":
                    integer_block = True
                elif kind == "INTEND":
                    integer_block = False
                else:
                    raise MpsError(f"line {lineno}: bad marker {tok[2]!r}")
                continue
            cname = tok[0]
            entry = col(cname)
            pairs = tok[1:]
            if len(pairs) % 2:
                raise MpsError(f"line {lineno}: odd number of row/value fields")
            for k in range(0, len(pairs), 2):
                rname, val = pairs[k], _float(pairs[k + 1], lineno)
                if rname == obj_row:
                    obj[cname] = obj.get(cname, 0.0) + val
                elif rname in free_rows:
                    continue
                elif rname in row_sense:
                    entry[rname] = entry.get(rname, 0.0) + val
                else:
                    raise MpsError(f"line {lineno}: unknown row {rname!r}")
        elif section in ("RHS", "RANGES"):
            pairs = tok[1:] if len(tok) % 2 == 1 else tok
            for k in range(0, len(pairs), 2):
                rname, val = pairs[k], _float(pairs[k + 1], lineno)
                if section == "RHS":
                    if rname == obj_row:
                        obj_const = -val
                    elif rname in row_sense:
                        rhs[rname] = val
                    elif rname not in free_rows:
                        raise MpsError(f"line {lineno}: unknown row {rname!r}")
                else:
                    if rname not in row_sense:
                        raise MpsError(f"line {lineno}: unknown row {rname!r}")
                    ranges[rname] = val
        elif section == "BOUNDS":
            code = tok[0].upper()
            cname = tok[2] if len(tok) >= 3 else tok[1]
            if cname not in coeffs:
                raise MpsError(f"line {lineno}: bound on unknown column {cname!r}")
            value = _float(tok[3], lineno) if len(tok) >= 4 else None
            b = bounds.setdefault(cname, [0.0, INF])
            if code == "UP":
                b[1] = value
                if value < 0 and b[0] == 0.0:
                    b[0] = -INF
            elif code == "LO":
                b[0] = value
            elif code == "FX":
                b[0] = b[1] = value
            elif code == "FR":
                b[0], b[1] = -INF, INF
            elif code == "MI":
                b[0] = -INF
            elif code == "PL":
                b[1] = INF
            elif code == "BV":
                b[0], b[1] = 0.0, 1.0
                col_int[cname] = True
            elif code in ("LI", "UI"):
                col_int[cname] = True
                b[0 if code == "LI" else 1] = value
            else:
                raise MpsError(f"line {lineno}: bad bound type {tok[0]!r}")
        else:
            raise MpsError(f"line {lineno}: data outside a section")

    model = MilpModel(name=name, sense=sense)
    for cname in col_order:
        lb, ub = bounds.get(cname, (0.0, INF))
        try:
            model.add_var(cname, lb, ub, integer=col_int[cname], obj=obj.get(cname, 0.0))
        except ModelError as exc:
            raise MpsError(str(exc)) from exc
    rows: Dict[str, Dict[int, float]] = {r: {} for r in row_order}
    for cname, entry in coeffs.items():
        j = model.var_index(cname)
        for rname, a in entry.items():
            rows[rname][j] = a
    for rname in row_order:
        model.add_constraint(rows[rname], row_sense[rname], rhs.get(rname, 0.0),
                             name=rname, range=ranges.get(rname))
    model.obj_constant = obj_const
    return model


def read_mps(path: Union[str, Path]) -> MilpModel:
    return import_mps(Path(path).read_text(encoding="ascii"))


def _parse_sense(token: str, lineno: int) -> str:
    t = token.upper()
    if t in ("MAX", "MAXIMIZE"):
        return "max"
    if t in ("MIN", "MINIMIZE"):
        return "min"
    raise MpsError(f"line {lineno}: bad OBJSENSE {token!r}")


def _float(tok: str, lineno: int) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise MpsError(f"line {lineno}: expected a number, got {tok!r}") from None
    if math.isnan(v):
        raise MpsError(f"line {lineno}: NaN in numeric field")
    return v
