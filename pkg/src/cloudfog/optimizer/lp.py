"""LP file format writer and a parser for the subset it writes.

Grammar subset: ``\\Problem name:`` comment, ``Minimize``, ``Subject To``,
``Bounds``, ``Binaries``, ``Generals``, ``End``.  Every variable appears in
the Bounds section so the registry order survives a round trip.
"""

from __future__ import annotations

import math
import re
from typing import Dict, Iterable, List, TextIO, Union

from .milp import BINARY, CONTINUOUS, INTEGER, MilpModel, Row, Variable

LINE_WIDTH = 200


def _num(x: float) -> str:
    if math.isinf(x):
        return "+inf" if x > 0 else "-inf"
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _expr(coefs: Dict[str, float]) -> List[str]:
    parts = []
    for i, (name, c) in enumerate(coefs.items()):
        sign = "-" if c < 0 else "+"
        mag = _num(abs(c))
        if i == 0:
            parts.append(f"{'-' if c < 0 else ''}{mag} {name}")
        else:
            parts.append(f"{sign} {mag} {name}")
    return parts


def _wrap(head: str, parts: Iterable[str], tail: str = "") -> List[str]:
    lines, cur = [], head
    for p in parts:
        if len(cur) + len(p) + 1 > LINE_WIDTH and cur.strip():
            lines.append(cur)
            cur = "   "
        cur += " " + p
    if tail:
        cur += " " + tail
    lines.append(cur)
    return lines


def emit_lp(model: MilpModel, sink: Union[TextIO, None] = None) -> str:
    """Write ``model`` as LP text; returns the text and writes it to ``sink`` if given."""
    out: List[str] = [f"\\Problem name: {model.name}", "Minimize"]
    if model.objective:
        out += _wrap(" obj:", _expr(model.objective))
    else:
        out.append(" obj:")
    out.append("Subject To")
    for r in model.rows:
        sense = {"<=": "<=", ">=": ">=", "=": "="}[r.sense]
        out += _wrap(f" {r.name}:", _expr(r.coefs), f"{sense} {_num(r.rhs)}")
    out.append("Bounds")
    for v in model.variables.values():
        if math.isinf(v.ub):
            if math.isinf(v.lb):
                out.append(f" {v.name} free")
            else:
                out.append(f" {v.name} >= {_num(v.lb)}")
        else:
            out.append(f" {_num(v.lb)} <= {v.name} <= {_num(v.ub)}")
    out.append("Binaries")
    out += [f" {v.name}" for v in model.variables.values() if v.kind == BINARY]
    out.append("Generals")
    out += [f" {v.name}" for v in model.variables.values() if v.kind == INTEGER]
    out.append("End")
    text = "\n".join(out) + "\n"
    if sink is not None:
        sink.write(text)
    return text


_SECTIONS = {
    "minimize": "obj",
    "subject to": "rows",
    "bounds": "bounds",
    "binaries": "bin",
    "binary": "bin",
    "generals": "gen",
    "general": "gen",
    "end": "end",
}


def _parse_float(s: str) -> float:
    s = s.strip().lower()
    if s in ("inf", "+inf", "infinity", "+infinity"):
        return math.inf
    if s in ("-inf", "-infinity"):
        return -math.inf
    return float(s)


def _parse_expr(text: str) -> Dict[str, float]:
    tokens = text.split()
    coefs: Dict[str, float] = {}
    sign, coef = 1.0, None
    for tok in tokens:
        if tok in ("+", "-"):
            sign = -1.0 if tok == "-" else 1.0
            continue
        try:
            coef = float(tok)
            continue
        except ValueError:
            pass
        c = sign * (1.0 if coef is None else coef)
        coefs[tok] = coefs.get(tok, 0.0) + c
        sign, coef = 1.0, None
    return coefs


class LpParseError(ValueError):
    pass


def parse_lp(text: Union[str, TextIO]) -> MilpModel:
    if not isinstance(text, str):
        text = text.read()
    model = MilpModel()
    section = None
    stmt: List[str] = []
    objective_text: List[str] = []
    rows: List[str] = []
    bounds: List[str] = []
    kinds: Dict[str, str] = {}

    def flush():
        if stmt:
            rows.append(" ".join(stmt))
            stmt.clear()

    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            m = re.match(r"\\Problem name:\s*(.*)", line)
            if m:
                model.name = m.group(1).strip()
            continue
        key = line.lower()
        if key in _SECTIONS:
            flush()
            section = _SECTIONS[key]
            continue
        if section == "obj":
            objective_text.append(line)
        elif section == "rows":
            # a new statement starts with "name:"
            if re.match(r"^[A-Za-z_][\w.\[\]]*\s*:", line) and stmt:
                flush()
            stmt.append(line)
        elif section == "bounds":
            bounds.append(line)
        elif section == "bin":
            for name in line.split():
                kinds[name] = BINARY
        elif section == "gen":
            for name in line.split():
                kinds[name] = INTEGER
        elif section == "end":
            break
        else:
            raise LpParseError(f"content outside any section: {line!r}")
    flush()

    for b in bounds:
        parts = b.split()
        if len(parts) == 5 and parts[1] == "<=" and parts[3] == "<=":
            name, lb, ub = parts[2], _parse_float(parts[0]), _parse_float(parts[4])
        elif len(parts) == 3 and parts[1] == ">=":
            name, lb, ub = parts[0], _parse_float(parts[2]), math.inf
        elif len(parts) == 3 and parts[1] == "<=":
            name, lb, ub = parts[0], 0.0, _parse_float(parts[2])
        elif len(parts) == 2 and parts[1].lower() == "free":
            name, lb, ub = parts[0], -math.inf, math.inf
        else:
            raise LpParseError(f"cannot read bound {b!r}")
        model.variables[name] = Variable(name, CONTINUOUS, lb, ub)
    for name, kind in kinds.items():
        if name not in model.variables:
            model.variables[name] = Variable(name, kind, 0.0, 1.0 if kind == BINARY else math.inf)
        model.variables[name].kind = kind

    obj = " ".join(objective_text)
    if ":" in obj:
        obj = obj.split(":", 1)[1]
    model.objective = _parse_expr(obj)

    for stmt_text in rows:
        name, body = stmt_text.split(":", 1)
        m = re.search(r"(<=|>=|=<|=>|=)\s*([^\s]+)\s*$", body)
        if not m:
            raise LpParseError(f"row {name.strip()} has no sense/rhs")
        sense = {"=<": "<=", "=>": ">="}.get(m.group(1), m.group(1))
        coefs = _parse_expr(body[: m.start()])
        model.rows.append(Row(name.strip(), coefs, sense, _parse_float(m.group(2))))
    for r in model.rows:
        for v in r.coefs:
            if v not in model.variables:
                model.variables[v] = Variable(v)
    return model


def same_structure(a: MilpModel, b: MilpModel, rtol: float = 0.0) -> List[str]:
    """Differences between two models; empty when structurally identical."""
    diffs = []
    if list(a.variables) != list(b.variables):
        diffs.append("variable registries differ")
    else:
        for name, va in a.variables.items():
            vb = b.variables[name]
            if (va.kind, va.lb, va.ub) != (vb.kind, vb.lb, vb.ub):
                diffs.append(f"variable {name} differs")
    if len(a.rows) != len(b.rows):
        diffs.append(f"row counts differ ({len(a.rows)} vs {len(b.rows)})")
    for ra, rb in zip(a.rows, b.rows):
        if (ra.name, ra.sense, ra.rhs) != (rb.name, rb.sense, rb.rhs) or ra.coefs != rb.coefs:
            diffs.append(f"row {ra.name} differs")
    if a.objective != b.objective:
        diffs.append("objective differs")
    return diffs
