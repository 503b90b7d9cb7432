"""Textual LP-format export and import.

The dialect is the classic CPLEX LP layout (objective, ``Subject To``,
``Bounds``, ``Binary``, ``End``) restricted to minimization, so exported
files load in mainstream solvers.  ``read_lp_file`` is the exact inverse
of ``export_lp_file`` up to row order.
"""

from __future__ import annotations

import math
import re

from .errors import ParseError
from .mio import BINARY, CONTINUOUS, EQ, GE, INF, LE, MioModel

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")
_BAD_CHARS = re.compile(r"[^A-Za-z0-9_.]")


def _safe_name(name: str, fallback: str) -> str:
    name = _BAD_CHARS.sub("_", name) or fallback
    if not re.match(r"[A-Za-z_]", name[0]):
        name = "_" + name
    return name


def _num(v: float) -> str:
    return repr(float(v))


def _linear_terms(items) -> str:
    parts = []
    for name, coef in items:
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {_num(abs(coef))} {name}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def export_lp_file(model: MioModel, path) -> None:
    """Write ``model`` to ``path`` in LP format."""
    names = [_safe_name(v.name, f"v{v.id}") for v in model.variables]
    if len(set(names)) != len(names):  # disambiguate after sanitizing
        names = [f"{n}_{i}" if names.count(n) > 1 else n for i, n in enumerate(names)]
    lines = ["\\ optembed LP export", "Minimize"]
    obj_items = [(names[vid], coef) for vid, coef in sorted(model.objective.items())]
    obj = _linear_terms(obj_items)
    if model.objective_constant:
        obj += f" + {_num(model.objective_constant)}" if model.objective_constant > 0 \
            else f" - {_num(-model.objective_constant)}"
    lines.append(f" obj: {obj}")
    lines.append("Subject To")
    cnames = [_safe_name(con.name, f"c{i}") for i, con in enumerate(model.constraints)]
    dupes = {n for n in cnames if cnames.count(n) > 1}
    cnames = [f"{n}_{i}" if n in dupes else n for i, n in enumerate(cnames)]
    for cname, con in zip(cnames, model.constraints):
        expr = _linear_terms([(names[vid], coef) for vid, coef in con.coefficients])
        lines.append(f" {cname}: {expr} {con.sense} {_num(con.rhs)}")
    lines.append("Bounds")
    for v, name in zip(model.variables, names):
        if math.isfinite(v.upper):
            lines.append(f" {_num(v.lower)} <= {name} <= {_num(v.upper)}")
        else:
            lines.append(f" {name} >= {_num(v.lower)}")
    bins = [names[b] for b in model.binary_ids]
    if bins:
        lines.append("Binary")
        for name in bins:
            lines.append(f" {name}")
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_lp_file(path) -> MioModel:
    """Parse a file written by :func:`export_lp_file` back into a model."""
    with open(path) as fh:
        raw = fh.readlines()
    lines = []
    for lineno, line in enumerate(raw, start=1):
        line = line.split("\\")[0].strip()
        if line:
            lines.append((lineno, line))
    if not lines:
        raise ParseError("empty LP file", line=1)

    model = MioModel()
    var_ids: dict[str, int] = {}

    def get_var(name):
        if name not in var_ids:
            var_ids[name] = model.add_variable(name=name, lower=0.0, upper=INF)
        return var_ids[name]

    section = None
    obj_coeffs, obj_const = {}, 0.0
    pending = []  # constraints as (lineno, name, coeffs, sense, rhs)
    binaries = []

    for lineno, line in lines:
        low = line.lower()
        if low in ("minimize", "min", "minimise"):
            section = "objective"
            continue
        if low in ("maximize", "max", "maximise"):
            raise ParseError("only minimization is supported", line=lineno)
        if low in ("subject to", "st", "s.t.", "such that"):
            section = "constraints"
            continue
        if low == "bounds":
            section = "bounds"
            continue
        if low in ("binary", "binaries", "bin"):
            section = "binary"
            continue
        if low in ("general", "generals", "gen"):
            raise ParseError("general integers are not supported", line=lineno)
        if low == "end":
            break
        if section == "objective":
            body = line.split(":", 1)[1] if ":" in line else line
            coeffs, const = _parse_expr(body, lineno)
            for name, coef in coeffs.items():
                obj_coeffs[name] = obj_coeffs.get(name, 0.0) + coef
            obj_const += const
        elif section == "constraints":
            name = ""
            body = line
            if ":" in line:
                name, body = line.split(":", 1)
                name = name.strip()
            m = re.search(r"(<=|>=|=<|=>|=)", body)
            if not m:
                raise ParseError("missing sense token in constraint", line=lineno)
            sense = {"<=": LE, "=<": LE, ">=": GE, "=>": GE, "=": EQ}[m.group(1)]
            lhs, rhs_text = body[: m.start()], body[m.end():]
            coeffs, const = _parse_expr(lhs, lineno)
            rcoeffs, rconst = _parse_expr(rhs_text, lineno)
            if rcoeffs:
                raise ParseError("variables on constraint right-hand side", line=lineno)
            pending.append((lineno, name, coeffs, sense, rconst - const))
        elif section == "bounds":
            _parse_bound(line, lineno, model, get_var)
        elif section == "binary":
            for tok in line.split():
                binaries.append((lineno, tok))
        else:
            raise ParseError(f"unexpected line outside any section: {line!r}", line=lineno)

    for name in obj_coeffs:
        get_var(name)
    for _, _, coeffs, _, _ in pending:
        for name in coeffs:
            get_var(name)
    for lineno, name, coeffs, sense, rhs in pending:
        model.add_constraint({var_ids[n]: c for n, c in coeffs.items()}, sense, rhs, name=name)
    model.set_objective({var_ids[n]: c for n, c in obj_coeffs.items()}, obj_const)
    for lineno, tok in binaries:
        if tok not in var_ids:
            raise ParseError(f"binary section names unknown variable {tok!r}", line=lineno)
        v = model.variables[var_ids[tok]]
        v.kind = BINARY
        v.lower = max(v.lower, 0.0)
        v.upper = min(v.upper, 1.0) if math.isfinite(v.upper) else 1.0
    return model


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>[0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_.]*)|(?P<op>[+-]))"
)


def _parse_expr(text, lineno):
    """Parse ``3 x + 2.5 y - 7`` into ({name: coef}, constant)."""
    coeffs: dict[str, float] = {}
    const = 0.0
    pos = 0
    sign = 1.0
    coef = None
    text = text.strip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"cannot parse expression near {text[pos:pos+20]!r}", line=lineno)
        pos = m.end()
        if m.group("op"):
            if coef is not None:
                const += sign * coef
                coef = None
            sign = 1.0 if m.group("op") == "+" else -1.0
        elif m.group("num"):
            coef = float(m.group("num")) if coef is None else coef * float(m.group("num"))
        else:
            name = m.group("name")
            c = sign * (1.0 if coef is None else coef)
            coeffs[name] = coeffs.get(name, 0.0) + c
            coef = None
            sign = 1.0
    if coef is not None:
        const += sign * coef
    return coeffs, const


def _parse_bound(line, lineno, model, get_var):
    parts = re.split(r"(<=|>=|=<|=>|=)", line)
    parts = [p.strip() for p in parts if p.strip()]
    inf_pat = re.compile(r"^[+-]?inf(inity)?$", re.IGNORECASE)

    def val(tok):
        if inf_pat.match(tok):
            return -INF if tok.startswith("-") else INF
        try:
            return float(tok)
        except ValueError:
            raise ParseError(f"bad bound value {tok!r}", line=lineno) from None

    if len(parts) == 5 and parts[1] in ("<=", "=<") and parts[3] in ("<=", "=<"):
        vid = get_var(parts[2])
        model.variables[vid].lower = val(parts[0])
        model.variables[vid].upper = val(parts[4])
    elif len(parts) == 3 and parts[1] in ("<=", "=<"):
        vid = get_var(parts[0])
        model.variables[vid].upper = val(parts[2])
    elif len(parts) == 3 and parts[1] in (">=", "=>"):
        vid = get_var(parts[0])
        model.variables[vid].lower = val(parts[2])
    elif len(parts) == 3 and parts[1] == "=":
        vid = get_var(parts[0])
        model.variables[vid].lower = model.variables[vid].upper = val(parts[2])
    else:
        raise ParseError(f"cannot parse bounds line {line!r}", line=lineno)
