"""Declarative problem files: TOML schema, expression grammar, validation.

Expressions use infix syntax with ``^`` (or ``**``) for integer powers and
derivative atoms written ``u_xxy`` style: the part after the underscore is a
greedy longest-match sequence of independent-variable names.  Numbers are
integers; rationals are written as quotients.  Unknown keys anywhere in the
file are rejected.
"""

from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field
from typing import Callable, Optional

import sympy as sp

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .groupaction import GroupActionSpec
from .jetspace import JetContext
from .movingframe import NormalizationSpec
from .symcore import Sym


class ParseError(ValueError):
    """Position-annotated problem-file parse error."""

    def __init__(self, message: str, text: str | None = None, pos: int | None = None):
        if text is not None and pos is not None:
            message = f"{message} at position {pos} in {text!r}"
        super().__init__(message)


_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z0-9_]*)|(\*\*|\^|[-+*/(),]))")


def tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            rest = text[pos:]
            if rest.strip():
                raise ParseError("unexpected character", text,
                                 pos + len(rest) - len(rest.lstrip()))
            break
        num, name, op = m.groups()
        if num:
            out.append(("num", int(num), m.start(1)))
        elif name:
            out.append(("name", name, m.start(2)))
        else:
            out.append(("op", "^" if op == "**" else op, m.start(3)))
        pos = m.end()
    out.append(("end", None, len(text)))
    return out


class ExprParser:
    """Recursive-descent parser; names are resolved by the problem context."""

    def __init__(self, text: str, resolve: Callable):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0
        self.resolve = resolve

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        tok = self.toks[self.i]
        if kind and tok[0] != kind or value is not None and tok[1] != value:
            raise ParseError(f"expected {value or kind}", self.text, tok[2])
        self.i += 1
        return tok

    def parse(self) -> sp.Expr:
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError("trailing input", self.text, tok[2])
        return e

    def expr(self):
        e = self.term()
        while self.peek()[:2] in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self):
        e = self.factor()
        while self.peek()[:2] in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            rhs = self.factor()
            e = e * rhs if op == "*" else e / rhs
        return e

    def factor(self):
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return -self.factor()
        if self.peek()[:2] == ("op", "+"):
            self.take()
            return self.factor()
        e = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            e = e ** self.exponent()
        return e

    def exponent(self):
        neg = False
        if self.peek()[:2] == ("op", "("):
            self.take()
            if self.peek()[:2] == ("op", "-"):
                self.take()
                neg = True
            n = self.take("num")[1]
            self.take("op", ")")
        else:
            if self.peek()[:2] == ("op", "-"):
                self.take()
                neg = True
            n = self.take("num")[1]
        return -n if neg else n

    def atom(self):
        tok = self.peek()
        if tok[0] == "num":
            self.take()
            return sp.Integer(tok[1])
        if tok[0] == "name":
            self.take()
            if self.peek()[:2] == ("op", "("):
                self.take()
                args = [self.expr()]
                while self.peek()[:2] == ("op", ","):
                    self.take()
                    args.append(self.expr())
                self.take("op", ")")
                return self.resolve(tok[1], args, self.text, tok[2])
            return self.resolve(tok[1], None, self.text, tok[2])
        if tok[:2] == ("op", "("):
            self.take()
            e = self.expr()
            self.take("op", ")")
            return e
        raise ParseError("expected an expression", self.text, tok[2])


TASK_NAMES = ("frame", "invariants", "operators", "forms", "syzygies",
              "el", "laws", "structured", "verify")

_SECTION_KEYS = {
    "": {"title", "seed", "tasks", "variables", "group", "normalization",
         "lagrangian", "syzygies"},
    "variables": {"independent", "dependent", "dummy", "constants", "functions"},
    "group": {"params", "identity", "x_action", "u_action", "composition",
              "inverse", "matrix"},
    "normalization": {"equations", "elimination", "frame"},
    "lagrangian": {"density"},
    "syzygies": {"generators"},
}


@dataclass
class ProblemFile:
    """A parsed problem: jet context, group action, normalization, Lagrangian, tasks."""

    ctx: JetContext
    spec: GroupActionSpec
    norm: Optional[NormalizationSpec]
    frame_candidate: Optional[dict]
    elimination: Optional[list]
    density: Optional[sp.Expr]
    syzygy_generators: list
    tasks: list
    seed: int
    title: str
    names: dict = field(default_factory=dict)

    def parse_expr(self, text: str) -> sp.Expr:
        return ExprParser(text, self._resolve).parse()

    def _resolve(self, name, args, text, pos):
        if args is not None:
            fn = self.names.get(("fn", name))
            if fn is None:
                raise ParseError(f"unknown function {name!r}", text, pos)
            return fn(*args)
        sym = self.names.get(name)
        if sym is None:
            sym = self._jet_name(name)
        if sym is None:
            raise ParseError(f"unknown name {name!r}", text, pos)
        return sym

    def _jet_name(self, name):
        if "_" not in name:
            return None
        head, _, tail = name.partition("_")
        try:
            alpha = self.ctx.dependent_index(head)
        except KeyError:
            return None
        counts = [0] * self.ctx.n_independents
        indeps = sorted(((str(s), i) for i, s in enumerate(self.ctx.independents)),
                        key=lambda t: -len(t[0]))
        while tail:
            for nm, i in indeps:
                if tail.startswith(nm):
                    counts[i] += 1
                    tail = tail[len(nm):]
                    break
            else:
                return None
        sym = self.ctx.jet(alpha, tuple(counts))
        self.names[name] = sym
        return sym


def _check_keys(section: str, table: dict) -> None:
    allowed = _SECTION_KEYS[section]
    unknown = set(table) - allowed
    if unknown:
        where = f"[{section}]" if section else "top level"
        raise ParseError(f"unknown keys {sorted(unknown)} in {where}")


def parse_tasks(raw) -> list:
    tasks = []
    for t in raw:
        parts = str(t).split()
        if not parts or parts[0] not in TASK_NAMES:
            raise ParseError(f"unknown task {t!r}")
        if parts[0] == "invariants":
            if len(parts) != 2 or not parts[1].isdigit():
                raise ParseError(f"task 'invariants' needs an order: {t!r}")
            tasks.append(("invariants", int(parts[1])))
        elif len(parts) != 1:
            raise ParseError(f"task {parts[0]!r} takes no argument: {t!r}")
        else:
            tasks.append((parts[0], None))
    return tasks


def load_problem(path: str) -> ProblemFile:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return build_problem(data)


def build_problem(data: dict) -> ProblemFile:
    _check_keys("", data)
    vs = data.get("variables")
    if vs is None:
        raise ParseError("missing [variables] section")
    _check_keys("variables", vs)
    gp = data.get("group")
    if gp is None:
        raise ParseError("missing [group] section")
    _check_keys("group", gp)

    independents = list(vs["independent"])
    dummy = vs.get("dummy")
    if dummy is not None and dummy not in independents:
        independents.append(dummy)
    ctx = JetContext(independents, list(vs["dependent"]), dummy=dummy)

    pf = ProblemFile(ctx=ctx, spec=None, norm=None, frame_candidate=None,
                     elimination=None, density=None, syzygy_generators=[],
                     tasks=parse_tasks(data.get("tasks", [])),
                     seed=int(data.get("seed", 20090)),
                     title=str(data.get("title", "")))
    for s in ctx.independents + ctx.dependents:
        pf.names[str(s)] = s
    for cname in vs.get("constants", []):
        pf.names[cname] = Sym(cname, "constant")
    from .symcore import opaque_function
    for fname, nargs in dict(vs.get("functions", {})).items():
        pf.names[("fn", fname)] = opaque_function(fname, int(nargs))

    params = tuple(Sym(p, "group-param") for p in gp["params"])
    for p in params:
        pf.names[str(p)] = p
    x_action = [pf.parse_expr(e) for e in gp["x_action"]]
    if dummy is not None and len(x_action) == ctx.n_independents - 1:
        x_action.append(ctx.independents[ctx.dummy_index])
    identity_vals = [sp.Rational(v) for v in gp["identity"]]
    if len(identity_vals) != len(params):
        raise ParseError("identity values must match the parameter list")
    composition = left = right = None
    if "composition" in gp:
        left = tuple(Sym(f"{p}1", "group-param") for p in gp["params"])
        right = tuple(Sym(f"{p}2", "group-param") for p in gp["params"])
        for s in left + right:
            pf.names[str(s)] = s
        composition = tuple(pf.parse_expr(e) for e in gp["composition"])
    inverse = tuple(pf.parse_expr(e) for e in gp["inverse"]) if "inverse" in gp else None
    matrix = None
    if "matrix" in gp:
        rows = [[pf.parse_expr(e) for e in row] for row in gp["matrix"]]
        matrix = sp.Matrix(rows)
    pf.spec = GroupActionSpec(
        ctx=ctx, params=params, identity=dict(zip(params, identity_vals)),
        x_action=tuple(x_action),
        u_action=tuple(pf.parse_expr(e) for e in gp["u_action"]),
        composition=composition, left_params=left, right_params=right,
        inverse=inverse, matrix_form=matrix,
        name=pf.title or "problem")

    nm = data.get("normalization")
    if nm is not None:
        _check_keys("normalization", nm)
        eqs = []
        for eq in nm["equations"]:
            lhs, sep, rhs = str(eq).partition("=")
            if not sep:
                raise ParseError(f"normalization equation needs '=': {eq!r}")
            eqs.append((pf.parse_expr(lhs), sp.Rational(rhs.strip())))
        pf.norm = NormalizationSpec(tuple(eqs))
        if "elimination" in nm:
            pf.elimination = [pf.names[p] for p in nm["elimination"]]
        if "frame" in nm:
            pf.frame_candidate = {pf.names[p]: pf.parse_expr(e)
                                  for p, e in nm["frame"].items()}

    lg = data.get("lagrangian")
    if lg is not None:
        _check_keys("lagrangian", lg)
        pf.density = pf.parse_expr(lg["density"])

    sz = data.get("syzygies")
    if sz is not None:
        _check_keys("syzygies", sz)
        pf.syzygy_generators = [pf.parse_expr(e) for e in sz["generators"]]
    return pf
