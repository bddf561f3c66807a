"""Reports: canonical text serialization of results in text, LaTeX, or JSON.

The JSON variant is byte-deterministic for identical inputs (timings are kept
out of it; the sampling seed is recorded instead) and every expression string
round-trips through the problem-file expression parser.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import sympy as sp

from .symcore import normal_form


def expr_text(e) -> str:
    """Canonical text form of an expression, with ^ for powers."""
    return sp.sstr(normal_form(sp.sympify(e)), order="lex").replace("**", "^")


def value_text(v):
    if isinstance(v, sp.MatrixBase):
        return [[expr_text(x) for x in v.row(i)] for i in range(v.rows)]
    if isinstance(v, (list, tuple)):
        return [value_text(x) for x in v]
    if isinstance(v, (sp.Expr, int)):
        return expr_text(v)
    return str(v)


@dataclass
class TaskResult:
    name: str
    status: str = "ok"
    items: list = field(default_factory=list)      # (label, value)
    residuals: list = field(default_factory=list)  # (label, "pass" | "fail: ...")
    seconds: float = 0.0

    def add(self, label: str, value) -> None:
        self.items.append((label, value))

    def check(self, label: str, ok: bool, detail: str = "") -> None:
        self.residuals.append((label, "pass" if ok else f"fail{': ' + detail if detail else ''}"))

    @property
    def passed(self) -> bool:
        return self.status == "ok" and all(r.startswith("pass") for _, r in self.residuals)


@dataclass
class Report:
    source: str
    seed: int
    title: str = ""
    tasks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(t.passed for t in self.tasks)

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "source": self.source,
            "seed": self.seed,
            "passed": self.passed,
            "tasks": [
                {
                    "name": t.name,
                    "status": t.status,
                    "items": [[label, value_text(v)] for label, v in t.items],
                    "residuals": [[label, r] for label, r in t.residuals],
                }
                for t in self.tasks
            ],
        }


def emit(report: Report, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    if fmt == "latex":
        return _emit_latex(report)
    if fmt == "text":
        return _emit_text(report)
    raise ValueError(f"unknown format {fmt!r}")


def _emit_text(report: Report) -> str:
    lines = [f"# {report.title or report.source}", f"# seed = {report.seed}"]
    for t in report.tasks:
        lines.append("")
        lines.append(f"[{t.name}]  ({t.status}, {t.seconds:.2f}s)")
        for label, v in t.items:
            tv = value_text(v)
            if isinstance(tv, list):
                lines.append(f"  {label} =")
                for row in tv:
                    lines.append("    " + (" | ".join(row) if isinstance(row, list) else row))
            else:
                lines.append(f"  {label} = {tv}")
        for label, r in t.residuals:
            lines.append(f"  check {label}: {r}")
    lines.append("")
    lines.append("RESULT: " + ("pass" if report.passed else "FAIL"))
    return "\n".join(lines) + "\n"


def _latex_value(v) -> str:
    if isinstance(v, sp.MatrixBase):
        return sp.latex(v.applyfunc(lambda e: normal_form(sp.sympify(e))))
    if isinstance(v, (list, tuple)):
        return sp.latex(sp.Matrix([list(v)]).applyfunc(lambda e: normal_form(sp.sympify(e))))
    if isinstance(v, (sp.Expr, int)):
        return sp.latex(normal_form(sp.sympify(v)))
    return rf"\text{{{v}}}"


def _emit_latex(report: Report) -> str:
    out = [r"\documentclass{article}",
           r"\usepackage{amsmath}", r"\usepackage[margin=2cm]{geometry}",
           r"\allowdisplaybreaks",
           r"\begin{document}",
           rf"\section*{{{report.title or report.source}}}",
           rf"seed = {report.seed}", ""]
    for t in report.tasks:
        out.append(rf"\subsection*{{{t.name} ({t.status})}}")
        for label, v in t.items:
            safe = label.replace("_", r"\_")
            out.append(r"\begin{equation*}")
            out.append(rf"\text{{{safe}}} = {_latex_value(v)}")
            out.append(r"\end{equation*}")
        for label, r in t.residuals:
            safe = label.replace("_", r"\_")
            out.append(rf"\noindent check {safe}: {r.replace('_', chr(92) + '_')}\par")
    out.append(r"\end{document}")
    return "\n".join(out) + "\n"
