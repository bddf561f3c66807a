"""Command line front end: nframes run <problem.toml> [options].

Executes the requested tasks in dependency order and prints a report.  Exit
codes: 0 all verifications pass, 1 a verification failed, 2 input error.
"""

from __future__ import annotations

import argparse
import sys
import time

import sympy as sp

from . import __version__
from .groupaction import adjoint_rep, infinitesimals
from .invariantcalc import (invariant_one_forms, invariant_operators, syzygy,
                            to_invariant_basis, true_independent_indices)
from .jetspace import mi_letters
from .movingframe import solve_frame
from .noether import (Lagrangian, divergence_check, equivariance_check, euler_lagrange,
                      frame_jacobian_true, noether_laws, structured_laws)
from .problems import ParseError, ProblemFile, load_problem, parse_tasks
from .report import Report, TaskResult, emit
from .symcore import is_zero, normal_form


class _Pipeline:
    """Lazy shared state across tasks; everything is computed at most once."""

    def __init__(self, problem: ProblemFile, seed: int):
        self.problem = problem
        self.seed = seed
        self._cache = {}

    def frame(self):
        if "frame" not in self._cache:
            if self.problem.norm is None:
                raise ValueError("no [normalization] section: frame tasks unavailable")
            self._cache["frame"] = solve_frame(
                self.problem.spec, self.problem.norm,
                candidate=self.problem.frame_candidate,
                elimination=self.problem.elimination)
        return self._cache["frame"]

    def lagrangian(self):
        if "lagrangian" not in self._cache:
            if self.problem.density is None:
                raise ValueError("no [lagrangian] section: variational tasks unavailable")
            self._cache["lagrangian"] = Lagrangian(self.problem.spec, self.problem.density)
        return self._cache["lagrangian"]

    def adrep(self):
        if "adrep" not in self._cache:
            self._cache["adrep"] = adjoint_rep(self.problem.spec)
        return self._cache["adrep"]

    def laws(self):
        if "laws" not in self._cache:
            lag = self.lagrangian()
            lag.check_invariance()
            self._cache["laws"] = noether_laws(lag, check=False)
        return self._cache["laws"]

    def bundle(self):
        if "bundle" not in self._cache:
            self._cache["bundle"] = structured_laws(
                self.lagrangian(), self.frame(), adrep=self.adrep(), C=self.laws())
        return self._cache["bundle"]


def run(problem: ProblemFile, tasks=None, seed=None, max_order=None,
        source: str = "<problem>") -> Report:
    """Execute the requested tasks in dependency order; report every result."""
    seed = problem.seed if seed is None else seed
    tasks = problem.tasks if tasks is None else tasks
    report = Report(source=source, seed=seed, title=problem.title)
    pipe = _Pipeline(problem, seed)
    ctx = problem.ctx
    for name, arg in tasks:
        result = TaskResult(name if arg is None else f"{name} {arg}")
        t0 = time.time()
        try:
            if name == "frame":
                frame = pipe.frame()
                for p in problem.spec.params:
                    result.add(str(p), frame.rho[p])
            elif name == "invariants":
                order = min(arg, max_order) if max_order else arg
                frame = pipe.frame()
                for i, x in enumerate(ctx.independents):
                    result.add(f"I({x})", frame.inv_coordinate(x))
                for alpha, K in ctx.jets_up_to(order):
                    s = ctx.jet(alpha, K)
                    result.add(f"I({s})", frame.inv_coordinate(s))
            elif name == "operators":
                for op in invariant_operators(pipe.frame()):
                    result.add(op.name, list(op.coeffs))
            elif name == "forms":
                frame = pipe.frame()
                for i, omega in enumerate(invariant_one_forms(frame)):
                    coeffs = [omega.coeff((j,)) for j in range(ctx.n_independents)]
                    result.add(f"I(d{ctx.independents[i]})", coeffs)
            elif name == "syzygies":
                if not problem.syzygy_generators:
                    raise ValueError("no [syzygies] generators declared")
                frame = pipe.frame()
                gens = [frame.invariantize(g) for g in problem.syzygy_generators]
                for raw, poly in zip(problem.syzygy_generators, syzygy(frame, gens)):
                    label = f"D_{ctx.independents[ctx.dummy_index]} I({raw})"
                    text = " + ".join(
                        f"({coeff}) D_{''.join(word) if word else '()'} I({dep}_{ctx.independents[ctx.dummy_index]})"
                        for coeff, word, dep in poly.display())
                    result.add(label, text)
            elif name == "el":
                lag = pipe.lagrangian()
                for alpha, e in enumerate(euler_lagrange(lag)):
                    result.add(f"E^{ctx.dependents[alpha]}", e)
            elif name == "laws":
                C = pipe.laws()
                for j, p in enumerate(problem.spec.params):
                    for pos, k in enumerate(true_independent_indices(ctx)):
                        result.add(f"C[{p}][{ctx.independents[k]}]", C[j, pos])
            elif name == "structured":
                bundle = pipe.bundle()
                frame = pipe.frame()
                result.add("Ad(rho)^-1", bundle.AdInv)
                result.add("V", bundle.V.applyfunc(frame.to_isymbols))
                result.add("M_J", bundle.Minors)
            elif name == "verify":
                _verify(pipe, result, seed)
            else:
                raise ValueError(f"unknown task {name}")
        except Exception as exc:  # surfaced with task context, per contract
            result.status = f"error: {type(exc).__name__}: {exc}"
        result.seconds = time.time() - t0
        report.tasks.append(result)
    return report


def _verify(pipe: _Pipeline, result: TaskResult, seed: int) -> None:
    problem = pipe.problem
    if problem.norm is not None:
        frame = pipe.frame()
        pa = problem.spec.prolong(
            max((problem.ctx.max_jet_order(psi) for psi, _ in problem.norm.equations),
                default=0))
        ok = all(is_zero(frame.at_frame(pa.transform(psi) - c))
                 for psi, c in problem.norm.equations)
        result.check("frame solves the normalization equations", ok)
    if problem.density is None:
        return
    lag = pipe.lagrangian()
    residuals = lag.invariance_residuals()
    result.check("Lagrangian invariance", all(is_zero(r) for r in residuals))
    C = pipe.laws()
    try:
        divergence_check(lag, C=C)
        result.check("Noether identity Div C = -Q.E", True)
    except Exception as exc:
        result.check("Noether identity Div C = -Q.E", False, str(exc))
    if problem.norm is not None:
        try:
            pipe.bundle()
            result.check("structured factorization (reassembly + invariance)", True)
        except Exception as exc:
            result.check("structured factorization (reassembly + invariance)", False, str(exc))
    if problem.spec.composition is not None:
        rep = equivariance_check(lag, adrep=pipe.adrep(), C=C, samples=20, seed=seed)
        result.check(f"law equivariance at {rep.samples} samples", rep.passed)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nframes",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"nframes {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run tasks from a problem file")
    runp.add_argument("file", help="problem file (TOML)")
    runp.add_argument("--tasks", help="comma-separated task list overriding the file")
    runp.add_argument("--format", choices=("text", "latex", "json"), default="text")
    runp.add_argument("--seed", type=int, default=None,
                      help="verification sampling seed (default: from file, else 20090)")
    runp.add_argument("--max-order", type=int, default=None,
                      help="cap the order of the invariants task")
    args = parser.parse_args(argv)

    try:
        problem = load_problem(args.file)
        tasks = parse_tasks(args.tasks.split(",")) if args.tasks else None
    except (ParseError, OSError, ValueError) as exc:
        print(f"nframes: input error: {exc}", file=sys.stderr)
        return 2
    report = run(problem, tasks=tasks, seed=args.seed, max_order=args.max_order,
                 source=args.file)
    sys.stdout.write(emit(report, args.format))
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
