"""Exact symbolic kernel: expressions, rational normal form, and a sound zero test.

Everything downstream (jet bookkeeping, prolongation, frames, laws) manipulates
plain sympy expressions built over exact rationals.  This module fixes the
conventions: how symbols carry their role, what the canonical form of a
rational function is, and how zero is decided (normal form *and* randomized
exact evaluation must agree).  Floats never appear.
"""

from __future__ import annotations

import random
from typing import Iterable, Mapping

import sympy as sp
from sympy.core.function import AppliedUndef

Expr = sp.Expr

KINDS = ("independent", "dependent-jet", "group-param", "dummy", "constant")


class DegenerateExpression(ValueError):
    """An identically-zero denominator was produced."""


class Sym(sp.Symbol):
    """Symbol carrying its role in a problem (independent, jet, parameter, ...).

    The attribute is called ``role`` because sympy reserves ``kind``.  Name
    uniqueness is enforced per problem context (jet contexts and action specs
    check their own tables), not process-wide, so unrelated problems may reuse
    letters.
    """

    def __new__(cls, name: str, kind: str = "constant"):
        if kind not in KINDS:
            raise ValueError(f"unknown symbol kind {kind!r}")
        obj = super().__new__(cls, name)
        obj.role = kind
        return obj


def symbols(names: str | Iterable[str], kind: str) -> tuple[Sym, ...]:
    if isinstance(names, str):
        names = names.replace(",", " ").split()
    return tuple(Sym(n, kind) for n in names)


def rational(p, q=1) -> sp.Rational:
    return sp.Rational(p, q)


def _check_degenerate(e: Expr) -> Expr:
    if e.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
        raise DegenerateExpression(f"division by an identically-zero denominator in {e}")
    return e


def normal_form(e: Expr) -> Expr:
    """Canonical p/q form with the gcd cancelled; idempotent and deterministic.

    Opaque function applications are treated as atoms of the rational-function
    field.  Raises DegenerateExpression if a denominator is identically zero.
    """
    e = sp.sympify(e)
    _check_degenerate(e)
    try:
        return _check_degenerate(sp.cancel(sp.together(e)))
    except ZeroDivisionError as exc:
        raise DegenerateExpression(str(e)) from exc


def rational_atoms(e: Expr) -> list[sp.Basic]:
    """Atoms of the rational-function field: opaque applications, then symbols."""
    funcs = sorted(e.atoms(AppliedUndef), key=sp.default_sort_key)
    syms = sorted(e.free_symbols, key=sp.default_sort_key)
    return funcs + syms


def random_rational_point(atoms, rng: random.Random, span: int = 12) -> dict:
    point = {}
    for a in atoms:
        num = rng.randint(-span, span)
        if num == 0:
            num = span + 1
        point[a] = sp.Rational(num, rng.randint(1, span))
    return point


def eval_at(e: Expr, point: Mapping) -> Expr:
    """Exact evaluation by simultaneous replacement; opaque atoms replaced first."""
    funcs = {k: v for k, v in point.items() if isinstance(k, sp.Basic) and not k.is_Symbol}
    syms = {k: v for k, v in point.items() if isinstance(k, sp.Basic) and k.is_Symbol}
    if funcs:
        e = e.xreplace(funcs)
    return e.xreplace(syms)


def structural_zero(e: Expr) -> bool:
    """Complete zero test for rational expressions: numerator of the combined
    fraction expands to zero.  Avoids gcd computation, so it is much faster
    than normal_form on large expressions that do vanish."""
    e = sp.sympify(e)
    if e == 0:
        return True
    _check_degenerate(e)
    num = sp.numer(sp.together(e))
    return sp.expand(num) == 0


def is_zero(e: Expr, samples: int = 20, seed: int = 7, max_resample: int = 60) -> bool:
    """Sound zero test: structural normal form and randomized exact evaluation agree.

    Sampling evaluates the original expression at exact rational points,
    resampling when a denominator vanishes, so the verdict carries no
    numerical tolerance at all.  Opaque function applications are sampled as
    independent unknowns.
    """
    e = sp.sympify(e)
    structural = structural_zero(e)
    atoms = rational_atoms(e)
    if not atoms:
        sampled = structural
    else:
        rng = random.Random(seed)
        done = tries = 0
        sampled = True
        while done < samples:
            tries += 1
            if tries > samples + max_resample:
                raise DegenerateExpression(f"could not sample a regular point of {e}")
            val = eval_at(e, random_rational_point(atoms, rng))
            if val.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
                continue
            done += 1
            if val != 0:
                sampled = False
                break
    if structural != sampled:
        raise RuntimeError(f"zero-test disagreement on {e}: "
                           f"normal form {structural}, sampling {sampled}")
    return structural


def diff(e: Expr, s: sp.Symbol, n: int = 1) -> Expr:
    """Partial derivative; opaque functions yield their declared derivative atoms."""
    return sp.diff(sp.sympify(e), s, n)


def substitute(e: Expr, bindings: Mapping) -> Expr:
    """Simultaneous substitution followed by normal_form."""
    if not bindings:
        return normal_form(e)
    return normal_form(sp.sympify(e).xreplace(dict(bindings)))


def opaque_function(name: str, nargs: int):
    """An opaque smooth function of ``nargs`` arguments.

    Differentiation produces one new opaque atom per derivative multi-index;
    mixed partials commute because the atom is keyed by the multi-index, not
    by the order the derivatives were taken (d/da d/db L and d/db d/da L both
    give L_d1_d2).  Create each named function once per problem.
    """
    cache: dict[tuple[int, ...], type] = {}

    def make(counts: tuple[int, ...]):
        if counts in cache:
            return cache[counts]
        suffix = "".join(f"_d{i + 1}" for i, c in enumerate(counts) for _ in range(c))

        class _Opaque(sp.Function):
            @classmethod
            def eval(cls, *args):
                if len(args) != nargs:
                    raise TypeError(f"{name}{suffix} expects {nargs} arguments, got {len(args)}")

            def fdiff(self, argindex=1):
                bumped = list(counts)
                bumped[argindex - 1] += 1
                return make(tuple(bumped))(*self.args)

        _Opaque.__name__ = name + suffix
        cache[counts] = _Opaque
        return _Opaque

    return make((0,) * nargs)
