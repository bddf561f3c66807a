"""Jet-bundle bookkeeping: multi-indices, jet coordinates, total derivatives.

A multi-index is a count vector over the independent variables, so (2, 1) on
independents (x, y) is the unordered tuple xxy.  Jet symbols are named by
appending the independents' names, u_xxy, which is also the problem-file
syntax.  Contexts grow on demand: asking for a derivative one order past the
current table simply extends it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import sympy as sp

from .symcore import Expr, Sym, normal_form

MultiIndex = tuple  # counts per independent variable


def multi_index(ctx: "JetContext", *names: str) -> MultiIndex:
    """Multi-index from independent-variable names, e.g. multi_index(ctx, 'x', 'x', 'y')."""
    counts = [0] * len(ctx.independents)
    for n in names:
        counts[ctx.independent_index(n)] += 1
    return tuple(counts)


def mi_order(K: MultiIndex) -> int:
    return sum(K)


def mi_add(K: MultiIndex, i: int, n: int = 1) -> MultiIndex:
    bumped = list(K)
    bumped[i] += n
    return tuple(bumped)


def mi_letters(ctx: "JetContext", K: MultiIndex) -> str:
    return "".join(str(ctx.independents[i]) * K[i] for i in range(len(K)))


class JetContext:
    """Symbol table for the jet space of dependents over independents.

    ``invariant_independents`` flags independents declared invariant under the
    group action (the dummy variable of the variational device is one); they
    differentiate like any other but the invariant calculus consults the flag.
    """

    def __init__(self, independents: Sequence[str], dependents: Sequence[str],
                 invariant_independents: Iterable[str] = (), dummy: str | None = None):
        self.independents = tuple(Sym(n, "independent") for n in independents)
        self.dependents = tuple(Sym(n, "dependent-jet") for n in dependents)
        names = [str(s) for s in self.independents + self.dependents]
        if len(set(names)) != len(names):
            raise ValueError(f"variable names not unique: {names}")
        flags = set(invariant_independents)
        if dummy is not None:
            flags.add(dummy)
        self.dummy_index = None if dummy is None else self.independent_index(dummy)
        self.invariant_independents = frozenset(self.independent_index(n) for n in flags)
        self._by_key: dict[tuple[int, MultiIndex], Sym] = {}
        self._by_sym: dict[Sym, tuple[int, MultiIndex]] = {}
        for a, u in enumerate(self.dependents):
            zero = (0,) * len(self.independents)
            self._by_key[(a, zero)] = u
            self._by_sym[u] = (a, zero)

    @property
    def n_independents(self) -> int:
        return len(self.independents)

    def independent_index(self, name) -> int:
        for i, s in enumerate(self.independents):
            if str(s) == str(name):
                return i
        raise KeyError(f"not an independent variable: {name}")

    def dependent_index(self, name) -> int:
        for a, s in enumerate(self.dependents):
            if str(s) == str(name):
                return a
        raise KeyError(f"not a dependent variable: {name}")

    def jet(self, alpha: int, K: MultiIndex) -> Sym:
        """The coordinate symbol for the K-th derivative of dependent alpha."""
        K = tuple(K)
        if (alpha, K) not in self._by_key:
            name = f"{self.dependents[alpha]}_{mi_letters(self, K)}"
            s = Sym(name, "dependent-jet")
            self._by_key[(alpha, K)] = s
            self._by_sym[s] = (alpha, K)
        return self._by_key[(alpha, K)]

    def jet_key(self, sym) -> tuple[int, MultiIndex] | None:
        return self._by_sym.get(sym)

    def is_jet(self, sym) -> bool:
        return sym in self._by_sym

    def jets_up_to(self, order: int) -> list[tuple[int, MultiIndex]]:
        """All (alpha, K) with |K| <= order, in a fixed deterministic order."""
        out = []
        for a in range(len(self.dependents)):
            for K in self._indices_up_to(order):
                out.append((a, K))
        return out

    def _indices_up_to(self, order: int) -> list[MultiIndex]:
        p = self.n_independents
        idx = [(0,) * p]
        frontier = [(0,) * p]
        for _ in range(order):
            nxt = set()
            for K in frontier:
                for i in range(p):
                    nxt.add(mi_add(K, i))
            frontier = sorted(nxt, key=lambda K: tuple(reversed(K)))
            idx.extend(frontier)
        return idx

    def indices_of_order(self, order: int) -> list[MultiIndex]:
        return [K for K in self._indices_up_to(order) if mi_order(K) == order]

    def max_jet_order(self, e: Expr) -> int:
        orders = [mi_order(K) for (_, K) in map(self._by_sym.get, e.free_symbols & self._by_sym.keys())]
        return max(orders, default=0)

    def total_derivative(self, e: Expr, i: int) -> Expr:
        """D_i = d/dx_i + sum u^a_{Ki} d/du^a_K over jets present in e."""
        e = sp.sympify(e)
        out = sp.diff(e, self.independents[i])
        for s in e.free_symbols:
            key = self._by_sym.get(s)
            if key is None:
                continue
            a, K = key
            out += self.jet(a, mi_add(K, i)) * sp.diff(e, s)
        return out

    def iterated_derivative(self, e: Expr, K: MultiIndex) -> Expr:
        for i, c in enumerate(K):
            for _ in range(c):
                e = self.total_derivative(e, i)
        return e

    def word_derivative(self, e: Expr, word: Sequence[int]) -> Expr:
        """D applied along an explicit word of independent indices, leftmost outermost."""
        for i in reversed(word):
            e = self.total_derivative(e, i)
        return e


@dataclass(frozen=True)
class TotalVectorField:
    """f_1 D_1 + ... + f_p D_p (one coefficient per independent, dummies included)."""

    ctx: JetContext
    coeffs: tuple

    def __call__(self, e: Expr) -> Expr:
        terms = [c * self.ctx.total_derivative(e, i)
                 for i, c in enumerate(self.coeffs) if c != 0]
        return normal_form(sp.Add(*terms)) if terms else sp.Integer(0)


def apply_vector_field(v: TotalVectorField, e: Expr) -> Expr:
    return v(e)
