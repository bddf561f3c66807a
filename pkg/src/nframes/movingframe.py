"""Right moving frames: normalization solving, invariantization, invariance testing.

The frame is a map from jet space to the group parameters, obtained by
solving the normalization equations psi_i(g.z) = c_i.  The built-in solver
handles triangular systems that become affine in one not-yet-determined
parameter at a time after clearing denominators; anything harder is handled
by verifying a caller-supplied candidate frame.  Invariantization substitutes
the frame into the transformed coordinates and is a homomorphism, so it acts
coordinatewise on expressions.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import sympy as sp
from sympy.core.function import AppliedUndef

from .groupaction import GroupActionSpec, ProlongedAction
from .jetspace import MultiIndex, mi_letters, mi_order
from .symcore import (DegenerateExpression, Expr, Sym, eval_at, is_zero,
                      normal_form, random_rational_point)


class NotSolvable(ValueError):
    """Normalization equations exceed the triangular/affine solver class."""


class VerificationFailed(ValueError):
    """A candidate frame does not satisfy the normalization equations."""


@dataclass
class NormalizationSpec:
    """Equations psi_i(g.z) = c_i, exactly one per group parameter."""

    equations: tuple  # of (Expr, Rational)

    def __post_init__(self):
        self.equations = tuple((sp.sympify(p), sp.Rational(c)) for p, c in self.equations)


class Frame:
    """Group parameters as expressions in the jet coordinates, plus invariantization."""

    def __init__(self, spec: GroupActionSpec, norm: NormalizationSpec, rho: Mapping):
        self.spec = spec
        self.norm = norm
        self.rho = {p: normal_form(e) for p, e in rho.items()}
        self._inv_cache: dict = {}
        self._isym_fwd: dict = {}
        self._isym_back: dict = {}
        self._phantoms = self._phantom_constants()
        self.denominators = sorted(
            {sp.denom(e) for e in self.rho.values() if sp.denom(e) != 1},
            key=sp.default_sort_key)

    def _phantom_constants(self) -> dict:
        out = {}
        for psi, c in self.norm.equations:
            if psi.is_Symbol:
                out[psi] = c
        return out

    @property
    def ctx(self):
        return self.spec.ctx

    def prolonged(self, order: int = 0) -> ProlongedAction:
        return self.spec.prolong(order)

    def at_frame(self, e: Expr) -> Expr:
        """Substitute g = rho(z) into an expression of jet coordinates and parameters."""
        return normal_form(sp.sympify(e).xreplace(self.rho))

    def inv_coordinate(self, sym) -> Expr:
        """I(z_k) for a single base coordinate symbol."""
        if sym in self._inv_cache:
            return self._inv_cache[sym]
        ctx = self.ctx
        key = ctx.jet_key(sym)
        pa = self.prolonged()
        if key is not None:
            pa.ensure_order(0)
            moved = pa.ujet(*key)
        else:
            moved = self.spec.x_action[ctx.independent_index(sym)]
        val = self.at_frame(moved)
        self._inv_cache[sym] = val
        return val

    def invariantize(self, e: Expr) -> Expr:
        """I(e) = (g.e)|_{g=rho(z)}; acts coordinatewise on jet coordinates."""
        e = sp.sympify(e)
        if any(p in e.free_symbols for p in self.spec.params):
            raise ValueError("expression to invariantize contains group parameters")
        table = {}
        for s in e.free_symbols:
            if self.ctx.is_jet(s) or any(s == x for x in self.ctx.independents):
                table[s] = self.inv_coordinate(s)
        return normal_form(e.xreplace(table))

    def jacobian(self) -> sp.Matrix:
        """dx~/dx evaluated at the frame."""
        pa = self.prolonged()
        return pa.jacobian.xreplace(self.rho).applyfunc(normal_form)

    def inv_jacobian_T(self) -> sp.Matrix:
        return self.jacobian().inv().T.applyfunc(normal_form)

    # -- canonical invariant symbols ------------------------------------------------

    def isym(self, alpha: int, K: MultiIndex):
        """Formal symbol for I^alpha_K (a phantom collapses to its constant)."""
        ctx = self.ctx
        coord = ctx.jet(alpha, K)
        if coord in self._phantoms:
            return self._phantoms[coord]
        if coord not in self._isym_fwd:
            dep = ctx.dependents[alpha]
            suffix = mi_letters(ctx, K)
            s = Sym(f"I{dep}_{suffix}" if suffix else f"I{dep}", "constant")
            self._isym_fwd[coord] = s
            self._isym_back[s] = coord
        return self._isym_fwd[coord]

    def jsym(self, i: int):
        coord = self.ctx.independents[i]
        if coord in self._phantoms:
            return self._phantoms[coord]
        if coord not in self._isym_fwd:
            s = Sym(f"J{coord}", "constant")
            self._isym_fwd[coord] = s
            self._isym_back[s] = coord
        return self._isym_fwd[coord]

    def to_isymbols(self, e: Expr) -> Expr:
        """Rewrite an *invariant* expression in the normalized-invariant symbols.

        Valid precisely because invariantization is coordinatewise and fixes
        invariants: replace every coordinate z_k by the symbol standing for
        I(z_k), with phantoms collapsing to their normalization constants.
        """
        e = sp.sympify(e)
        table = {}
        for s in e.free_symbols:
            key = self.ctx.jet_key(s)
            if key is not None:
                table[s] = self.isym(*key)
            else:
                try:
                    table[s] = self.jsym(self.ctx.independent_index(s))
                except KeyError:
                    pass
        return normal_form(e.xreplace(table))

    def from_isymbols(self, e: Expr) -> Expr:
        """Inverse of to_isymbols: substitute explicit invariant expressions."""
        e = sp.sympify(e)
        table = {}
        for s in e.free_symbols:
            coord = self._isym_back.get(s)
            if coord is not None:
                table[s] = self.inv_coordinate(coord)
        return normal_form(e.xreplace(table))


def solve_frame(spec: GroupActionSpec, norm: NormalizationSpec,
                candidate: Optional[Mapping] = None,
                elimination: Optional[Sequence] = None) -> Frame:
    """Solve the normalization equations for a right moving frame.

    The solver repeatedly looks for an equation that is affine in one unsolved
    parameter (after clearing denominators) and eliminates it.  If a candidate
    frame is supplied it is verified instead of solved.
    """
    if len(norm.equations) != spec.r:
        raise ValueError(f"need exactly {spec.r} normalization equations, got {len(norm.equations)}")
    order = max((spec.ctx.max_jet_order(psi) for psi, _ in norm.equations), default=0)
    pa = spec.prolong(order)
    eqs = [normal_form(pa.transform(psi) - c) for psi, c in norm.equations]

    if candidate is not None:
        rho = {p: normal_form(sp.sympify(e)) for p, e in candidate.items()}
        frame = Frame(spec, norm, rho)
        for eq in eqs:
            if not is_zero(frame.at_frame(eq)):
                raise VerificationFailed(f"candidate frame violates {eq} = 0")
        return frame

    order_hint = list(elimination) if elimination else list(spec.params)

    def finalize(solved):
        solved = dict(solved)
        for _ in range(spec.r + 1):
            if not any(set(spec.params) & v.free_symbols for v in solved.values()):
                break
            solved = {q: normal_form(v.xreplace(solved)) for q, v in solved.items()}
        else:
            return None
        try:
            frame = Frame(spec, norm, solved)
            if any(not is_zero(frame.at_frame(eq)) for eq in eqs):
                return None
            if is_zero(frame.jacobian().det()):
                return None
        except DegenerateExpression:
            return None
        return frame

    budget = [40]
    frame = _affine_search([sp.numer(sp.together(eq)) for eq in eqs],
                           order_hint, {}, finalize, budget)
    if frame is None:
        raise NotSolvable("normalization equations exceed the affine solver class; "
                          "supply a candidate frame")
    return frame


_SOLVER_SIZE_LIMIT = 4000  # count_ops past which an equation leaves the solver class


def _affine_factors(eq, p):
    """Irreducible factors of eq that are degree one in p with usable coefficient."""
    out = []
    if sp.count_ops(eq) > _SOLVER_SIZE_LIMIT:
        return out
    try:
        factors = sp.factor_list(eq)[1]
    except sp.PolynomialError:
        return out
    for f, _mult in factors:
        try:
            poly = sp.Poly(f, p)
        except sp.PolynomialError:
            continue
        if poly.degree() != 1:
            continue
        lead = poly.nth(1)
        if is_zero(lead):
            continue
        out.append(normal_form(-poly.nth(0) / lead))
    return out


def _affine_search(remaining, unsolved, solved, finalize, budget):
    """Budgeted backtracking triangular elimination over affine factors.

    Spurious branches (factors like the denominator locus of a rational
    action) either fail substitution or die at the finalize verification, so
    the first surviving branch carries the unique frame near the cross-section.
    The node budget bounds the search; exhausting it means the system is
    outside the solver class.
    """
    remaining = [r for r in remaining if normal_form(r) != 0]
    if not remaining:
        return finalize(solved) if not unsolved else None
    if not unsolved:
        return None
    for eq in remaining:
        for p in unsolved:
            if budget[0] <= 0:
                return None
            for sol in _affine_factors(eq, p):
                budget[0] -= 1
                try:
                    nxt = [sp.numer(sp.together(normal_form(r.xreplace({p: sol}))))
                           for r in remaining if r is not eq]
                except DegenerateExpression:
                    continue
                if any(sp.count_ops(r) > _SOLVER_SIZE_LIMIT for r in nxt):
                    continue
                found = _affine_search(nxt, [q for q in unsolved if q is not p],
                                       solved | {p: sol}, finalize, budget)
                if found is not None:
                    return found
    return None


class ActionSampler:
    """Exact random (z, g) samples together with the transformed point g.z.

    The coordinate transforms are evaluated numerically at each sample, so the
    expressions under test are only ever evaluated at points, never composed
    symbolically with the prolonged action.  Opaque function applications
    receive one shared random value per distinct numeric application, which
    makes undetermined Lagrangians behave like arbitrary smooth functions.
    """

    def __init__(self, spec: GroupActionSpec, exprs, seed: int = 101):
        self.spec = spec
        exprs = [sp.sympify(e) for e in exprs]
        order = max((spec.ctx.max_jet_order(e) for e in exprs), default=0)
        pa = spec.prolong(order)
        self.table = {}
        for e in exprs:
            self.table.update(pa.transform_table(e))
        atoms = set()
        for e in list(self.table.values()) + exprs:
            atoms |= e.free_symbols
        self.atoms = sorted(atoms | set(spec.params), key=sp.default_sort_key)
        self.rng = random.Random(seed)
        self._opaque_values: dict = {}

    def draw(self):
        """(point, moved_point) with exact rational values, or None on a bad point."""
        point = random_rational_point(self.atoms, self.rng)
        moved = {}
        for coord, expr in self.table.items():
            val = eval_at(expr, point)
            if val.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
                return None
            moved[coord] = val
        moved_point = dict(point)
        moved_point.update(moved)
        return point, moved_point

    def value(self, e: Expr, point: Mapping):
        """Exact value of e at a point; None when a denominator vanishes."""
        val = eval_at(e, point)
        if val.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
            return None
        apps = sorted(val.atoms(AppliedUndef), key=sp.default_sort_key)
        if apps:
            rep = {}
            for a in apps:
                if a not in self._opaque_values:
                    self._opaque_values[a] = sp.Rational(self.rng.randint(1, 97),
                                                         self.rng.randint(1, 29))
                rep[a] = self._opaque_values[a]
            val = val.xreplace(rep)
            if val.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
                return None
        return val

    def run(self, samples: int, check) -> None:
        """Call check(point, moved_point) on the requested number of good samples."""
        done = tries = 0
        while done < samples:
            tries += 1
            if tries > samples + 300:
                raise DegenerateExpression("could not sample enough regular (z, g) points")
            drawn = self.draw()
            if drawn is None:
                continue
            if check(*drawn) is False:
                continue
            done += 1


def all_invariant(spec_or_frame, exprs, samples: int = 20, seed: int = 101) -> list:
    """Per-expression invariance verdicts sharing one set of (z, g) samples."""
    spec = spec_or_frame.spec if isinstance(spec_or_frame, Frame) else spec_or_frame
    exprs = [sp.sympify(e) for e in exprs]
    sampler = ActionSampler(spec, exprs, seed)
    verdicts = [True] * len(exprs)

    def check(point, moved_point):
        values = []
        for e in exprs:
            lhs = sampler.value(e, moved_point)
            rhs = sampler.value(e, point)
            if lhs is None or rhs is None:
                return False
            values.append(lhs == rhs)
        for i, same in enumerate(values):
            if not same:
                verdicts[i] = False
        return True

    sampler.run(samples, check)
    return verdicts


def is_invariant(spec_or_frame, e: Expr, samples: int = 20, seed: int = 101) -> bool:
    """True iff g.e - e vanishes at random exact rational (z, g) samples."""
    return all_invariant(spec_or_frame, [e], samples=samples, seed=seed)[0]
