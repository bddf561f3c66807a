"""Euler operator, Noether law components, and the structured factorization.

Sign conventions, fixed once: the law components satisfy
sum_k D_k C^j_k = -Q_j . E(Lbar) identically on jet space, and the law
(p-1)-form of row j is sum_k (-1)^{k-1} C^j_k dx_1 ... ^dx_k ... dx_p.  The
structured factorization then reads C' = Ad(rho)^{-1} V M_J on the unsigned
hatted basis, with C'_{jk} = (-1)^{k-1} C^j_k, so V = Ad(rho) C' M_J^{-1}.
Vectors of invariants are obtained by invariantizing the classical laws; the
boundary-term formula is available as a cross-check on caller-supplied
coefficient vectors.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import sympy as sp

from .groupaction import AdjointRep, GroupActionSpec, adjoint_rep, characteristic, infinitesimals
from .invariantcalc import DiffForm, invariant_operators, true_independent_indices
from .jetspace import JetContext, MultiIndex, mi_order
from .movingframe import ActionSampler, Frame, all_invariant, is_invariant
from .symcore import Expr, is_zero, normal_form, random_rational_point, structural_zero


class NotInvariant(ValueError):
    """The Lagrangian fails the infinitesimal invariance criterion."""


class SingularMinors(ValueError):
    pass


class InvarianceFailed(ValueError):
    """A vector-of-invariants entry is not invariant (wrong signs or frame)."""


class ShapeMismatch(ValueError):
    pass


class IdentityFailed(ValueError):
    """The off-shell Noether identity has a nonzero residual."""


class NotMatrixGroup(ValueError):
    pass


@dataclass
class Lagrangian:
    """Density Lbar in jet coordinates with its declared symmetry action."""

    spec: GroupActionSpec
    density: Expr
    name: str = "L"

    def __post_init__(self):
        self.density = normal_form(sp.sympify(self.density))

    @property
    def ctx(self) -> JetContext:
        return self.spec.ctx

    def order(self) -> int:
        return self.ctx.max_jet_order(self.density)

    def invariance_residuals(self) -> list:
        """pr v_j(Lbar) + Lbar Div Xi_j per group parameter (zero iff symmetric)."""
        ctx = self.ctx
        vf = infinitesimals(self.spec, self.order())
        out = []
        for j in range(self.spec.r):
            pr = sp.Integer(0)
            for i, x in enumerate(ctx.independents):
                pr += vf.xi[j][i] * sp.diff(self.density, x)
            for s in self.density.free_symbols:
                key = ctx.jet_key(s)
                if key is not None:
                    pr += vf.phi[j][key] * sp.diff(self.density, s)
            div = sp.Add(*[ctx.total_derivative(vf.xi[j][i], i)
                           for i in true_independent_indices(ctx)])
            out.append(normal_form(pr + self.density * div))
        return out

    def check_invariance(self) -> None:
        for j, res in enumerate(self.invariance_residuals()):
            if not is_zero(res):
                raise NotInvariant(
                    f"pr v(L) + L Div Xi nonzero for parameter {self.spec.params[j]}: {res}")


def euler_operator(ctx: JetContext, density: Expr, alpha: int) -> Expr:
    """E^a(L) = sum_K (-1)^{|K|} D_K dL/du^a_K over the multi-indices present."""
    density = sp.sympify(density)
    total = sp.Integer(0)
    for s in density.free_symbols:
        key = ctx.jet_key(s)
        if key is None or key[0] != alpha:
            continue
        _, K = key
        term = ctx.iterated_derivative(sp.diff(density, s), K)
        total += sp.Integer(-1) ** mi_order(K) * term
    return normal_form(total)


def euler_lagrange(lagrangian: Lagrangian) -> list:
    return [euler_operator(lagrangian.ctx, lagrangian.density, a)
            for a in range(len(lagrangian.ctx.dependents))]


def invariantized_euler_lagrange(lagrangian: Lagrangian, frame: Frame) -> list:
    """E^a(Lbar)/det(J): the Euler-Lagrange system weighted by the invariant
    volume factor, which is its invariant-calculus presentation when the
    dependent variables are themselves invariant."""
    det = normal_form(frame_jacobian_true(frame).det())
    return [normal_form(e / det) for e in euler_lagrange(lagrangian)]


def _sorted_word(ctx: JetContext, K: MultiIndex) -> tuple:
    return tuple(i for i in range(ctx.n_independents) for _ in range(K[i]))


def noether_laws(lagrangian: Lagrangian, check: bool = True) -> sp.Matrix:
    """Law components C^j_k with sum_k D_k C^j_k = -Q_j . E(Lbar), any order.

    Boundary terms use the telescoped integration-by-parts identity averaged
    over every distinct ordering of each derivative word.  The symmetrization
    is what makes the components transform equivariantly (the laws stay linear
    in the infinitesimals with no ordering bias), which the structured
    factorization depends on; any single ordering differs by a trivial law.
    """
    from sympy.utilities.iterables import multiset_permutations

    if check:
        lagrangian.check_invariance()
    spec = lagrangian.spec
    ctx = lagrangian.ctx
    vf = infinitesimals(spec, lagrangian.order())
    true_idx = true_independent_indices(ctx)
    qs = [characteristic(spec, j, vf) for j in range(spec.r)]
    lawcols = {k: pos for pos, k in enumerate(true_idx)}
    C = sp.zeros(spec.r, len(true_idx))
    for j in range(spec.r):
        for pos, k in enumerate(true_idx):
            C[j, pos] = lagrangian.density * vf.xi[j][k]
        for s in lagrangian.density.free_symbols:
            key = ctx.jet_key(s)
            if key is None:
                continue
            alpha, K = key
            if mi_order(K) == 0:
                continue
            partial = sp.diff(lagrangian.density, s)
            orderings = list(multiset_permutations(_sorted_word(ctx, K)))
            weight = sp.Rational(1, len(orderings))
            for word in orderings:
                for posn in range(len(word)):
                    k = word[posn]
                    dq = ctx.word_derivative(qs[j][alpha], word[posn + 1:])
                    dp = ctx.word_derivative(partial, word[:posn])
                    C[j, lawcols[k]] += weight * sp.Integer(-1) ** posn * dq * dp
    return C.applyfunc(normal_form)


def first_minors(J: sp.Matrix) -> sp.Matrix:
    """Entry (i, j) = det of J with row i and column j deleted (no cofactor sign)."""
    if J.rows != J.cols:
        raise ValueError("first minors need a square matrix")
    n = J.rows
    if n == 1:
        return sp.Matrix([[sp.Integer(1)]])
    return sp.Matrix(n, n, lambda i, j: normal_form(J.minor_submatrix(i, j).det()))


def law_forms(lagrangian: Lagrangian, C: sp.Matrix) -> list:
    """Row j as the (p-1)-form sum_k (-1)^{k-1} C^j_k dx_1...^dx_k...dx_p."""
    ctx = lagrangian.ctx
    true_idx = true_independent_indices(ctx)
    forms = []
    for j in range(C.rows):
        terms = {}
        for pos, k in enumerate(true_idx):
            hatted = tuple(i for i in true_idx if i != k)
            terms[hatted] = sp.Integer(-1) ** pos * C[j, pos]
        forms.append(DiffForm(ctx, terms))
    return forms


@dataclass
class LawBundle:
    """Noether laws with their structured factors d(Ad(rho)^{-1} V M_J d^{p-1}x) = 0."""

    lagrangian: Lagrangian
    frame: Frame
    C: sp.Matrix          # classical components, r x p
    Cprime: sp.Matrix     # with the (-1)^{k-1} hatted-basis signs
    Ad: sp.Matrix         # Ad(rho)
    AdInv: sp.Matrix      # Ad(rho)^{-1}
    V: sp.Matrix          # vectors of invariants as columns, r x p
    Minors: sp.Matrix     # M_J, p x p


def frame_jacobian_true(frame: Frame) -> sp.Matrix:
    """The p x p block of the frame Jacobian over the non-dummy independents."""
    jac = frame.jacobian()
    idx = true_independent_indices(frame.ctx)
    return sp.Matrix(len(idx), len(idx), lambda a, b: jac[idx[a], idx[b]])


def _sampled_equal(M: sp.Matrix, N: sp.Matrix, samples: int = 20, seed: int = 5) -> bool:
    """M == N at random exact rational points (tripwire for symbolic identities)."""
    rng = random.Random(seed)
    atoms: set = set()
    for e in list(M) + list(N):
        atoms |= e.free_symbols
    atoms = sorted(atoms, key=sp.default_sort_key)
    if not atoms:
        return (M - N).applyfunc(normal_form) == sp.zeros(*M.shape)
    done = tries = 0
    while done < samples and tries < samples + 100:
        tries += 1
        point = random_rational_point(atoms, rng)
        mv, nv = M.xreplace(point), N.xreplace(point)
        if mv.has(sp.zoo, sp.nan, sp.oo, -sp.oo) or nv.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
            continue
        done += 1
        if mv != nv:
            return False
    return done == samples


def _sampled_identity(M: sp.Matrix, n: int, samples: int = 10, seed: int = 5) -> bool:
    return _sampled_equal(M, sp.eye(n), samples=samples, seed=seed)


def structured_laws(lagrangian: Lagrangian, frame: Frame,
                    adrep: Optional[AdjointRep] = None, check: bool = True,
                    C: Optional[sp.Matrix] = None) -> LawBundle:
    """Factor the classical laws through the frame: V = Ad(rho) C' M_J^{-1}.

    Asserts that every entry of V is invariant and that the factors reassemble
    C' exactly; both are genuine checks of the frame, the adjoint
    representation, and the sign conventions.
    """
    spec = lagrangian.spec
    if spec.r == 0:
        return LawBundle(lagrangian, frame, sp.zeros(0, 0), sp.zeros(0, 0),
                         sp.zeros(0, 0), sp.zeros(0, 0), sp.zeros(0, 0), sp.zeros(0, 0))
    if C is None:
        C = noether_laws(lagrangian, check=check)
    p = C.cols
    Cprime = sp.Matrix(spec.r, p, lambda j, k: sp.Integer(-1) ** k * C[j, k])
    minors = first_minors(frame_jacobian_true(frame))
    if is_zero(normal_form(minors.det())):
        raise SingularMinors("M_J is identically singular")
    adrep = adrep or adjoint_rep(spec)
    Ad = adrep.matrix.xreplace(frame.rho).applyfunc(normal_form)
    if spec.inverse is not None:
        inv_params = [normal_form(e.xreplace(frame.rho)) for e in spec.inverse]
        AdInv = adrep.matrix.xreplace(dict(zip(spec.params, inv_params)))
        AdInv = AdInv.applyfunc(normal_form)
        # certify AdInv Ad = I symbolically at the frame: reassembly is then
        # exact by field algebra, AdInv V M = (AdInv Ad) C' (M^{-1} M) = C'
        for e in AdInv * Ad - sp.eye(spec.r):
            if not structural_zero(e):
                raise InvarianceFailed("Ad(rho) inverse check failed")
    else:
        AdInv = Ad.inv().applyfunc(normal_form)
    V = (Ad * Cprime * minors.inv()).applyfunc(normal_form)
    if check:
        if not _sampled_equal(AdInv * V * minors, Cprime):
            raise InvarianceFailed("factorization does not reassemble the laws")
        verdicts = all_invariant(frame, list(V))
        for flat, ok in enumerate(verdicts):
            if not ok:
                j, k = divmod(flat, p)
                raise InvarianceFailed(f"V[{j},{k}] is not invariant: {V[j, k]}")
    return LawBundle(lagrangian, frame, C, Cprime, Ad, AdInv, V, minors)


def vectors_from_boundary(frame: Frame, lagrangian: Lagrangian,
                          cvecs: Mapping, adrep: Optional[AdjointRep] = None) -> sp.Matrix:
    """Vectors of invariants from caller-supplied boundary coefficient vectors.

    cvecs maps dependent index -> {multi-index J -> sequence over k of C^a_{J,k}},
    the coefficients of I^a_{J,tau} in the k-th boundary term, as explicit
    invariant expressions.  Returns the r x p matrix with columns v_k.
    """
    spec = lagrangian.spec
    ctx = lagrangian.ctx
    true_idx = true_independent_indices(ctx)
    p = len(true_idx)
    vf = infinitesimals(spec, lagrangian.order())
    qs = [characteristic(spec, j, vf) for j in range(spec.r)]
    L_inv = frame.invariantize(lagrangian.density)
    V = sp.zeros(spec.r, p)
    for pos, k in enumerate(true_idx):
        col = sp.zeros(spec.r, 1)
        for alpha, table in cvecs.items():
            for J, row in table.items():
                if len(row) != p:
                    raise ShapeMismatch(f"C-vector for dependent {alpha}, index {J} "
                                        f"has {len(row)} components, expected {p}")
                coeff = sp.sympify(row[pos])
                if coeff == 0:
                    continue
                for j in range(spec.r):
                    dq = ctx.iterated_derivative(qs[j][alpha], J)
                    col[j, 0] += frame.invariantize(dq) * coeff
        for j in range(spec.r):
            col[j, 0] += L_inv * frame.invariantize(vf.xi[j][k])
        for j in range(spec.r):
            V[j, pos] = normal_form(sp.Integer(-1) ** pos * col[j, 0])
    return V


def laws_equivalent(lagrangian: Lagrangian, frame: Frame, V1: sp.Matrix, V2: sp.Matrix,
                    AdInv: sp.Matrix, minors: sp.Matrix,
                    on_shell: Optional[Mapping] = None) -> bool:
    """Equality of two law matrices modulo trivial laws.

    The difference must have identically zero total divergence, or zero
    divergence after the on-shell reduction (a solved-for highest derivative).
    """
    ctx = lagrangian.ctx
    true_idx = true_independent_indices(ctx)
    dC = (AdInv * (V1 - V2) * minors).applyfunc(normal_form)
    for j in range(dC.rows):
        div = sp.Integer(0)
        for pos, k in enumerate(true_idx):
            div += sp.Integer(-1) ** pos * ctx.total_derivative(dC[j, pos], k)
        div = normal_form(div)
        if is_zero(div):
            continue
        if on_shell is None:
            return False
        reduced = div
        for _ in range(2 + mi_order(max((ctx.jet_key(s)[1] for s in div.free_symbols
                                         if ctx.jet_key(s)), default=(0,)))):
            newer = normal_form(reduced.xreplace(dict(on_shell)))
            if newer == reduced:
                break
            reduced = newer
        if not is_zero(reduced):
            return False
    return True


def divergence_check(lagrangian: Lagrangian, bundle: Optional[LawBundle] = None,
                     C: Optional[sp.Matrix] = None) -> list:
    """Verify sum_k D_k C^j_k + Q_j . E(Lbar) = 0 and the form-level restatement.

    The exterior derivative of each law form is compared against the same
    on-shell-vanishing density.  Returns the residual list (all zero on
    success); raises IdentityFailed otherwise.
    """
    ctx = lagrangian.ctx
    spec = lagrangian.spec
    if C is None:
        C = bundle.C if bundle is not None else noether_laws(lagrangian)
    true_idx = true_independent_indices(ctx)
    els = euler_lagrange(lagrangian)
    vf = infinitesimals(spec, lagrangian.order())
    qs = [characteristic(spec, j, vf) for j in range(spec.r)]
    residuals = []
    forms = law_forms(lagrangian, C)
    vol_key = tuple(true_idx)
    for j in range(spec.r):
        qdot = sp.Add(*[qs[j][a] * els[a] for a in range(len(ctx.dependents))])
        div = sp.Add(*[ctx.total_derivative(C[j, pos], k)
                       for pos, k in enumerate(true_idx)])
        res = div + qdot
        if not structural_zero(res):
            raise IdentityFailed(f"Noether identity residual for row {j}: {normal_form(res)}")
        residuals.append(sp.Integer(0))
        dcoeff = forms[j].d().coeff(vol_key)
        # the two routes assemble the same derivative terms; accept a
        # syntactic match, otherwise prove the form-level identity afresh
        if sp.expand(dcoeff - div) != 0 and not structural_zero(dcoeff + qdot):
            raise IdentityFailed(f"exterior-derivative residual for row {j}")
    return residuals


def pform_action(spec: GroupActionSpec, values: Optional[Sequence] = None) -> sp.Matrix:
    """Coefficients Z^k_l of the group action on the hatted (p-1)-form basis.

    Z^k_l = ((dx~/dx)^{-1})_{lk} det(dx~/dx), so Z(e) = I and
    sum_l (dx~_j/dx_l) Z^k_l = delta_jk det(dx~/dx).
    """
    pa = spec.prolong(1)
    idx = true_independent_indices(spec.ctx)
    J = sp.Matrix(len(idx), len(idx), lambda a, b: pa.jacobian[idx[a], idx[b]])
    Z = J.adjugate().T.applyfunc(normal_form)
    if values is not None:
        Z = Z.xreplace(dict(zip(spec.params, values))).applyfunc(normal_form)
    return Z


@dataclass
class CheckReport:
    """Outcome of a sampled verification: seed, sample count, failures."""

    name: str
    samples: int
    seed: int
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def equivariance_check(lagrangian: Lagrangian, adrep: Optional[AdjointRep] = None,
                       C: Optional[sp.Matrix] = None, samples: int = 20,
                       seed: int = 20090) -> CheckReport:
    """Transformed law forms equal Ad(g) times the original forms, at random samples.

    The transformed hatted basis is pushed back with the first minors of the
    generic Jacobian (the Z coefficients), and both sides are compared as
    exact rationals.
    """
    spec = lagrangian.spec
    ctx = lagrangian.ctx
    if C is None:
        C = noether_laws(lagrangian)
    adrep = adrep or adjoint_rep(spec)
    true_idx = true_independent_indices(ctx)
    p = len(true_idx)
    flat = [C[j, k] for j in range(C.rows) for k in range(p)]
    pa = spec.prolong(max(ctx.max_jet_order(e) for e in flat))
    Jg = sp.Matrix(p, p, lambda c, d: pa.jacobian[true_idx[c], true_idx[d]])
    minors_g = sp.Matrix(p, p, lambda c, d: Jg.minor_submatrix(c, d).det())
    sampler = ActionSampler(spec, flat + list(minors_g) + list(adrep.matrix), seed)
    report = CheckReport("adjoint action on conservation laws", samples, seed)

    def check(point, moved_point):
        vals_moved = [sampler.value(e, moved_point) for e in flat]
        vals_plain = [sampler.value(e, point) for e in flat]
        min_val = [sampler.value(e, point) for e in minors_g]
        ad_val = [sampler.value(e, point) for e in adrep.matrix]
        if any(v is None for v in vals_moved + vals_plain + min_val + ad_val):
            return False
        for j in range(C.rows):
            for ell in range(p):
                lhs = sum(sp.Integer(-1) ** k * vals_moved[j * p + k] * min_val[k * p + ell]
                          for k in range(p))
                rhs = sum(ad_val[j * C.rows + m] * sp.Integer(-1) ** ell * vals_plain[m * p + ell]
                          for m in range(C.rows))
                if lhs != rhs:
                    report.failures.append((dict(point), j, ell))
        return True

    sampler.run(samples, check)
    return report


def matrix_equivariance_check(spec: GroupActionSpec, adrep: AdjointRep, A: sp.Matrix,
                              samples: int = 20, seed: int = 20090) -> CheckReport:
    """A(g.z) = Ad(g) A(z) at random exact (z, g) samples (moving-frame equivariance)."""
    flat = list(A)
    sampler = ActionSampler(spec, flat + list(adrep.matrix), seed)
    report = CheckReport("matrix equivariance", samples, seed)

    def check(point, moved_point):
        vals_moved = [sampler.value(e, moved_point) for e in flat]
        vals_plain = [sampler.value(e, point) for e in flat]
        ad_val = [sampler.value(e, point) for e in adrep.matrix]
        if any(v is None for v in vals_moved + vals_plain + ad_val):
            return False
        rows, cols = A.shape
        Am = sp.Matrix(rows, cols, lambda i, j: vals_moved[i * cols + j])
        Ap = sp.Matrix(rows, cols, lambda i, j: vals_plain[i * cols + j])
        Adm = sp.Matrix(rows, rows, lambda i, j: ad_val[i * rows + j])
        if Am != Adm * Ap:
            report.failures.append(dict(point))
        return True

    sampler.run(samples, check)
    return report


def curvature_matrices(frame: Frame) -> list:
    """D_i(rho) rho^{-1} per invariant operator, in the group's matrix realization."""
    spec = frame.spec
    if spec.matrix_form is None:
        raise NotMatrixGroup(f"{spec.name} carries no matrix realization")
    rho_mat = spec.matrix_form.xreplace(frame.rho).applyfunc(normal_form)
    rho_inv = rho_mat.inv().applyfunc(normal_form)
    ops = invariant_operators(frame)
    out = []
    for op in ops:
        theta = (rho_mat.applyfunc(op) * rho_inv).applyfunc(normal_form)
        out.append(theta)
    return out
