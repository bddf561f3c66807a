"""Lie group actions on jet space: prolongation, infinitesimals, Adjoint representation.

A GroupActionSpec holds the action of a parametrized group on the base
variables; prolongation pushes it to derivative coordinates through the
transformed total derivatives D~_i = sum_k ((dx~/dx)^{-T})_{ik} D_k.  Group
constraints (det = 1) are handled by eliminating one parameter inside the
action expressions before anything is differentiated, so the parameters are
free coordinates near the identity.  Left actions only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import sympy as sp

from .jetspace import JetContext, MultiIndex, mi_add, mi_order
from .symcore import Expr, Sym, is_zero, normal_form


class SingularJacobian(ValueError):
    """det(dx~/dx) is identically zero."""


class GeneratorsNotIndependent(ValueError):
    """The transformed generators cannot be re-expressed uniquely in the basis."""


@dataclass
class GroupActionSpec:
    """Action of an r-parameter group on the base variables of a jet context.

    ``x_action`` and ``u_action`` are expressions in the base coordinates and
    the parameters; substituting the identity values must give the identity
    map.  ``composition`` (optional) gives the product parameters as
    expressions in two fresh parameter tuples, ``left_params`` acting after
    ``right_params``; ``inverse`` (optional) gives the parameters of g^{-1}.
    ``matrix_form`` (optional) realizes g as a matrix for curvature output.
    """

    ctx: JetContext
    params: tuple
    identity: dict
    x_action: tuple
    u_action: tuple
    composition: Optional[tuple] = None
    left_params: Optional[tuple] = None
    right_params: Optional[tuple] = None
    inverse: Optional[tuple] = None
    matrix_form: Optional[sp.Matrix] = None
    name: str = "group"
    _prolonged: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.params = tuple(self.params)
        base = set(self.ctx.independents) | set(self.ctx.dependents)
        clash = base & set(self.params)
        if clash:
            raise ValueError(f"group parameters collide with variables: {sorted(map(str, clash))}")
        self.x_action = tuple(sp.sympify(e) for e in self.x_action)
        self.u_action = tuple(sp.sympify(e) for e in self.u_action)
        if len(self.x_action) != self.ctx.n_independents:
            raise ValueError("one x_action expression per independent variable required")
        if len(self.u_action) != len(self.ctx.dependents):
            raise ValueError("one u_action expression per dependent variable required")
        for base, img in zip(self.ctx.independents + self.ctx.dependents,
                             self.x_action + self.u_action):
            at_e = img.xreplace(self.identity)
            if normal_form(at_e - base) != 0:
                raise ValueError(f"identity parameters send {base} to {at_e}")

    @property
    def r(self) -> int:
        return len(self.params)

    def prolong(self, order: int) -> "ProlongedAction":
        have = self._prolonged.get("pa")
        if have is None:
            have = ProlongedAction(self)
            self._prolonged["pa"] = have
        have.ensure_order(order)
        return have

    def compose_values(self, g_vals: Sequence, h_vals: Sequence) -> tuple:
        """Parameters of g*h (g acting after h), exactly."""
        if self.composition is None:
            raise ValueError("no composition law supplied")
        rep = dict(zip(self.left_params, g_vals)) | dict(zip(self.right_params, h_vals))
        return tuple(normal_form(e.xreplace(rep)) for e in self.composition)

    def inverse_values(self, g_vals: Sequence) -> tuple:
        if self.inverse is None:
            raise ValueError("no inverse map supplied")
        rep = dict(zip(self.params, g_vals))
        return tuple(normal_form(e.xreplace(rep)) for e in self.inverse)


class ProlongedAction:
    """Transformed jet coordinates u~^a_K up to any order, with the Jacobian dx~/dx."""

    def __init__(self, spec: GroupActionSpec):
        self.spec = spec
        ctx = spec.ctx
        n = ctx.n_independents
        self.jacobian = sp.Matrix(n, n, lambda i, k: ctx.total_derivative(spec.x_action[i], k))
        det = normal_form(self.jacobian.det())
        if is_zero(det):
            raise SingularJacobian("dx~/dx is identically singular")
        self.jacobian_det = det
        inv = self.jacobian.inv()
        self.jacobian_inv = inv.applyfunc(normal_form)
        self._ujet: dict = {}
        for a in range(len(ctx.dependents)):
            self._ujet[(a, (0,) * n)] = spec.u_action[a]
        self._order = 0

    def dtilde(self, e: Expr, i: int) -> Expr:
        """Transformed total derivative D~_i at generic group parameters."""
        ctx = self.spec.ctx
        out = sp.Integer(0)
        for k in range(ctx.n_independents):
            c = self.jacobian_inv[k, i]  # (J^{-T})_{ik}
            if c != 0:
                out += c * ctx.total_derivative(e, k)
        return normal_form(out)

    def ujet(self, alpha: int, K: MultiIndex) -> Expr:
        K = tuple(K)
        if (alpha, K) not in self._ujet:
            i = max(j for j, c in enumerate(K) if c > 0)
            prev = mi_add(K, i, -1)
            self._ujet[(alpha, K)] = self.dtilde(self.ujet(alpha, prev), i)
        return self._ujet[(alpha, K)]

    def ensure_order(self, order: int) -> None:
        if order <= self._order:
            return
        for a, K in self.spec.ctx.jets_up_to(order):
            self.ujet(a, K)
        self._order = order

    def transform_table(self, e: Expr) -> dict:
        """Coordinate -> transformed coordinate, for every base atom of e."""
        ctx = self.spec.ctx
        table = {}
        for s in e.free_symbols:
            key = ctx.jet_key(s)
            if key is not None:
                table[s] = self.ujet(*key)
            else:
                try:
                    i = ctx.independent_index(s)
                except KeyError:
                    continue
                table[s] = self.spec.x_action[i]
        return table

    def transform(self, e: Expr, simplify: bool = True) -> Expr:
        """g.e: every jet coordinate and independent replaced by its transform."""
        out = sp.sympify(e).xreplace(self.transform_table(e))
        return normal_form(out) if simplify else out


@dataclass
class InfinitesimalVF:
    """Per parameter j: xi^i_j, phi^a_j and the prolonged phi^a_{K,j}."""

    spec: GroupActionSpec
    xi: list      # xi[j][i]
    phi: list     # phi[j][(alpha, K)]

    def prolonged_phi(self, j: int, alpha: int, K: MultiIndex) -> Expr:
        K = tuple(K)
        if K not in {k for (_, k) in self.phi[j]} and (alpha, K) not in self.phi[j]:
            self._extend(mi_order(K))
        return self.phi[j][(alpha, K)]

    def _extend(self, order: int) -> None:
        pa = self.spec.prolong(order)
        ident = self.spec.identity
        for j, a_j in enumerate(self.spec.params):
            for alpha, K in self.spec.ctx.jets_up_to(order):
                if (alpha, K) not in self.phi[j]:
                    d = sp.diff(pa.ujet(alpha, K), a_j)
                    self.phi[j][(alpha, K)] = normal_form(d.xreplace(ident))


def infinitesimals(spec: GroupActionSpec, order: int = 1) -> InfinitesimalVF:
    """xi^i_j = d(x~_i)/d(a_j) at the identity, and prolonged phi^a_{K,j}."""
    pa = spec.prolong(order)
    ident = spec.identity
    xi = [[normal_form(sp.diff(spec.x_action[i], a).xreplace(ident))
           for i in range(spec.ctx.n_independents)] for a in spec.params]
    vf = InfinitesimalVF(spec, xi, [dict() for _ in spec.params])
    vf._extend(order)
    return vf


def characteristic(spec: GroupActionSpec, j: int, vf: InfinitesimalVF | None = None) -> list:
    """Q^a_j = phi^a_j - sum_i u^a_i xi^i_j, one entry per dependent variable."""
    vf = vf or infinitesimals(spec, 1)
    ctx = spec.ctx
    out = []
    zero = (0,) * ctx.n_independents
    for alpha in range(len(ctx.dependents)):
        q = vf.phi[j][(alpha, zero)]
        for i in range(ctx.n_independents):
            q -= ctx.jet(alpha, mi_add(zero, i)) * vf.xi[j][i]
        out.append(normal_form(q))
    return out


def characteristic_matrix(spec: GroupActionSpec, alpha: int, rows: Sequence[MultiIndex],
                          vf: InfinitesimalVF | None = None) -> sp.Matrix:
    """Matrix of characteristics: entry (j, K) = D_K(Q^a_j)."""
    vf = vf or infinitesimals(spec, 1)
    ctx = spec.ctx
    qs = [characteristic(spec, j, vf)[alpha] for j in range(spec.r)]
    return sp.Matrix(spec.r, len(rows),
                     lambda j, k: normal_form(ctx.iterated_derivative(qs[j], rows[k])))


@dataclass
class AdjointRep:
    """r x r matrix Ad(g) with g.(sum c_j v_j) = (c) Ad(g) (v)."""

    spec: GroupActionSpec
    matrix: sp.Matrix

    def at(self, values: Sequence) -> sp.Matrix:
        rep = dict(zip(self.spec.params, values))
        return self.matrix.xreplace(rep).applyfunc(normal_form)


def _base_generators(spec: GroupActionSpec) -> sp.Matrix:
    """Rows: generator j; columns: components (xi^1..xi^p, phi^1..phi^q) on (x, u)."""
    ident = spec.identity
    rows = []
    for a_j in spec.params:
        row = [sp.diff(e, a_j).xreplace(ident) for e in spec.x_action + spec.u_action]
        rows.append([normal_form(c) for c in row])
    return sp.Matrix(rows)


def adjoint_rep(spec: GroupActionSpec) -> AdjointRep:
    """Adjoint representation from the induced action on the generators.

    Each generator's components are evaluated at the transformed point and
    pushed back through the inverse-transpose Jacobian of the base action;
    the result is re-expressed in the generator basis by matching polynomial
    coefficients in the base variables (a linear solve over the parameters).
    """
    ctx = spec.ctx
    base_vars = list(ctx.independents + ctx.dependents)
    n = len(base_vars)
    jac = sp.Matrix(n, n, lambda i, k: sp.diff((spec.x_action + spec.u_action)[i], base_vars[k]))
    jac_inv = jac.inv().applyfunc(normal_form)
    gen = _base_generators(spec)
    point = {v: (spec.x_action + spec.u_action)[i] for i, v in enumerate(base_vars)}
    transformed = sp.zeros(spec.r, n)
    for j in range(spec.r):
        moved = sp.Matrix([[gen[j, i].xreplace(point) for i in range(n)]])
        # row vector times M^{-T}: (moved * jac_inv^T) since (M^{-T})^T = M^{-1}
        pushed = moved * jac_inv.T
        for i in range(n):
            transformed[j, i] = normal_form(pushed[0, i])

    monomials: list = []
    coeff_rows = {}
    for label, mat in (("g", gen), ("t", transformed)):
        for j in range(mat.rows):
            for i in range(mat.cols):
                poly = sp.Poly(mat[j, i], *base_vars) if mat[j, i] != 0 else None
                coeff_rows[(label, j, i)] = poly
                if poly is not None:
                    for m in poly.monoms():
                        if m not in monomials:
                            monomials.append(m)
    monomials.sort()

    def stack(label, rows):
        out = sp.zeros(rows, n * len(monomials))
        for j in range(rows):
            col = 0
            for i in range(n):
                poly = coeff_rows[(label, j, i)]
                for mi, m in enumerate(monomials):
                    if poly is not None:
                        out[j, col + mi] = poly.coeff_monomial(m)
                col += len(monomials)
        return out

    G = stack("g", spec.r)
    T = stack("t", spec.r)
    gram = G * G.T
    if gram.det() == 0:
        raise GeneratorsNotIndependent("generators are linearly dependent")
    ad = (T * G.T) * gram.inv()
    ad = ad.applyfunc(normal_form)
    residual = (ad * G - T).applyfunc(normal_form)
    if any(entry != 0 for entry in residual):
        raise GeneratorsNotIndependent("transformed generators leave the span of the basis")
    return AdjointRep(spec, ad)
