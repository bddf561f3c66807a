"""Invariant differential operators, forms, correction terms, commutators, syzygies.

The invariant operators are the transformed total derivatives evaluated at the
frame.  Everything here is computed directly from the explicit frame by
substitution; the correction-matrix route of the error-term theorem is kept as
a redundant cross-check because it catches sign mistakes cheaply.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import sympy as sp

from .jetspace import JetContext, MultiIndex, mi_add, mi_order, TotalVectorField
from .movingframe import Frame
from .symcore import Expr, is_zero, normal_form


class BasisSolveFailed(ValueError):
    """The invariant operators are not independent at the frame."""


class RewriteNotTerminating(ValueError):
    """Syzygy extraction did not close within the word-length bound."""


def true_independent_indices(ctx: JetContext) -> list[int]:
    """Indices of the independents the variational problem runs over (dummy excluded)."""
    return [i for i in range(ctx.n_independents) if i != ctx.dummy_index]


@dataclass(frozen=True)
class InvOperator:
    """An invariant total differentiation operator in the D-basis."""

    name: str
    field: TotalVectorField

    def __call__(self, e: Expr) -> Expr:
        return self.field(e)

    @property
    def coeffs(self):
        return self.field.coeffs


def invariant_operators(frame: Frame) -> list[InvOperator]:
    """D_i = D~_i|_{g=rho(z)}: rows of the inverse-transpose frame Jacobian."""
    ctx = frame.ctx
    jt = frame.inv_jacobian_T()
    ops = []
    for i in range(ctx.n_independents):
        coeffs = tuple(jt[i, k] for k in range(ctx.n_independents))
        ops.append(InvOperator(f"D{ctx.independents[i]}", TotalVectorField(ctx, coeffs)))
    return ops


def invariant_derivative(frame: Frame, alpha: int, K: MultiIndex, j: int,
                         ops: Sequence[InvOperator] | None = None) -> tuple:
    """(D_j I^a_K, correction M^a_{Kj} = D_j I^a_K - I^a_{Kj})."""
    ops = ops or invariant_operators(frame)
    ik = frame.invariantize(frame.ctx.jet(alpha, K))
    dik = ops[j](ik)
    m = normal_form(dik - frame.invariantize(frame.ctx.jet(alpha, mi_add(K, j))))
    return dik, m


# -- correction matrix and commutators --------------------------------------------


@dataclass
class CorrectionData:
    """Correction matrix K_{j,l} with the N and M tables it generates."""

    frame: Frame
    K: sp.Matrix          # (n_indep) x r
    Xi: dict              # (k, l, i) -> invariantized derivative of xi^k_l
    vf: object = None     # infinitesimals of the action, cached

    def _infinitesimals(self, order: int):
        from .groupaction import infinitesimals
        if self.vf is None or order > 0:
            self.vf = infinitesimals(self.frame.spec, order)
        return self.vf

    def N(self, i: int, j: int) -> Expr:
        vf = self._infinitesimals(0)
        row = [self.K[j, l] * self.frame.invariantize(vf.xi[l][i])
               for l in range(self.frame.spec.r)]
        return normal_form(sp.Add(*row))

    def M(self, alpha: int, K: MultiIndex, j: int) -> Expr:
        vf = self._infinitesimals(mi_order(K))
        terms = [self.K[j, l] * self.frame.invariantize(vf.phi[l][(alpha, tuple(K))])
                 for l in range(self.frame.spec.r)]
        return normal_form(sp.Add(*terms))


def correction_matrix(frame: Frame) -> CorrectionData:
    """K_{j,l} = D~_j rho_l(g.z)|_{g=rho(z)}, plus the invariantized Xi tensor.

    Transformed total derivatives obey D~_j(F o g) = (D_j F) o g (that is what
    prolongation means), so evaluating at the frame turns both tables into
    invariantizations of plain total derivatives: K_{j,l} = I(D_j rho_l) and
    Xi^k_{l,i} = I(D_i xi^k_l).
    """
    from .groupaction import infinitesimals

    spec = frame.spec
    ctx = frame.ctx
    n = ctx.n_independents
    kmat = sp.Matrix(n, spec.r, lambda j, l: frame.invariantize(
        ctx.total_derivative(frame.rho[spec.params[l]], j)))
    vf = infinitesimals(spec, 0)
    xi_t = {}
    for k in range(n):
        for l in range(spec.r):
            for i in range(n):
                xi_t[(k, l, i)] = frame.invariantize(ctx.total_derivative(vf.xi[l][k], i))
    return CorrectionData(frame, kmat, xi_t, vf)


@dataclass
class CommutatorTensor:
    """A^k_{ij} with [D_i, D_j] = sum_k A^k_{ij} D_k."""

    frame: Frame
    A: dict  # (k, i, j) -> Expr

    def entry(self, k: int, i: int, j: int) -> Expr:
        return self.A[(k, i, j)]

    def bracket_coeffs(self, i: int, j: int) -> list:
        n = self.frame.ctx.n_independents
        return [self.A[(k, i, j)] for k in range(n)]


def commutator_tensor(frame: Frame, corr: CorrectionData | None = None,
                      cross_check: bool = True) -> CommutatorTensor:
    """Commutators by direct bracket expansion, cross-checked against K.Xi formula."""
    ctx = frame.ctx
    n = ctx.n_independents
    f = frame.inv_jacobian_T()
    if is_zero(normal_form(f.det())):
        raise BasisSolveFailed("invariant operators are dependent at the frame")
    finv = frame.jacobian().T  # inverse of J^{-T}
    A: dict = {}
    for i in range(n):
        for j in range(i + 1, n):
            cvec = sp.zeros(1, n)
            for b in range(n):
                acc = sp.Integer(0)
                for a in range(n):
                    acc += f[i, a] * ctx.total_derivative(f[j, b], a)
                    acc -= f[j, a] * ctx.total_derivative(f[i, b], a)
                cvec[0, b] = acc
            arow = (cvec * finv).applyfunc(normal_form)
            for k in range(n):
                A[(k, i, j)] = arow[0, k]
                A[(k, j, i)] = normal_form(-arow[0, k])
        A.update({(k, i, i): sp.Integer(0) for k in range(n)})
    tensor = CommutatorTensor(frame, A)
    if cross_check:
        corr = corr or correction_matrix(frame)
        r = frame.spec.r
        for k, i, j in itertools.product(range(n), range(n), range(n)):
            formula = sp.Add(*[corr.K[j, l] * corr.Xi[(k, l, i)]
                               - corr.K[i, l] * corr.Xi[(k, l, j)] for l in range(r)])
            if not is_zero(normal_form(formula - A[(k, i, j)])):
                raise BasisSolveFailed(
                    f"commutator cross-check failed at A^{k}_{{{i}{j}}}")
    return tensor


# -- differential forms ------------------------------------------------------------


class DiffForm:
    """Exterior-algebra element over the dx basis with expression coefficients.

    Terms are stored on strictly increasing index tuples; the exterior
    derivative uses total derivatives, so d(d(w)) = 0 because total
    derivatives commute.
    """

    def __init__(self, ctx: JetContext, terms: dict | None = None):
        self.ctx = ctx
        self.terms = {}
        for idx, c in (terms or {}).items():
            self._accumulate(tuple(idx), sp.sympify(c))
        self._clean()

    def _accumulate(self, idx: tuple, c: Expr) -> None:
        if len(set(idx)) != len(idx):
            return
        perm = tuple(sorted(range(len(idx)), key=lambda q: idx[q]))
        sign = sp.Integer(1)
        seq = list(idx)
        # parity of the sorting permutation
        seen = [False] * len(perm)
        for s in range(len(perm)):
            if seen[s]:
                continue
            length = 0
            t = s
            while not seen[t]:
                seen[t] = True
                t = perm[t]
                length += 1
            if length % 2 == 0:
                sign = -sign
        key = tuple(sorted(seq))
        self.terms[key] = self.terms.get(key, sp.Integer(0)) + sign * c

    def _clean(self) -> None:
        # syntactic zeros only; callers normal-form coefficients where the
        # presentation matters, zero tests go through is_zero_form
        self.terms = {k: v for k, v in self.terms.items() if v != 0}

    def simplified(self) -> "DiffForm":
        out = DiffForm(self.ctx)
        out.terms = {k: normal_form(v) for k, v in self.terms.items()}
        out._clean()
        return out

    @property
    def degree(self) -> int:
        return len(next(iter(self.terms))) if self.terms else 0

    def __add__(self, other: "DiffForm") -> "DiffForm":
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, sp.Integer(0)) + v
        return DiffForm(self.ctx, out)

    def __sub__(self, other: "DiffForm") -> "DiffForm":
        return self + other.scale(-1)

    def scale(self, c) -> "DiffForm":
        return DiffForm(self.ctx, {k: c * v for k, v in self.terms.items()})

    def wedge(self, other: "DiffForm") -> "DiffForm":
        out = DiffForm(self.ctx)
        for k1, v1 in self.terms.items():
            for k2, v2 in other.terms.items():
                out._accumulate(k1 + k2, v1 * v2)
        out._clean()
        return out

    def d(self) -> "DiffForm":
        out = DiffForm(self.ctx)
        for k, v in self.terms.items():
            for i in range(self.ctx.n_independents):
                out._accumulate((i,) + k, self.ctx.total_derivative(v, i))
        out._clean()
        return out

    def interior(self, coeffs: Sequence) -> "DiffForm":
        """Interior product with the vector field sum_i coeffs[i] D_i."""
        out = DiffForm(self.ctx)
        for k, v in self.terms.items():
            for pos, i in enumerate(k):
                c = coeffs[i]
                if c != 0:
                    out._accumulate(k[:pos] + k[pos + 1:], sp.Integer(-1) ** pos * c * v)
        out._clean()
        return out

    def is_zero_form(self) -> bool:
        return all(is_zero(v) for v in self.terms.values())

    def coeff(self, idx: tuple) -> Expr:
        return self.terms.get(tuple(sorted(idx)), sp.Integer(0))

    def __repr__(self):
        if not self.terms:
            return "0"
        names = [str(s) for s in self.ctx.independents]
        bits = []
        for k in sorted(self.terms):
            basis = "^".join(f"d{names[i]}" for i in k) or "1"
            bits.append(f"({self.terms[k]})*{basis}" if k else f"({self.terms[k]})")
        return " + ".join(bits)


def one_form(ctx: JetContext, coeffs: Sequence) -> DiffForm:
    return DiffForm(ctx, {(i,): c for i, c in enumerate(coeffs)})


def invariant_one_forms(frame: Frame) -> list[DiffForm]:
    """I(dx_i) = dx~_i|_{g=rho(z)} = sum_j J_{ij} dx_j."""
    jac = frame.jacobian()
    return [one_form(frame.ctx, list(jac.row(i))) for i in range(frame.ctx.n_independents)]


def lie_derivative_form(frame: Frame, i: int, omega: DiffForm) -> DiffForm:
    """Cartan formula D_i(w) = d(V_i _| w) + V_i _| dw with V_i the operator vector."""
    coeffs = frame.inv_jacobian_T().row(i)
    inner = omega.interior(coeffs)
    return inner.d() + omega.d().interior(coeffs)


def to_invariant_basis(frame: Frame, omega: DiffForm) -> list:
    """Coefficients of a one-form in the I(dx_k) basis: b = J^{-T} c."""
    c = sp.Matrix([omega.coeff((j,)) for j in range(frame.ctx.n_independents)])
    b = frame.inv_jacobian_T() * c
    return [normal_form(e) for e in b]


# -- syzygies ----------------------------------------------------------------------


@dataclass
class OperatorPoly:
    """sum of coeff * D_word applied to I^alpha_tau, words normal-ordered ascending."""

    frame: Frame
    terms: list  # of (coeff Expr in jet coordinates, word tuple, alpha)

    def apply(self, ops: Sequence[InvOperator]) -> Expr:
        tau = self.frame.ctx.dummy_index
        total = sp.Integer(0)
        for coeff, word, alpha in self.terms:
            zero = (0,) * self.frame.ctx.n_independents
            arg = self.frame.invariantize(self.frame.ctx.jet(alpha, mi_add(zero, tau)))
            for w in reversed(word):
                arg = ops[w](arg)
            total += coeff * arg
        return normal_form(total)

    def display(self) -> list:
        """(coefficient in invariant symbols, word, dependent name) triples."""
        ctx = self.frame.ctx
        return [(self.frame.to_isymbols(c), tuple(str(ctx.independents[w]) for w in word),
                 str(ctx.dependents[a])) for c, word, a in self.terms]


def _tau_linear_coeffs(ctx: JetContext, e: Expr) -> tuple[dict, Expr]:
    """Coefficients of the jets first-order in the dummy variable; e must be linear."""
    tau = ctx.dummy_index
    num, den = sp.fraction(sp.together(e))
    tau_syms = sorted((s for s in num.free_symbols
                       if ctx.jet_key(s) is not None and ctx.jet_key(s)[1][tau] > 0),
                      key=sp.default_sort_key)
    coeffs = {}
    rest = num
    for s in tau_syms:
        p = sp.Poly(num, s)
        if p.degree() > 1:
            raise RewriteNotTerminating(f"not linear in {s}")
        coeffs[s] = normal_form(p.nth(1) / den)
        rest = rest - p.nth(1) * s
    return coeffs, normal_form(sp.expand(rest) / den)


def syzygy(frame: Frame, generators: Sequence[Expr],
           max_extra: int = 2) -> list[OperatorPoly]:
    """Express D_tau(kappa_j) as an operator polynomial applied to the I^alpha_tau.

    The extraction solves a linear system over the field of invariants:
    candidate words are the normal-ordered D-words up to the generator's
    order, the unknown coefficients are matched on the first-order dummy
    jets, and the result is verified exactly.
    """
    ctx = frame.ctx
    if ctx.dummy_index is None:
        raise ValueError("syzygy extraction needs a dummy invariant independent variable")
    tau = ctx.dummy_index
    ops = invariant_operators(frame)
    true_idx = true_independent_indices(ctx)
    zero = (0,) * ctx.n_independents
    targets = [frame.invariantize(ctx.jet(a, mi_add(zero, tau)))
               for a in range(len(ctx.dependents))]

    out = []
    for kappa in generators:
        kappa = normal_form(sp.sympify(kappa))
        src = ops[tau](kappa)
        base_len = max(ctx.max_jet_order(kappa), 1)
        solved = None
        for length in range(base_len, base_len + max_extra + 1):
            words = []
            for m in range(length + 1):
                words.extend(itertools.combinations_with_replacement(true_idx, m))
            basis = []
            for alpha in range(len(ctx.dependents)):
                for w in words:
                    expr = targets[alpha]
                    for q in reversed(w):
                        expr = ops[q](expr)
                    basis.append(((alpha, w), expr))
            solved = _solve_tau_linear(ctx, src, basis)
            if solved is not None:
                break
        if solved is None:
            raise RewriteNotTerminating(
                f"no operator-polynomial form for D_tau({kappa}) within bound")
        terms = [(c, w, a) for ((a, w), c) in solved if c != 0]
        poly = OperatorPoly(frame, terms)
        if not is_zero(normal_form(poly.apply(ops) - src)):
            raise RewriteNotTerminating("extracted operator polynomial failed verification")
        out.append(poly)
    return out


def _solve_tau_linear(ctx: JetContext, src: Expr, basis: list):
    """Solve src = sum c_b * basis_b by matching first-order dummy-jet coefficients."""
    src_c, src_rest = _tau_linear_coeffs(ctx, src)
    if not is_zero(src_rest):
        return None
    cols = []
    used = set(src_c)
    for _, expr in basis:
        c, rest = _tau_linear_coeffs(ctx, expr)
        if not is_zero(rest):
            return None
        cols.append(c)
        used |= set(c)
    rows = sorted(used, key=sp.default_sort_key)
    mat = sp.Matrix(len(rows), len(basis),
                    lambda r, b: cols[b].get(rows[r], sp.Integer(0)))
    rhs = sp.Matrix(len(rows), 1, lambda r, _: src_c.get(rows[r], sp.Integer(0)))
    sol = _exact_linsolve(mat, rhs)
    if sol is None:
        return None
    return [(basis[b][0], sol[b]) for b in range(len(basis))]


def _exact_linsolve(mat: sp.Matrix, rhs: sp.Matrix):
    """Gaussian elimination over the rational-function field; None if inconsistent."""
    m, n = mat.shape
    aug = [[normal_form(mat[r, c]) for c in range(n)] + [normal_form(rhs[r, 0])]
           for r in range(m)]
    pivots = []
    row = 0
    for col in range(n):
        piv = next((r for r in range(row, m)
                    if aug[r][col] != 0 and not is_zero(aug[r][col])), None)
        if piv is None:
            continue
        aug[row], aug[piv] = aug[piv], aug[row]
        scale = aug[row][col]
        aug[row] = [normal_form(v / scale) for v in aug[row]]
        for r in range(m):
            if r != row and aug[r][col] != 0:
                k = aug[r][col]
                aug[r] = [normal_form(v - k * w) for v, w in zip(aug[r], aug[row])]
        pivots.append(col)
        row += 1
        if row == m:
            break
    for r in range(row, m):
        if not is_zero(aug[r][n]):
            return None
    sol = [sp.Integer(0)] * n
    for r, col in enumerate(pivots):
        sol[col] = aug[r][n]
    # free columns default to zero; verify consistency of that choice
    residual = (mat * sp.Matrix(sol) - rhs).applyfunc(normal_form)
    if any(not is_zero(x) for x in residual):
        return None
    return sol
