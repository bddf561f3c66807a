"""Invariant operators, corrections, commutators, forms, syzygies."""

import itertools
import random

import pytest
import sympy as sp

from conftest import random_expr
from nframes.invariantcalc import (DiffForm, OperatorPoly, RewriteNotTerminating,
                                   commutator_tensor, correction_matrix,
                                   invariant_derivative, invariant_one_forms,
                                   invariant_operators, lie_derivative_form, one_form,
                                   syzygy, to_invariant_basis)
from nframes.jetspace import multi_index
from nframes.movingframe import is_invariant
from nframes.symcore import is_zero, normal_form


def test_operators_sl2_linear(monge_ampere):
    ex = monge_ampere
    x, y = ex.ctx.independents[0], ex.ctx.independents[1]
    ux, uy = ex.jet("u", "x"), ex.jet("u", "y")
    w = x*ux + y*uy
    Dx, Dy, Dt = invariant_operators(ex.frame)
    assert [normal_form(c) for c in Dx.coeffs] == [x, y, 0]
    assert [normal_form(c - e) for c, e in zip(Dy.coeffs, (-uy/w, ux/w, 0))] == [0, 0, 0]
    assert list(Dt.coeffs) == [0, 0, 1]


def test_operator_projective(projective):
    ops = invariant_operators(projective.frame)
    assert normal_form(ops[0].coeffs[0] - 1/projective.jet("u", "x")) == 0


def test_invariant_derivative_examples(monge_ampere):
    ex = monge_ampere
    ops = invariant_operators(ex.frame)
    K1 = multi_index(ex.ctx, "x")
    d, m = invariant_derivative(ex.frame, 0, K1, 0, ops)
    # D_x I^u_1 = I^u_11 + I^u_1
    assert is_zero(m - ex.frame.invariantize(ex.jet("u", "x")))
    assert is_zero(ops[1](ex.frame.invariantize(ex.ctx.dependents[0])))  # D_y(u) = 0


def test_invariant_derivative_direct_oracle(monge_ampere):
    """M^u_{12,x} by the definition: D_x I^u_12 minus I^u_112, frame route."""
    ex = monge_ampere
    ops = invariant_operators(ex.frame)
    K = multi_index(ex.ctx, "x", "y")
    got, m = invariant_derivative(ex.frame, 0, K, 0, ops)
    oracle = normal_form(
        ops[0](ex.frame.invariantize(ex.jet("u", "x", "y")))
        - ex.frame.invariantize(ex.jet("u", "x", "x", "y")))
    assert is_zero(m - oracle)


def test_correction_matrix_identities(monge_ampere):
    """N and M from the K-matrix match the direct frame-substitution route."""
    ex = monge_ampere
    corr = correction_matrix(ex.frame)
    ops = invariant_operators(ex.frame)
    # phantom rows: D_j J^x with J^x = 1 gives N_{x j} = -delta_{x j}
    jx = ex.frame.inv_coordinate(ex.ctx.independents[0])
    assert jx == 1
    for j in range(3):
        n = corr.N(0, j)
        direct = normal_form(ops[j](jx) - (1 if j == 0 else 0))
        assert is_zero(n - direct)
    # M = K phi(I) against the direct correction, a few slots
    for K, j in [((1, 0, 0), 1), ((0, 1, 0), 0), ((1, 1, 0), 2)]:
        _, m_direct = invariant_derivative(ex.frame, 0, K, j, ops)
        assert is_zero(corr.M(0, K, j) - m_direct)


def test_correction_projective_operator(projective):
    """1D projective: D_x sigma via the operator equals (1/u_x) D sigma."""
    ex = projective
    ux = ex.jet("u", "x")
    sigma = ex.frame.invariantize(ex.jet("u", "x", "x", "x"))
    ops = invariant_operators(ex.frame)
    direct = normal_form(ex.ctx.total_derivative(sigma, 0)/ux)
    assert is_zero(ops[0](sigma) - direct)


def test_commutators_single_operator_vanish(projective):
    tensor = commutator_tensor(projective.frame)
    assert all(v == 0 for v in tensor.A.values())


def test_commutator_antisymmetry_and_dummy_row(monge_ampere):
    ex = monge_ampere
    tensor = commutator_tensor(ex.frame, cross_check=False)
    n = ex.ctx.n_independents
    tau = ex.ctx.dummy_index
    for k, i, j in itertools.product(range(n), repeat=3):
        assert is_zero(tensor.entry(k, i, j) + tensor.entry(k, j, i))
    # A^tau_{tau, k} = 0 when the dummy is invariant
    for k in range(n):
        assert is_zero(tensor.entry(tau, tau, k))


def test_commutator_cross_check_sl2(monge_ampere):
    commutator_tensor(monge_ampere.frame, cross_check=True)


def test_dual_basis(monge_ampere):
    """V_i interior I(dx_j) = delta_ij, symbolically."""
    ex = monge_ampere
    forms = invariant_one_forms(ex.frame)
    jt = ex.frame.inv_jacobian_T()
    n = ex.ctx.n_independents
    for i in range(n):
        coeffs = [jt[i, k] for k in range(n)]
        for j in range(n):
            inner = forms[j].interior(coeffs)
            got = inner.terms.get((), 0)
            assert is_zero(got - (1 if i == j else 0))


def test_invariant_one_forms_display(monge_ampere):
    ex = monge_ampere
    x, y = ex.ctx.independents[0], ex.ctx.independents[1]
    ux, uy = ex.jet("u", "x"), ex.jet("u", "y")
    w = x*ux + y*uy
    forms = invariant_one_forms(ex.frame)
    assert is_zero(forms[0].coeff((0,)) - ux/w)
    assert is_zero(forms[0].coeff((1,)) - uy/w)
    assert is_zero(forms[1].coeff((0,)) + y)
    assert is_zero(forms[1].coeff((1,)) - x)
    # I(dtau) = dtau
    assert forms[2].coeff((2,)) == 1 and forms[2].coeff((0,)) == 0


def test_identity_action_forms():
    """Identity-like action: I(dx_i) = dx_i."""
    from nframes.groupaction import GroupActionSpec
    from nframes.jetspace import JetContext
    from nframes.movingframe import NormalizationSpec, solve_frame
    from nframes.symcore import Sym
    ctx = JetContext(["xf"], ["uf"])
    s = Sym("sfp", "group-param")
    spec = GroupActionSpec(ctx=ctx, params=(s,), identity={s: sp.Integer(0)},
                           x_action=(ctx.independents[0] + s,),
                           u_action=(ctx.dependents[0],))
    frame = solve_frame(spec, NormalizationSpec(((ctx.independents[0], 0),)))
    forms = invariant_one_forms(frame)
    assert forms[0].coeff((0,)) == 1


def test_lie_derivative_table(monge_ampere):
    """Every cell of the Lie-derivative table for the linear action with tau."""
    ex = monge_ampere
    frame = ex.frame
    forms = invariant_one_forms(frame)
    Iu1 = frame.isym(0, multi_index(ex.ctx, "x"))
    Iu12 = frame.isym(0, multi_index(ex.ctx, "x", "y"))
    Iu23 = frame.isym(0, multi_index(ex.ctx, "y", "tau"))
    expected = {
        (0, 0): [0, Iu12/Iu1, 0],
        (0, 1): [0, 2, 0],
        (0, 2): [0, 0, 0],
        (1, 0): [-Iu12/Iu1, 0, -Iu23/Iu1],
        (1, 1): [-2, 0, 0],
        (1, 2): [0, 0, 0],
        (2, 0): [0, Iu23/Iu1, 0],
        (2, 1): [0, 0, 0],
        (2, 2): [0, 0, 0],
    }
    for (i, j), want in expected.items():
        ld = lie_derivative_form(frame, i, forms[j])
        got = [frame.to_isymbols(e) for e in to_invariant_basis(frame, ld)]
        assert all(normal_form(g - w) == 0 for g, w in zip(got, want)), (i, j, got)


def test_lie_derivative_matches_commutator_transpose(monge_ampere):
    """B^a_{bc} = A^c_{ab} entrywise (the operator-form duality)."""
    ex = monge_ampere
    frame = ex.frame
    tensor = commutator_tensor(frame, cross_check=False)
    forms = invariant_one_forms(frame)
    n = ex.ctx.n_independents
    for b in range(n):
        for c in range(n):
            ld = lie_derivative_form(frame, b, forms[c])
            coeffs = to_invariant_basis(frame, ld)
            for a in range(n):
                assert is_zero(coeffs[a] - tensor.entry(c, a, b))


def test_exterior_derivative_decomposition(monge_ampere):
    """df = sum_i D_i(f) I(dx_i) for random f."""
    ex = monge_ampere
    frame = ex.frame
    ops = invariant_operators(frame)
    forms = invariant_one_forms(frame)
    rng = random.Random(3)
    atoms = [ex.ctx.independents[0], ex.ctx.dependents[0], ex.jet("u", "x"),
             ex.jet("u", "y")]
    for _ in range(3):
        f = random_expr(rng, atoms, depth=2)
        df = DiffForm(ex.ctx, {(): f}).d()
        rhs = DiffForm(ex.ctx)
        for i in range(ex.ctx.n_independents):
            rhs = rhs + forms[i].scale(ops[i](f))
        assert (df - rhs).is_zero_form()


def test_last_term_drops(monge_ampere):
    """D_i(I(dtau)) = 0 for every operator when tau is invariant."""
    ex = monge_ampere
    forms = invariant_one_forms(ex.frame)
    tau = ex.ctx.dummy_index
    for i in range(ex.ctx.n_independents):
        assert lie_derivative_form(ex.frame, i, forms[tau]).is_zero_form()


def test_dummy_commutator_recursion_identity(monge_ampere):
    """D_tau D_K f = (D_K D_tau + sum_l D_{K_l}(A^n D_n) D_{K rest}) f, |K| <= 3."""
    ex = monge_ampere
    frame = ex.frame
    ops = invariant_operators(frame)
    tensor = commutator_tensor(frame, cross_check=False)
    tau = ex.ctx.dummy_index
    rng = random.Random(8)
    atoms = [ex.ctx.dependents[0], ex.jet("u", "x"), ex.jet("u", "y")]

    def word_apply(word, e):
        for i in reversed(word):
            e = ops[i](e)
        return e

    for word in [(0,), (0, 1), (1, 0, 0)]:
        f = random_expr(rng, atoms, depth=1)
        lhs = ops[tau](word_apply(word, f))
        rhs = word_apply(word, ops[tau](f))
        m = len(word)
        for ell in range(m):
            prefix, k_ell, rest = word[:ell], word[ell], word[ell + 1:]
            inner = sp.Integer(0)
            for n_idx in range(ex.ctx.n_independents):
                coeff = tensor.entry(n_idx, tau, k_ell)
                if coeff == 0:
                    continue
                inner += coeff * ops[n_idx](word_apply(rest, f))
            rhs += word_apply(prefix, inner)
        assert is_zero(normal_form(lhs - rhs)), word


def test_syzygy_extraction_matches_paper(monge_ampere):
    ex = monge_ampere
    frame = ex.frame
    inv = frame.invariantize
    Iu11 = inv(ex.jet("u", "x", "x"))
    Iu22 = inv(ex.jet("u", "y", "y"))
    rows = syzygy(frame, [Iu11, Iu22])
    Iu1s = frame.isym(0, multi_index(ex.ctx, "x"))
    Iu12s = frame.isym(0, multi_index(ex.ctx, "x", "y"))
    Iu22s = frame.isym(0, multi_index(ex.ctx, "y", "y"))
    got11 = {(w, a): c for c, w, a in [(frame.to_isymbols(c), w, a)
                                       for c, w, a in rows[0].terms]}
    assert normal_form(got11[((0, 0), 0)] - 1) == 0
    assert normal_form(got11[((0,), 0)] + 1) == 0
    got22 = {(w, a): c for c, w, a in [(frame.to_isymbols(c), w, a)
                                       for c, w, a in rows[1].terms]}
    assert normal_form(got22[((1, 1), 0)] - 1) == 0
    assert normal_form(got22[((1,), 0)] + 2*Iu12s/Iu1s) == 0
    assert normal_form(got22[((0,), 0)] - Iu22s/Iu1s) == 0


def test_syzygy_rejects_malformed_generator(monge_ampere):
    # a generator already first order in the dummy variable cannot close:
    # its dummy derivative is second order in tau, outside every word image
    bad = monge_ampere.jet("u", "tau")
    with pytest.raises(RewriteNotTerminating):
        syzygy(monge_ampere.frame, [bad], max_extra=0)


def test_diffform_algebra(monge_ampere):
    ctx = monge_ampere.ctx
    x = ctx.independents[0]
    u = ctx.dependents[0]
    ux = monge_ampere.jet("u", "x")
    dx = one_form(ctx, [1, 0, 0])
    dy = one_form(ctx, [0, 1, 0])
    assert (dx.wedge(dy) + dy.wedge(dx)).is_zero_form()
    assert dx.wedge(dx).is_zero_form()
    w = DiffForm(ctx, {(0,): u*ux, (1,): x**2})
    assert w.d().d().is_zero_form()
    # interior product is a graded derivation against the wedge
    inner = w.wedge(dy).interior([1, 0, 0])
    expected = dy.scale(w.coeff((0,)))
    assert (inner - expected).is_zero_form()
