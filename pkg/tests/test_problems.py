"""Problem-file parsing: expression grammar, schema validation, jet atoms."""

import pytest
import sympy as sp

from nframes.problems import ExprParser, ParseError, build_problem, parse_tasks


def minimal(**over):
    data = {
        "variables": {"independent": ["x", "y"], "dependent": ["u"]},
        "group": {
            "params": ["a", "b", "c"],
            "identity": [1, 0, 0],
            "x_action": ["a*x + b*y", "c*x + ((1 + b*c)/a)*y"],
            "u_action": ["u"],
        },
        "tasks": [],
    }
    data.update(over)
    return data


def test_expression_grammar(monge_ampere):
    pf = monge_ampere.problem
    e = pf.parse_expr("u*(u_xx*u_yy - u_xy^2)")
    uxx = monge_ampere.jet("u", "x", "x")
    uyy = monge_ampere.jet("u", "y", "y")
    uxy = monge_ampere.jet("u", "x", "y")
    u = pf.ctx.dependents[0]
    assert sp.simplify(e - u*(uxx*uyy - uxy**2)) == 0
    assert pf.parse_expr("2/4") == sp.Rational(1, 2)
    assert pf.parse_expr("u_x^(-2)") == monge_ampere.jet("u", "x")**-2
    assert pf.parse_expr("x**2") == pf.ctx.independents[0]**2
    assert pf.parse_expr("-x + +x") == 0


def test_jet_atom_longest_match(monge_ampere):
    """tau is multi-letter; u_xxtau resolves greedily against independents."""
    pf = monge_ampere.problem
    s = pf.parse_expr("u_xxtau")
    assert pf.ctx.jet_key(s) == (0, (2, 0, 1))


def test_parse_error_position(monge_ampere):
    pf = monge_ampere.problem
    with pytest.raises(ParseError) as err:
        pf.parse_expr("u_x + $")
    assert "position 6" in str(err.value)
    with pytest.raises(ParseError):
        pf.parse_expr("nosuchname + 1")
    with pytest.raises(ParseError):
        pf.parse_expr("u_x u_y")


def test_unknown_keys_rejected():
    with pytest.raises(ParseError):
        build_problem(minimal(extra_section={}))
    bad = minimal()
    bad["variables"]["typo_key"] = 1
    with pytest.raises(ParseError):
        build_problem(bad)
    bad2 = minimal()
    bad2["group"]["handedness"] = "left"
    with pytest.raises(ParseError):
        build_problem(bad2)


def test_task_parsing():
    assert parse_tasks(["frame", "invariants 2"]) == [("frame", None), ("invariants", 2)]
    with pytest.raises(ParseError):
        parse_tasks(["invariants"])
    with pytest.raises(ParseError):
        parse_tasks(["plot"])
    with pytest.raises(ParseError):
        parse_tasks(["frame now"])


def test_normalization_equation_syntax():
    data = minimal(normalization={"equations": ["x = 1", "y = 0", "u_y = 0"]})
    pf = build_problem(data)
    assert len(pf.norm.equations) == 3
    assert pf.norm.equations[0][1] == 1
    bad = minimal(normalization={"equations": ["x  1", "y = 0", "u_y = 0"]})
    with pytest.raises(ParseError):
        build_problem(bad)


def test_identity_length_checked():
    bad = minimal()
    bad["group"]["identity"] = [1, 0]
    with pytest.raises(ParseError):
        build_problem(bad)


def test_opaque_function_declaration():
    data = minimal()
    data["variables"]["functions"] = {"Ff": 2}
    data["lagrangian"] = {"density": "Ff(u, u_x)"}
    pf = build_problem(data)
    assert pf.density.func.__name__ == "Ff"
    with pytest.raises(ParseError):
        pf.parse_expr("Gg(u)")
