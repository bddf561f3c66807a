"""Shared worked examples, built once per session from the bundled problem files."""

import importlib.resources

import pytest
import sympy as sp

from nframes.groupaction import GroupActionSpec, adjoint_rep
from nframes.jetspace import multi_index
from nframes.movingframe import solve_frame
from nframes.noether import Lagrangian, noether_laws, structured_laws
from nframes.problems import build_problem, load_problem
from nframes.symcore import Sym

FIXDIR = importlib.resources.files("nframes") / "fixtures"


def random_expr(rng, atoms, depth=3):
    if depth == 0 or rng.random() < 0.3:
        choice = rng.randrange(3)
        if choice == 0:
            return sp.Rational(rng.randint(-6, 6), rng.randint(1, 6))
        return atoms[rng.randrange(len(atoms))]
    op = rng.randrange(4)
    lhs = random_expr(rng, atoms, depth - 1)
    rhs = random_expr(rng, atoms, depth - 1)
    if op == 0:
        return lhs + rhs
    if op == 1:
        return lhs * rhs
    if op == 2:
        return lhs - rhs
    return lhs ** rng.randint(1, 3)



def _load(name):
    return load_problem(str(FIXDIR / name))


class Example:
    """A worked example with everything computed lazily and cached."""

    def __init__(self, problem):
        self.problem = problem
        self.ctx = problem.ctx
        self.spec = problem.spec
        self._cache = {}

    def jet(self, dep, *letters):
        return self.ctx.jet(self.ctx.dependent_index(dep), multi_index(self.ctx, *letters))

    def _get(self, key, thunk):
        if key not in self._cache:
            self._cache[key] = thunk()
        return self._cache[key]

    @property
    def frame(self):
        return self._get("frame", lambda: solve_frame(
            self.spec, self.problem.norm, candidate=self.problem.frame_candidate,
            elimination=self.problem.elimination))

    @property
    def adrep(self):
        return self._get("adrep", lambda: adjoint_rep(self.spec))

    @property
    def lagrangian(self):
        return self._get("lagrangian", lambda: Lagrangian(self.spec, self.problem.density))

    @property
    def laws(self):
        return self._get("laws", lambda: noether_laws(self.lagrangian))

    @property
    def bundle(self):
        return self._get("bundle", lambda: structured_laws(
            self.lagrangian, self.frame, adrep=self.adrep, C=self.laws))


@pytest.fixture(scope="session")
def sl2_linear():
    """SL(2) linear action on (x, y, u), no dummy variable."""
    return Example(_load("sl2_linear.toml"))


@pytest.fixture(scope="session")
def monge_ampere():
    """SL(2) linear action with dummy tau and the Monge-Ampere density."""
    return Example(_load("sl2_linear_monge_ampere.toml"))


@pytest.fixture(scope="session")
def shallow_water():
    return Example(_load("shallow_water.toml"))


@pytest.fixture(scope="session")
def sl3():
    return Example(_load("sl3_linear.toml"))


@pytest.fixture(scope="session")
def projective():
    """Projective SL(2) in the rational (t0, m0, n0) chart."""
    return Example(_load("sl2_projective.toml"))


@pytest.fixture(scope="session")
def projective_abc():
    """Projective SL(2) in the paper's (a, b, c) chart with d = (1 + bc)/a.

    The frame is irrational in this chart (see the rational-chart fixture);
    laws, adjoint representation, and equivariance all live here.
    """
    data = {
        "title": "projective sl2, (a,b,c) chart",
        "variables": {"independent": ["x"], "dependent": ["u"]},
        "group": {
            "params": ["pa", "pb", "pc"],
            "identity": [1, 0, 0],
            "x_action": ["(pa*x + pb)/(pc*x + (1 + pb*pc)/pa)"],
            "u_action": ["u"],
            "composition": [
                "pa1*pa2 + pb1*pc2",
                "pa1*pb2 + pb1*(1 + pb2*pc2)/pa2",
                "pc1*pa2 + ((1 + pb1*pc1)/pa1)*pc2",
            ],
            "inverse": ["(1 + pb*pc)/pa", "-pb", "-pc"],
        },
        "lagrangian": {"density": "(2*u_xxx*u_x - 3*u_xx^2)^2/(4*u_x^7)"},
        "tasks": [],
    }
    return Example(build_problem(data))
