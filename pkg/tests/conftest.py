from __future__ import annotations

import math
import os
import sys
from fractions import Fraction

import numpy as np
import pytest
import sympy
from scipy.integrate import quad

sys.path.insert(0, os.path.dirname(__file__))

from liouvillekit.exprcore import IrrationalBasis, parse_expr
from liouvillekit.geometry import PoissonBivector, Structure2Form, hamiltonian_vf_2form, hamiltonian_vf_poisson
from liouvillekit.torusflow import SystemSpec, build_chart

SQRT2 = "1.41421356237309504880168872420969807856967187537694"
B2 = IrrationalBasis({"s2": SQRT2})


def make_oscillators(x0=(1.0, 0.0, 0.8, 0.0)):
    c = ["x1", "y1", "x2", "y2"]
    P = lambda s: parse_expr(s, c, B2)
    w = Structure2Form(4, {(0, 1): P("1"), (2, 3): P("1")}, B2)
    H1 = P("(x1^2+y1^2)/2")
    H2 = P("s2*(x2^2+y2^2)/2")
    X1 = hamiltonian_vf_2form(w, H1, basis=B2).field
    X2 = hamiltonian_vf_2form(w, H2, basis=B2).field
    return SystemSpec(tuple(c), (X1, X2), (H1, H2), (H1, H2), w, B2), np.array(x0), P


def make_pendulum():
    c = ["q", "p"]
    P = lambda s: parse_expr(s, c)
    w = Structure2Form(2, {(1, 0): P("1")})  # dp ∧ dq
    H = P("p^2/2 - cos(q)")
    X = hamiltonian_vf_2form(w, H).field
    return SystemSpec(tuple(c), (X,), (H,), (H,), w), P


def make_product(x0=(0.0, 1.0, 0.7, 0.0)):
    """Pendulum × oscillator on (q, p, x, y) with ω = dp∧dq + dx∧dy."""
    c = ["q", "p", "x", "y"]
    P = lambda s: parse_expr(s, c)
    w = Structure2Form(4, {(1, 0): P("1"), (2, 3): P("1")})
    H1 = P("p^2/2 - cos(q)")
    H2 = P("(x^2+y^2)/2")
    X1 = hamiltonian_vf_2form(w, H1).field
    X2 = hamiltonian_vf_2form(w, H2).field
    return SystemSpec(tuple(c), (X1, X2), (H1, H2), (H1, H2), w), np.array(x0), P


def make_single_oscillator():
    c = ["x", "y"]
    P = lambda s: parse_expr(s, c)
    w = Structure2Form(2, {(0, 1): P("1")})
    H = P("(x^2+y^2)/2")
    X = hamiltonian_vf_2form(w, H).field
    return SystemSpec(tuple(c), (X,), (H,), (H,), w), P


def make_poisson_cylinder():
    """Π = ∂x∧∂y on (x, y, c); c is a Casimir and sets the frequency."""
    c = ["x", "y", "c"]
    P = lambda s: parse_expr(s, c)
    pi = PoissonBivector(3, {(0, 1): P("1")})
    H = P("(1+c^2)*(x^2+y^2)/2")
    X = hamiltonian_vf_poisson(pi, H)
    return SystemSpec(tuple(c), (X,), (H, P("c")), (H,), pi), np.array([1.0, 0.0, 0.5]), P


def pendulum_period(E: float) -> float:
    """Oracle: T(E) = ∮ dq/p by adaptive quadrature (substitution removes the endpoint singularity)."""
    qm = math.acos(-E)
    k = math.sin(qm / 2)
    # q = 2 asin(k sin u): dq/p = du / sqrt(1 - k^2 sin^2 u)
    val, _ = quad(lambda u: 1.0 / math.sqrt(1 - (k * math.sin(u)) ** 2), 0, math.pi / 2, epsabs=0.0, epsrel=1e-13, limit=200)
    return 4 * val


def pendulum_area(E: float) -> float:
    """Oracle: ∮ p dq over the libration curve at energy E."""
    qm = math.acos(-E)
    val, _ = quad(lambda q: math.sqrt(max(2 * (E + math.cos(q)), 0.0)), -qm, qm, epsabs=0.0, epsrel=1e-13, limit=400)
    return 2 * val


def birkhoff_oracle(cubic: str) -> dict[tuple[int, int], Fraction]:
    """Normal form of (x^2+y^2)/2 + cubic through degree 4, from scratch in sympy.

    One Lie step with {x, y} = 1 removes the cubic; its quartic image
    {χ,H3} + 1/2 {χ,{χ,H2}} = 1/2 {χ,H3} is averaged over the H2 circles.
    """
    x, y, phi, r = sympy.symbols("x y phi r", real=True)
    br = lambda f, g: sympy.expand(sympy.diff(f, x) * sympy.diff(g, y) - sympy.diff(f, y) * sympy.diff(g, x))
    H2 = (x**2 + y**2) / 2
    H3 = sympy.sympify(cubic, locals={"x": x, "y": y})
    a = sympy.symbols("a0:4")
    chi = a[0] * x**3 + a[1] * x**2 * y + a[2] * x * y**2 + a[3] * y**3
    sol = sympy.solve(sympy.Poly(br(chi, H2) + H3, x, y).coeffs(), a, dict=True)[0]
    chi = chi.subs(sol)
    H4 = br(chi, H3) / 2
    avg = sympy.integrate(H4.subs({x: r * sympy.cos(phi), y: r * sympy.sin(phi)}), (phi, 0, 2 * sympy.pi)) / (2 * sympy.pi)
    c4 = sympy.Rational(sympy.simplify(avg / r**4))  # avg = c4 r^4 = c4 (x^2 + y^2)^2
    nf = sympy.Poly(H2 + c4 * (x**2 + y**2) ** 2, x, y)
    return {k: Fraction(int(v.p), int(v.q)) for k, v in zip(nf.monoms(), nf.coeffs())}


@pytest.fixture(scope="session")
def oscillators():
    spec, x0, P = make_oscillators()
    return spec, build_chart(spec, x0), P


@pytest.fixture(scope="session")
def pendulum():
    return make_pendulum()


@pytest.fixture(scope="session")
def product():
    spec, x0, P = make_product()
    return spec, build_chart(spec, x0), P


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "CRITERIA", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
