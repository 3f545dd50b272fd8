from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from conftest import make_pendulum, make_poisson_cylinder, make_single_oscillator, pendulum_area, pendulum_period
from liouvillekit.actionangle import (
    ActionProfile,
    DimensionBoundViolated,
    ModeMismatch,
    PrimitiveMismatch,
    assemble_normal_form,
    check_dimension_bound,
    coaffine_chart,
    cycle_closure,
    isotropy_defect,
    leafwise_action,
    mineur_action,
    mineur_integral,
    restricted_rank,
    stencil_family,
    verify_action,
)
from liouvillekit.exprcore import parse_expr
from liouvillekit.geometry import Structure2Form, VectorFieldExpr, hamiltonian_vf_2form
from liouvillekit.torusflow import SystemSpec, build_chart


@pytest.fixture(scope="module")
def osc1():
    spec, P = make_single_oscillator()
    return spec, build_chart(spec, [1.0, 0.0]), P


@pytest.fixture(scope="module")
def pend_chart():
    spec, P = make_pendulum()
    return spec, build_chart(spec, [0.0, 1.0]), P


def unit_oscillators(n):
    """n unit-frequency oscillators on (x1, y1, ..., xn, yn) with ω = sum dx_i∧dy_i."""
    c = [f"{v}{i + 1}" for i in range(n) for v in ("x", "y")]
    P = lambda s: parse_expr(s, c)
    w = Structure2Form(2 * n, {(2 * i, 2 * i + 1): P("1") for i in range(n)})
    Hs = tuple(P(f"(x{i + 1}^2+y{i + 1}^2)/2") for i in range(n))
    Xs = tuple(hamiltonian_vf_2form(w, H).field for H in Hs)
    alpha = [P(f"x{i // 2 + 1}") if i % 2 else P("0") for i in range(2 * n)]
    return SystemSpec(tuple(c), Xs, Hs, Hs, w), alpha


def test_mineur_oscillator(osc1):
    _, chart, P = osc1
    E = 0.5
    r = mineur_integral(chart, [P("0"), P("x")], 0)
    assert r.value == pytest.approx(2 * np.pi * E, abs=1e-8)
    assert r.error <= 1e-8
    assert cycle_closure(r.cycle) <= 1e-7
    sym = mineur_action(chart, [P("-y/2"), P("x/2")], 0)
    assert sym == pytest.approx(r.value, abs=1e-8)


def test_mineur_rejects_wrong_primitive(osc1):
    _, chart, P = osc1
    with pytest.raises(PrimitiveMismatch):
        mineur_action(chart, [P("0"), P("2*x")], 0)


def test_mineur_pendulum(pend_chart):
    _, chart, P = pend_chart
    assert mineur_action(chart, [P("p"), P("0")], 0) == pytest.approx(pendulum_area(-0.5), abs=1e-6)


def test_leafwise_oscillator_family_matches_mineur(osc1):
    _, chart, P = osc1
    fam = [chart, chart.at_level([1.0]), chart.at_level([1.5])]
    mu = leafwise_action(fam, 0)
    mineur = np.array([mineur_action(c, [P("0"), P("x")], 0) for c in fam])
    assert mu[0] == 0.0
    assert np.allclose(mu - mu[0], mineur - mineur[0], atol=1e-7)
    assert np.allclose(np.diff(mu), 2 * np.pi * 0.5, atol=1e-7)


def test_leafwise_zero_path(osc1):
    _, chart, _ = osc1
    assert np.array_equal(leafwise_action([chart]), np.zeros((1, 1)))


@pytest.mark.parametrize("E", [-0.8, -0.5, -0.2])
def test_pendulum_action_derivative_is_period(pend_chart, E):
    _, chart, _ = pend_chart
    c = chart.at_level([E])
    fam = stencil_family(c)
    mu = leafwise_action(fam, 0)
    h = fam[1].levels[0] - c.levels[0]
    assert (mu[1] - mu[2]) / (2 * h) == pytest.approx(pendulum_period(E), abs=1e-4)


def test_mineur_and_leafwise_differ_by_constant(oscillators):
    spec, chart, P = oscillators
    fam = [chart, chart.at_level([0.6, 0.5]), chart.at_level([0.4, 0.3]), chart.at_level([0.55, 0.2])]
    alpha = [P("0"), P("x1"), P("0"), P("x2")]
    leaf = leafwise_action(fam)
    mineur = np.array([[mineur_action(c, alpha, k) for k in range(2)] for c in fam])
    spread = np.ptp(mineur - leaf, axis=0)
    assert np.max(spread) <= 1e-6


def test_verify_action_correct_and_wrong(osc1):
    spec, chart, _ = osc1
    fam = stencil_family(chart)
    levels = np.array([c.levels for c in fam])
    good = verify_action(chart, fam, 2 * np.pi * levels)
    assert good["passed"] and good["max"] <= 1e-6
    bad = verify_action(chart, fam, levels)
    assert not bad["passed"]
    # Z⌟ω + dH = (1 - 2π) dH at radius 1
    assert bad["max"] == pytest.approx(2 * np.pi - 1, rel=1e-3)


def test_verify_action_pendulum_leafwise(pend_chart):
    _, chart, _ = pend_chart
    fam = stencil_family(chart)
    rep = verify_action(chart, fam, leafwise_action(fam))
    assert rep["max"] <= 1e-4


def test_unimodular_basis_change_transforms_actions(oscillators):
    spec, chart, P = oscillators
    U = np.array([[1, 1], [1, 2]])
    chart_u = dataclasses.replace(chart, L=U @ chart.L)
    levels = [[0.6, 0.5], [0.4, 0.3]]
    fam = [chart] + [chart.at_level(f) for f in levels]
    fam_u = [chart_u] + [chart_u.at_level(f) for f in levels]
    mu = leafwise_action(fam)
    mu_u = leafwise_action(fam_u)
    # rows of L are the cycles: the action vector picks up the same integer matrix
    assert np.allclose(mu_u, mu @ U.T, atol=1e-8)
    alpha = [P("0"), P("x1"), P("0"), P("x2")]
    m0 = np.array([mineur_action(chart, alpha, k) for k in range(2)])
    m1 = np.array([mineur_action(chart_u, alpha, k) for k in range(2)])
    assert np.allclose(m1, U @ m0, atol=1e-8)


def test_isotropy(oscillators, product):
    _, chart, _ = oscillators
    assert isotropy_defect(chart, 1000) <= 1e-7
    _, pchart, _ = product
    assert isotropy_defect(pchart, 1000) <= 1e-7
    spec, x0, _ = make_poisson_cylinder()
    assert isotropy_defect(build_chart(spec, x0), 1000) <= 1e-7


def test_dimension_bound_refused():
    c = ["x", "y"]
    P = lambda s: parse_expr(s, c)
    w = Structure2Form(2, {(0, 1): P("1")})
    spec = SystemSpec(tuple(c), (VectorFieldExpr((P("1"), P("0"))), VectorFieldExpr((P("0"), P("1")))), (), None, w)
    with pytest.raises(DimensionBoundViolated):
        check_dimension_bound(spec, np.zeros(2))


def test_action_profile_needs_one_cycle_per_action():
    with pytest.raises(ValueError):
        ActionProfile("t0", np.zeros(1), np.zeros(2), [np.zeros((3, 2))])


def test_symplectic_normal_form(oscillators):
    _, chart, _ = oscillators
    rep = assemble_normal_form(chart, "symplectic")
    assert rep.passed
    assert np.max(np.abs(rep.magnetic)) <= 1e-7
    assert rep.residual <= 1e-5
    assert rep.isotropy <= 1e-7


def test_general_2form_reports_magnetic_block():
    c = ["x", "y", "z", "w"]
    P = lambda s: parse_expr(s, c)
    omega = Structure2Form(4, {(0, 1): P("1"), (2, 3): P("z")})
    H = P("(x^2+y^2)/2")
    X = hamiltonian_vf_2form(omega, H, check_structure=False).field
    spec = SystemSpec(tuple(c), (X,), (H, P("z"), P("w")), (H,), omega)
    chart = build_chart(spec, [1.0, 0.0, 0.5, 0.3])
    rep = assemble_normal_form(chart, "general-2form")
    # z = (μ, z, w): the only magnetic entry is b_zw = z = 0.5
    expected = np.zeros((3, 3))
    expected[1, 2], expected[2, 1] = 0.5, -0.5
    assert np.allclose(rep.magnetic, expected, atol=1e-6)
    assert rep.action_angle_residual <= 1e-5


def test_poisson_normal_form():
    spec, x0, _ = make_poisson_cylinder()
    chart = build_chart(spec, x0)
    rep = assemble_normal_form(chart, "poisson")
    assert rep.passed and rep.residual <= 1e-6


def test_mode_mismatch():
    spec, x0, _ = make_poisson_cylinder()
    chart = build_chart(spec, x0)
    with pytest.raises(ModeMismatch):
        assemble_normal_form(chart, "symplectic")
    c = ["x", "y", "z"]
    P = lambda s: parse_expr(s, c)
    omega = Structure2Form(3, {(0, 1): P("1")})
    H = P("(x^2+y^2)/2")
    X = hamiltonian_vf_2form(omega, H).field
    deg = SystemSpec(tuple(c), (X,), (H, P("z")), (H,), omega)
    with pytest.raises(ModeMismatch):
        assemble_normal_form(build_chart(deg, [1.0, 0.0, 0.0]), "symplectic")


def _isoenergy_family(n, E, shares):
    spec, alpha = unit_oscillators(n)
    x0 = np.zeros(2 * n)
    for i, s in enumerate(shares[0]):
        x0[2 * i] = np.sqrt(2 * E * s)
    chart = build_chart(spec, x0)
    fam = [chart] + [chart.at_level(E * np.asarray(s)) for s in shares[1:]]
    acts = np.array([[mineur_action(c, alpha, k) for k in range(n)] for c in fam])
    return spec, chart, fam, acts


def test_coaffine_two_oscillators():
    E = 1.0
    shares = [(0.5, 0.5), (0.6, 0.4), (0.3, 0.7), (0.45, 0.55), (0.7, 0.3)]
    spec, chart, fam, acts = _isoenergy_family(2, E, shares)
    assert np.allclose(acts.sum(axis=1), 2 * np.pi * E, atol=1e-8)
    co = coaffine_chart(fam, acts)
    assert (co.rank, co.degree) == (1, 1)
    dH = np.sum(spec.hamiltonians_grad(chart.x0), axis=0)
    assert restricted_rank(spec.structure, chart.x0, [dH]) == 2


def test_coaffine_three_oscillators():
    E = 1.5
    shares = [(0.3, 0.3, 0.4), (0.4, 0.3, 0.3), (0.3, 0.45, 0.25), (0.2, 0.35, 0.45), (0.35, 0.2, 0.45), (0.25, 0.4, 0.35)]
    spec, chart, fam, acts = _isoenergy_family(3, E, shares)
    assert np.allclose(acts.sum(axis=1), 2 * np.pi * E, atol=1e-8)
    co = coaffine_chart(fam, acts)
    assert (co.rank, co.degree) == (2, 1)
    dH = np.sum(spec.hamiltonians_grad(chart.x0), axis=0)
    assert restricted_rank(spec.structure, chart.x0, [dH]) == 4


def test_coaffine_full_rank_symplectic(oscillators):
    _, chart, _ = oscillators
    fam = [chart] + [chart.at_level(f) for f in ([0.6, 0.5], [0.4, 0.3], [0.55, 0.2], [0.45, 0.4])]
    co = coaffine_chart(fam, leafwise_action(fam))
    assert (co.rank, co.degree) == (2, 0)
