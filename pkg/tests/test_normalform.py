from __future__ import annotations

import warnings
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from conftest import birkhoff_oracle
from liouvillekit.normalform import (
    DegenerateQuadraticPart,
    FieldTooSmall,
    FormalSeries,
    NilpotentObstruction,
    NumberField,
    UnresolvedMultiplicity,
    pd_normalize,
    real_toric_degree,
    replay,
    resonance_lattice,
    split_linear,
    toric_degree,
    williamson_classify,
)
from liouvillekit.normalform.linear import is_nilpotent, matmul
from liouvillekit.normalform.normalize import lie_transform_vf
from liouvillekit.normalform.resonance import minimality_holds
from liouvillekit.normalform.series import monomials, vf_bracket, vf_from_text, vf_to_text

Q = NumberField.rationals()
G = NumberField.gaussian()
K2 = NumberField.quadratic(2, "s2")
KI2 = NumberField.square_roots({"i": -1, "s2": 2})


def mat(K, rows):
    return [[K(v) for v in row] for row in rows]


# number field ---------------------------------------------------------------

coords = st.lists(st.fractions(min_value=-5, max_value=5, max_denominator=6), min_size=4, max_size=4)


@settings(max_examples=100, deadline=None)
@given(coords, coords, coords)
def test_field_axioms(a, b, c):
    x, y, z = KI2(a), KI2(b), KI2(c)
    assert (x + y) * z == x * z + y * z
    assert (x * y) * z == x * (y * z)
    assert x * y == y * x
    if not y.is_zero():
        assert (x / y) * y == x
    assert abs(complex((x * y).complex()) - x.complex() * y.complex()) < 1e-9 * (1 + abs(x.complex() * y.complex()))


def test_field_parse_and_print():
    v = KI2.parse("3/2 - 2*i + 1/3*i*s2")
    assert KI2.parse(str(v)) == v
    assert KI2.gen("i") * KI2.gen("i") == KI2(-1)
    assert K2.gen("s2") ** 2 == K2(2)


# splitting ------------------------------------------------------------------


def test_split_examples():
    lp = split_linear(mat(Q, [[0, 1], [0, 0]]))
    assert lp.S == mat(Q, [[0, 0], [0, 0]]) and lp.N == mat(Q, [[0, 1], [0, 0]])
    lp = split_linear(mat(Q, [[1, 1], [0, 1]]))
    assert lp.S == mat(Q, [[1, 0], [0, 1]]) and lp.N == mat(Q, [[0, 1], [0, 0]])
    lp = split_linear(mat(G, [[0, -1], [1, 0]]))
    assert lp.S == mat(G, [[0, -1], [1, 0]]) and lp.diagonalizable
    assert sorted(str(g) for g in lp.eigenvalues) == sorted([str(G.parse("i")), str(G.parse("-i"))])


def test_field_too_small_reports_factor():
    with pytest.raises(FieldTooSmall) as info:
        split_linear(mat(Q, [[0, -1], [1, 0]]))
    assert [str(c) for c in info.value.factor] == ["1", "0", "1"]


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.lists(st.integers(-2, 2), min_size=9, max_size=9), st.lists(st.integers(-3, 3), min_size=3, max_size=3))
def test_split_invariants(entries, diag):
    # conjugate an upper-triangular matrix (eigenvalues in Q) by a unimodular one
    T = mat(Q, [[diag[0], entries[0], entries[1]], [0, diag[1], entries[2]], [0, 0, diag[2]]])
    U = mat(Q, [[1, entries[3], entries[4]], [0, 1, entries[5]], [0, 0, 1]])
    L = mat(Q, [[1, 0, 0], [entries[6], 1, 0], [entries[7], entries[8], 1]])
    from liouvillekit.normalform.linear import inverse

    M = matmul(L, U)
    A = matmul(matmul(M, T), inverse(M))
    lp = split_linear(A)
    assert [[s + n for s, n in zip(rs, rn)] for rs, rn in zip(lp.S, lp.N)] == A
    assert matmul(lp.S, lp.N) == matmul(lp.N, lp.S)
    assert is_nilpotent(lp.N)
    # S is diagonalized by P
    D = matmul(matmul(lp.P_inv, lp.S), lp.P)
    assert all(D[i][j].is_zero() for i in range(3) for j in range(3) if i != j)


# resonances -----------------------------------------------------------------


def test_resonance_examples():
    r = resonance_lattice([Q(1), Q(-1)], 3)
    assert r.kernel == [[1, 1]]
    assert (2, 1) in r.resonant[0]
    r = resonance_lattice([G.parse("i"), KI2.parse("i*s2")] if False else [KI2.parse("i"), KI2.parse("i*s2")], 4)
    assert r.kernel == []
    assert r.resonant == [[(1, 0)], [(0, 1)]]
    r = resonance_lattice([Q(1), Q(2)], 3)
    assert (2, 0) in r.resonant[1]


def test_resonances_satisfy_their_equation():
    gamma = [K2.parse("1 + s2"), K2.parse("s2"), K2(1)]
    r = resonance_lattice(gamma, 4)
    for j, ks in enumerate(r.resonant):
        for k in ks:
            acc = K2.zero
            for kk, g in zip(k, gamma):
                acc = acc + g * kk
            assert acc == gamma[j]
    for k in r.kernel:
        acc = K2.zero
        for kk, g in zip(k, gamma):
            acc = acc + g * kk
        assert acc.is_zero()
    # brute force over all exponents up to degree 4
    count = sum(
        1
        for d in range(1, 5)
        for k in monomials(3, d)
        for j in range(3)
        if sum((g * kk for kk, g in zip(k, gamma)), K2.zero) == gamma[j]
    )
    assert count == sum(len(ks) for ks in r.resonant)


def test_toric_examples():
    t = toric_degree([K2(1), K2.gen("s2")])
    assert t.degree == 2
    t = toric_degree([Q(2), Q(4)])
    assert (t.degree, t.generators, [str(v) for v in t.lambdas]) == (1, [[1, 2]], ["2"])
    gamma = [K2.parse("1 + s2"), K2.gen("s2")]
    t = toric_degree(gamma)
    assert t.degree == 2 and t.generators == [[1, 0], [1, 1]]
    assert t.lambdas == [K2(1), K2.gen("s2")]
    assert t.reconstruct() == gamma


@pytest.mark.parametrize(
    "gamma",
    [
        ["1", "s2"],
        ["2", "4"],
        ["1 + s2", "s2"],
        ["1", "2", "s2", "1 - s2"],
        ["3", "3", "3"],
        ["2*s2", "1/2", "s2 + 1/4"],
    ],
)
def test_toric_minimality(gamma):
    g = [K2.parse(v) for v in gamma]
    t = toric_degree(g)
    assert t.reconstruct() == g
    assert minimality_holds(t, g)


# normalization ----------------------------------------------------------------


def vf(K, m, N, comps):
    return [FormalSeries.from_dict(m, N, K, c) for c in comps]


def test_already_normal_input_unchanged():
    X = vf(Q, 2, 4, [{(1, 0): 1}, {(0, 1): 2, (2, 0): 1}])
    res = pd_normalize(X, 4)
    assert res.log == [] and res.normalized == X


def test_nonresonant_terms_removed():
    X = vf(Q, 2, 4, [{(1, 0): 1, (0, 2): 3, (1, 1): 1}, {(0, 1): 2, (2, 0): 1, (1, 1): -2}])
    res = pd_normalize(X, 4)
    assert res.commutator_is_zero()
    assert res.normalized[1][(2, 0)] == Q(1)
    assert res.normalized[0][(0, 2)].is_zero()
    assert replay(res, X) == res.normalized


def _resonant(gamma, k, j):
    return sum((g * kk for kk, g in zip(k, gamma)), gamma[0].field.zero) == gamma[j]


def _random_fields():
    def build(m, diag, raw):
        comps = []
        for j in range(m):
            terms = {tuple(int(a == j) for a in range(m)): diag[j]}
            for deg_k, coeff in raw[j]:
                ks = [k for d in (2, 3, 4) for k in monomials(m, d)]
                terms[ks[deg_k % len(ks)]] = terms.get(ks[deg_k % len(ks)], 0) + coeff
            comps.append(terms)
        return m, comps

    return st.integers(2, 3).flatmap(
        lambda m: st.tuples(
            st.just(m),
            st.lists(st.sampled_from(["1", "-1", "2", "3", "s2", "1 + s2", "-s2", "1/2"]), min_size=m, max_size=m),
            st.lists(st.lists(st.tuples(st.integers(0, 60), st.integers(-3, 3)), max_size=4), min_size=m, max_size=m),
        )
    ).map(lambda t: build(*t))


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(_random_fields())
def test_random_fields_normalize_exactly(data):
    m, comps = data
    X = [FormalSeries(m, 4, K2, {k: K2.parse(v) if isinstance(v, str) else K2(v) for k, v in c.items()}) for c in comps]
    res = pd_normalize(X, 4)
    assert res.commutator_is_zero()
    assert replay(res, X) == res.normalized
    gamma = res.gamma
    # every surviving monomial is resonant
    for j, comp in enumerate(res.normalized):
        for k in comp.terms:
            assert _resonant(gamma, k, j)
    # triangularity: each step keeps the resonant part of its own degree
    cur = res.transformed
    for step in res.log:
        new = lie_transform_vf(step.generator, cur)
        r = step.degree
        for j in range(m):
            for k in monomials(m, r):
                if _resonant(gamma, k, j):
                    assert new[j][k] == cur[j][k]
                else:
                    assert new[j][k].is_zero()
        cur = new


def test_diag_1_2_resonant_monomial_survives():
    X = vf(Q, 2, 3, [{(1, 0): 1}, {(0, 1): 2, (2, 0): 1}])
    res = pd_normalize(X, 3)
    assert res.normalized == X and res.log == []


def test_nilpotent_part_flagged():
    X = vf(Q, 3, 4, [{(1, 0, 0): 1, (0, 1, 0): 1, (0, 2, 0): 1}, {(0, 1, 0): 1, (0, 0, 2): 1}, {(0, 0, 1): 2, (1, 1, 0): -1}])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = pd_normalize(X, 4)
    assert any(issubclass(w.category, NilpotentObstruction) for w in caught)
    assert "nilpotent-obstruction" in res.flags
    assert res.commutator_is_zero()
    assert replay(res, X) == res.normalized


@pytest.mark.parametrize(
    "cubic,terms",
    [
        ("x**3", {(3, 0): 1}),
        ("x**2*y - y**3/3", {(2, 1): 1, (0, 3): Fraction(-1, 3)}),
        ("2*x*y**2 + x**3/2", {(1, 2): 2, (3, 0): Fraction(1, 2)}),
    ],
)
def test_birkhoff_quartic_matches_sympy_oracle(cubic, terms):
    expected = birkhoff_oracle(cubic)
    H = FormalSeries(2, 4, G, {(2, 0): G(Fraction(1, 2)), (0, 2): G(Fraction(1, 2)), **{k: G(v) for k, v in terms.items()}})
    res = pd_normalize(H, 4, mode="hamiltonian")
    assert res.commutator_is_zero()
    nf = res.in_original_frame()
    assert nf.homogeneous(3).is_zero()
    assert nf == FormalSeries(2, 4, G, {k: G(v) for k, v in expected.items()})
    assert replay(res, H) == res.normalized


def test_cubic_oscillator_coefficient():
    # x^3 gives I - 15/4 I^2 with I = (x^2 + y^2)/2
    assert birkhoff_oracle("x**3")[(4, 0)] == Fraction(-15, 16)


def test_hamiltonian_depends_only_on_actions():
    # two nonresonant elliptic modes (frequencies 1 and √2) over Q(i, √2)
    m, N = 4, 5
    K = KI2
    terms = {(2, 0, 0, 0): "1/2", (0, 0, 2, 0): "1/2", (0, 2, 0, 0): "1/2*s2", (0, 0, 0, 2): "1/2*s2"}
    terms.update({(3, 0, 0, 0): "1", (1, 1, 0, 1): "-2", (0, 1, 1, 1): "1/3", (2, 0, 1, 1): "1", (1, 0, 0, 3): "s2"})
    H = FormalSeries(m, N, K, {k: K.parse(v) for k, v in terms.items()})
    res = pd_normalize(H, N, mode="hamiltonian")
    assert res.commutator_is_zero()
    # in the eigen-coordinates every surviving monomial is a product of w_j w_{n+j}
    for k in res.normalized.terms:
        assert k[0] == k[2] and k[1] == k[3]
    assert replay(res, H) == res.normalized


def test_series_text_roundtrip():
    s = FormalSeries(3, 5, KI2, {(1, 0, 2): KI2.parse("1/2 - i*s2"), (0, 0, 1): KI2(3), (2, 2, 1): KI2.parse("s2")})
    assert FormalSeries.from_text(s.to_text(), 3, 5, KI2) == s
    X = [s, s.diff(0), s * s]
    assert vf_from_text(vf_to_text(X), 3, 5, KI2) == X
    assert s.to_text().splitlines()[0] == "0 0 1 : 3"


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 3)), st.lists(st.fractions(max_denominator=9, min_value=-9, max_value=9), min_size=2, max_size=2), max_size=8))
def test_series_text_roundtrip_random(d):
    s = FormalSeries(2, 6, K2, {k: K2(v) for k, v in d.items()})
    assert FormalSeries.from_text(s.to_text(), 2, 6, K2) == s


def test_bracket_antisymmetry_of_series():
    X = vf(Q, 2, 4, [{(2, 0): 1, (0, 1): 3}, {(1, 1): -1}])
    Y = vf(Q, 2, 4, [{(0, 2): 2}, {(1, 0): 1, (3, 0): 1}])
    s = vf_bracket(X, Y)
    t = vf_bracket(Y, X)
    assert all((a + b).is_zero() for a, b in zip(s, t))


# Williamson ----------------------------------------------------------------------


def quad(K, n, d):
    return FormalSeries(2 * n, 2, K, {k: K(v) for k, v in d.items()})


def test_williamson_examples():
    w = williamson_classify(quad(G, 1, {(2, 0): Fraction(1, 2), (0, 2): Fraction(1, 2)}))
    assert w.counts == (1, 0, 0) and real_toric_degree(w) == 1
    # variables x1 x2 y1 y2
    w = williamson_classify(quad(G, 2, {(1, 0, 1, 0): 1, (0, 2, 0, 0): Fraction(1, 2), (0, 0, 0, 2): Fraction(1, 2)}))
    assert w.counts == (1, 1, 0) and real_toric_degree(w) == 1
    w = williamson_classify(quad(G, 2, {(1, 0, 1, 0): 1, (0, 1, 0, 1): 1, (1, 0, 0, 1): 1, (0, 1, 1, 0): -1}))
    assert w.counts == (0, 0, 1) and real_toric_degree(w) == 1
    assert w.n == 2


def test_williamson_two_elliptic_and_degenerate():
    w = williamson_classify(quad(G, 2, {(2, 0, 0, 0): Fraction(1, 2), (0, 0, 2, 0): Fraction(1, 2), (0, 2, 0, 0): Fraction(1, 2), (0, 0, 0, 2): Fraction(1, 2)}))
    assert w.counts == (2, 0, 0)
    with pytest.raises(DegenerateQuadraticPart):
        williamson_classify(quad(G, 1, {(2, 0): Fraction(1, 2)}))


def test_williamson_unresolved_multiplicity():
    # H2 = x1 y2 couples the two pairs into a nilpotent linearization with repeated zero... use a Jordan pair instead
    H = quad(G, 2, {(1, 0, 1, 0): 1, (0, 1, 0, 1): 1, (0, 1, 1, 0): 1})
    with pytest.raises(UnresolvedMultiplicity):
        williamson_classify(H)
