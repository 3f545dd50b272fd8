from __future__ import annotations

from fractions import Fraction

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from liouvillekit.lattice import (
    canonical_order,
    clear_denominators,
    det_int,
    hnf,
    hnf_with_transform,
    integer_left_kernel,
    lattice_from_generators,
    nullspace_q,
    pairwise_reduce,
    rank_q,
    saturated_basis,
    solve_q,
)

int_mats = st.integers(1, 4).flatmap(
    lambda k: st.integers(1, 4).flatmap(lambda n: st.lists(st.lists(st.integers(-9, 9), min_size=n, max_size=n), min_size=k, max_size=k))
)


def _matmul(a, b):
    return [[sum(x * y for x, y in zip(row, col)) for col in zip(*b)] for row in a]


@settings(max_examples=200, deadline=None)
@given(int_mats)
def test_hnf_transform_is_unimodular_and_reproduces(a):
    h, u = hnf_with_transform(a)
    assert _matmul(u, a) == h
    assert abs(det_int(u)) == 1
    rows = [r for r in h if any(r)]
    assert len(rows) == rank_q(a)
    # echelon with positive pivots and reduced entries above each pivot
    last = -1
    for i, r in enumerate(rows):
        c = next(j for j, v in enumerate(r) if v)
        assert c > last and r[c] > 0
        for above in rows[:i]:
            assert 0 <= above[c] < r[c]
        last = c


@settings(max_examples=200, deadline=None)
@given(int_mats)
def test_integer_left_kernel_annihilates_and_saturates(a):
    ker = integer_left_kernel(a)
    for k in ker:
        assert all(sum(ki * row[c] for ki, row in zip(k, a)) == 0 for c in range(len(a[0])))
    assert len(ker) == len(a) - rank_q(a)
    if ker:
        # the kernel lattice is saturated: its HNF equals the HNF of its rational span
        assert hnf(ker) == saturated_basis(ker)


def test_saturated_basis_examples():
    assert saturated_basis([[2, 4]]) == [[1, 2]]
    assert saturated_basis([[2, 0], [0, 2]]) == [[1, 0], [0, 1]]
    assert saturated_basis([[Fraction(1, 3), Fraction(2, 3), 0]]) == [[1, 2, 0]]


def test_nullspace_and_solve():
    a = [[1, 2, 3], [2, 4, 6]]
    ns = nullspace_q(a)
    assert len(ns) == 2
    for w in ns:
        assert all(sum(Fraction(x) * y for x, y in zip(row, w)) == 0 for row in a)
    assert solve_q([[1, 0], [1, 1]], [3, 2]) == [Fraction(1), Fraction(2)]
    assert solve_q([[1, 1]], [1, 0]) is None


def test_clear_denominators():
    assert clear_denominators([Fraction(1, 2), Fraction(-3, 4)]) == [2, -3]
    assert clear_denominators([0, 0]) == [0, 0]


def test_pairwise_reduce_recovers_orthogonal_basis():
    base = np.array([[2 * np.pi, 0.0], [0.0, 4.44]])
    skew = np.array([[1, 0], [3, 1]]) @ base
    out = pairwise_reduce(skew)
    assert np.allclose(out, base)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-3, 3), min_size=4, max_size=4))
def test_reduction_stays_in_the_lattice(u):
    U = np.array(u).reshape(2, 2)
    if round(abs(np.linalg.det(U))) != 1:
        U = np.array([[1, u[0]], [0, 1]])
    base = np.array([[1.0, 0.3], [0.2, 1.7]])
    red = pairwise_reduce(U @ base)
    T = red @ np.linalg.inv(base)
    assert np.allclose(T, np.rint(T), atol=1e-9)
    assert round(abs(np.linalg.det(np.rint(T)))) == 1


def test_lattice_from_redundant_generators():
    base = np.array([[1.0, 0.0], [0.0, np.sqrt(2)]])
    gens = np.vstack([2 * base[0], base[0] + base[1], base[1], 3 * base[1] - base[0]])
    L = canonical_order(pairwise_reduce(lattice_from_generators(gens, 2)))
    assert np.allclose(L, base, atol=1e-12)
