"""Resonance lattices and toric degree by integer linear algebra.

Each eigenvalue is replaced by its rational coordinate row over the field
basis; resonance questions become Q-linear questions about those rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Sequence

from .. import lattice
from .field import Scalar
from .series import monomials


@dataclass
class ToricData:
    degree: int
    generators: list[list[int]]  # rows a_l; Z_l = sum_j a_lj z_j d/dz_j
    lambdas: list[Scalar]

    def reconstruct(self) -> list[Scalar]:
        K = self.lambdas[0].field if self.lambdas else None
        m = len(self.generators[0]) if self.generators else 0
        out = []
        for j in range(m):
            acc = K.zero
            for lam, row in zip(self.lambdas, self.generators):
                acc = acc + lam * row[j]
            out.append(acc)
        return out

    def to_dict(self) -> dict:
        return {"degree": self.degree, "generators": self.generators, "lambdas": [str(l) for l in self.lambdas]}


@dataclass
class ResonanceData:
    gamma: list[Scalar]
    maxdeg: int
    resonant: list[list[tuple[int, ...]]]  # per component j
    kernel: list[list[int]]
    toric: ToricData
    real_toric_degree: int | None = None
    extra: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "gamma": [str(g) for g in self.gamma],
            "maxdeg": self.maxdeg,
            "kernel": self.kernel,
            "resonant": [[list(k) for k in ks] for ks in self.resonant],
            "toric": self.toric.to_dict(),
        }
        if self.real_toric_degree is not None:
            out["real_toric_degree"] = self.real_toric_degree
        return out


def coordinate_matrix(gamma: Sequence[Scalar]) -> list[list[Fraction]]:
    """Row j = rational coordinates of gamma_j over the field basis."""
    return [g.coords_fraction() for g in gamma]


def is_resonant(C: list[list[Fraction]], k: Sequence[int], j: int) -> bool:
    """<gamma, k> == gamma_j, decided on coordinates."""
    ncol = len(C[0])
    for col in range(ncol):
        if sum(ki * C[a][col] for a, ki in enumerate(k) if ki) != C[j][col]:
            return False
    return True


def toric_degree(gamma: Sequence[Scalar]) -> ToricData:
    """Minimal integer-diagonal generators Z_l and λ_l with Σ λ_l Z_l = diag(γ).

    The generator rows span the column space of the coordinate matrix (one
    column per basis element); independent columns are made primitive
    integral and kept when they generate the saturated lattice, otherwise
    the Hermite basis of the saturation is used.
    """
    gamma = list(gamma)
    K = gamma[0].field
    m = len(gamma)
    C = coordinate_matrix(gamma)
    cols = [[C[j][l] for j in range(m)] for l in range(len(C[0]))]
    chosen: list[list[int]] = []
    for col in cols:
        if not any(col):
            continue
        cand = chosen + [lattice.clear_denominators(col)]
        if lattice.rank_q(cand) == len(cand):
            chosen = cand
    if not chosen:
        return ToricData(0, [], [])
    sat = lattice.saturated_basis(chosen)
    if sorted(map(tuple, lattice.hnf(chosen))) != sorted(map(tuple, sat)):
        chosen = sat
    d = len(chosen)
    # solve gamma_j = sum_l lambda_l a_lj coordinate by coordinate
    lam_coords = [[Fraction(0)] * K.dim for _ in range(d)]
    for l, col in enumerate(cols):
        sol = lattice.solve_q(chosen, col)
        if sol is None:
            raise ArithmeticError("coordinate column outside the generator span")
        for i in range(d):
            lam_coords[i][l] = sol[i]
    lambdas = [K(c) for c in lam_coords]
    data = ToricData(d, [list(map(int, r)) for r in chosen], lambdas)
    if data.reconstruct() != gamma:
        raise ArithmeticError("toric reconstruction failed")
    return data


def minimality_holds(data: ToricData, gamma: Sequence[Scalar]) -> bool:
    """Dropping any generator makes exact reconstruction impossible."""
    C = coordinate_matrix(gamma)
    m = len(gamma)
    cols = [[C[j][l] for j in range(m)] for l in range(len(C[0]))]
    for drop in range(data.degree):
        rows = [r for i, r in enumerate(data.generators) if i != drop]
        if all(lattice.solve_q(rows, col) is not None if rows else not any(col) for col in cols):
            return False
    return True


def resonance_lattice(gamma: Sequence[Scalar], maxdeg: int) -> ResonanceData:
    """Kernel lattice of k -> <γ,k>, resonant exponents per component, toric data."""
    gamma = list(gamma)
    m = len(gamma)
    C = coordinate_matrix(gamma)
    kernel = lattice.integer_left_kernel(C)
    resonant: list[list[tuple[int, ...]]] = [[] for _ in range(m)]
    for deg in range(1, maxdeg + 1):
        for k in monomials(m, deg):
            for j in range(m):
                if is_resonant(C, k, j):
                    resonant[j].append(k)
    return ResonanceData(gamma, maxdeg, resonant, kernel, toric_degree(gamma))
