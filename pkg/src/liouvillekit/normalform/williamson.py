"""Williamson type of a nondegenerate quadratic Hamiltonian, decided exactly."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

from .field import NumberField, Scalar
from .linear import exact_eigenvalues, is_zero_matrix, matmul, split_linear
from .normalize import hessian, structure_matrix
from .series import FormalSeries


class DegenerateQuadraticPart(ValueError):
    pass


class UnresolvedMultiplicity(ValueError):
    pass


@dataclass
class WilliamsonType:
    k_e: int
    k_h: int
    k_f: int
    blocks: list[dict] = dc_field(default_factory=list)  # label + eigenvalues

    @property
    def counts(self) -> tuple[int, int, int]:
        return (self.k_e, self.k_h, self.k_f)

    @property
    def n(self) -> int:
        return self.k_e + self.k_h + 2 * self.k_f

    def to_dict(self) -> dict:
        return {"counts": list(self.counts), "blocks": self.blocks, "real_toric_degree": real_toric_degree(self)}


def _parts(lam: Scalar) -> tuple[bool, bool]:
    """(has real part, has imaginary part), decided on coordinates."""
    K = lam.field
    re = any(v for v, r in zip(lam.c, K.real_flags) if r)
    im = any(v for v, f in zip(lam.c, K.imag_flags) if f)
    mixed = any(v for v, r, f in zip(lam.c, K.real_flags, K.imag_flags) if not r and not f)
    if mixed:
        raise ValueError("field basis elements must be real or purely imaginary to classify eigenvalues")
    return re, im


def williamson_classify(H2: FormalSeries) -> WilliamsonType:
    """Counts (k_e, k_h, k_f) from the eigenvalues of Π·Hess(H_2).

    The series must be quadratic in canonical variables (x_1..x_n, y_1..y_n)
    over a field containing the eigenvalues (the Gaussian rationals cover
    the canonical examples).
    """
    K: NumberField = H2.field
    if H2.m % 2:
        raise ValueError("canonical coordinates come in pairs")
    n = H2.m // 2
    M = matmul(structure_matrix(K, n), hessian(H2))
    eig = exact_eigenvalues(M)
    if any(l.is_zero() for l, _ in eig):
        raise DegenerateQuadraticPart("the linearization has a zero eigenvalue")
    if any(mult > 1 for _, mult in eig):
        if not is_zero_matrix(split_linear(M).N):
            raise UnresolvedMultiplicity("repeated eigenvalues with a nilpotent coupling do not split into blocks")
    k_e = k_h = k_f = 0
    blocks = []
    seen = set()
    for lam, mult in sorted(eig, key=lambda e: (str(e[0]))):
        if lam.c in seen:
            continue
        re, im = _parts(lam)
        if im and not re:
            orbit = [lam, -lam]
            label = "elliptic"
            k_e += mult
        elif re and not im:
            orbit = [lam, -lam]
            label = "hyperbolic"
            k_h += mult
        else:
            conj = lam.real_part() - (lam - lam.real_part())
            orbit = [lam, -lam, conj, -conj]
            label = "focus-focus"
            k_f += mult
        for o in orbit:
            seen.add(o.c)
        for _ in range(mult):
            blocks.append({"type": label, "eigenvalues": sorted(str(o) for o in orbit)})
    out = WilliamsonType(k_e, k_h, k_f, sorted(blocks, key=lambda b: (b["type"], b["eigenvalues"])))
    if out.n != n:
        raise UnresolvedMultiplicity(f"eigenvalue orbits account for {out.n} of {n} degrees of freedom")
    return out


def real_toric_degree(wtype: WilliamsonType) -> int:
    return wtype.k_e + wtype.k_f
