"""Declarative analysis configs (INI text) and their canonical form.

Grammar (sections and keys; values are expressions in the declared
coordinates, lists are separated by ``;``)::

    [system]
    coords = x1 y1 x2 y2
    structure = 2form | poisson | none
    hamiltonians = (x1^2+y1^2)/2 ; s2*(x2^2+y2^2)/2
    fields = <comp; comp; ...> | <...>      (optional, '|' between fields)
    integrals = F1 ; F2                    (default: the Hamiltonians when 2p = m)

    [structure]
    x1 y1 = 1                              (entry ω_ab or Π^ab)

    [basis]
    s2 = 1.41421356237309504880168872420969807856967

    [seeds]
    x0 = 1 0 0.8 0
    levels = 0.5 0.8 ; 1.0 0.8             (family of invariant values)
    seed = 0

    [actions]
    alpha = 0 ; x1 ; 0 ; x2                (primitive 1-form, optional)
    mode = symplectic                      (normal-form mode, optional)

    [conservation]
    grid = 32
    tensor.NAME = structure | d EXPR | field I | scalar EXPR
                | vector E;E;.. | covector E;E;.. | product NAME NAME ..
                | scaled NAME : EXPR
    expect.NAME = conserved | reject | conformal

    [normalform]
    field = i:-1, s2:2                     (square roots adjoined to Q)
    mode = hamiltonian | vectorfield
    variables = x y
    maxdeg = 6
    series = <lines 'k_1 .. k_m : coeff'>  (hamiltonian)
    component.J = <lines>                  (vectorfield, J = 1..m)

    [classify]
    field = i:-1
    variables = x1 x2 y1 y2
    series = <lines>

    [tolerances]
    avg = 1e-6

    [analyses]
    run = chart actions conservation
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field

import numpy as np

from .exprcore import Expr, ExprSyntaxError, IrrationalBasis, ExprError, parse_expr
from .geometry import (
    PoissonBivector,
    Structure2Form,
    TensorField,
    VectorFieldExpr,
    check_jacobi,
    hamiltonian_vf_2form,
    hamiltonian_vf_poisson,
    sample_points,
)
from .tolerances import DEFAULT_TOLERANCES, Tolerances
from .torusflow import SystemSpec

SECTION_ORDER = ("system", "structure", "basis", "seeds", "actions", "conservation", "normalform", "classify", "tolerances", "analyses")
ANALYSES = ("chart", "actions", "conservation", "normalform", "classify")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (CLI exit code 1)."""


def _norm_value(v: str) -> str:
    lines = [" ".join(line.split()) for line in v.strip().splitlines()]
    return "\n".join(line for line in lines if line)


@dataclass
class AnalysisConfig:
    sections: dict[str, dict[str, str]]
    source: str = ""
    _cache: dict = field(default_factory=dict, repr=False)

    # canonical text ------------------------------------------------------------

    def reprint(self) -> str:
        names = [s for s in SECTION_ORDER if s in self.sections] + sorted(s for s in self.sections if s not in SECTION_ORDER)
        out = []
        for s in names:
            out.append(f"[{s}]")
            for k in sorted(self.sections[s]):
                v = self.sections[s][k]
                if "\n" in v:
                    out.append(f"{k} =\n" + "\n".join("    " + line for line in v.split("\n")))
                else:
                    out.append(f"{k} = {v}")
            out.append("")
        return "\n".join(out)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.reprint().encode()).hexdigest()

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    def require(self, section: str, key: str) -> str:
        v = self.get(section, key)
        if v is None or v == "":
            raise ConfigError(f"[{section}] {key} is required")
        return v

    def __eq__(self, other):
        return isinstance(other, AnalysisConfig) and self.sections == other.sections

    # typed views ---------------------------------------------------------------

    @property
    def coords(self) -> list[str]:
        return self.require("system", "coords").split()

    @property
    def basis(self) -> IrrationalBasis:
        try:
            return IrrationalBasis(dict(self.sections.get("basis", {})))
        except (ValueError, ArithmeticError) as exc:
            raise ConfigError(f"[basis] {exc}") from None

    def tolerances(self, overrides: dict[str, float] | None = None) -> Tolerances:
        vals = dict(self.sections.get("tolerances", {}))
        vals.update(overrides or {})
        try:
            return DEFAULT_TOLERANCES.override({k: float(v) for k, v in vals.items()})
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"[tolerances] {exc}") from None

    def analyses(self) -> list[str]:
        run = self.get("analyses", "run")
        if run is None:
            run = " ".join(a for a in ("chart", "actions", "conservation") if a == "chart" or a in self.sections)
        out = run.split()
        for a in out:
            if a not in ANALYSES:
                raise ConfigError(f"[analyses] unknown analysis '{a}' (choose from {', '.join(ANALYSES)})")
        return out

    def expr(self, text: str, where: str) -> Expr:
        try:
            return parse_expr(text, self.coords, self.basis)
        except ExprSyntaxError as exc:
            raise ConfigError(f"{where}: {exc}") from None
        except ExprError as exc:
            raise ConfigError(f"{where}: {exc}") from None

    def expr_list(self, text: str, where: str) -> list[Expr]:
        return [self.expr(t, where) for t in text.split(";")]

    def floats(self, section: str, key: str) -> np.ndarray:
        try:
            return np.array([float(v) for v in self.require(section, key).split()])
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None

    def int_value(self, section: str, key: str, default: int) -> int:
        v = self.get(section, key)
        if v is None:
            return default
        try:
            return int(v)
        except ValueError:
            raise ConfigError(f"[{section}] {key} must be an integer") from None

    @property
    def x0(self) -> np.ndarray:
        x = self.floats("seeds", "x0")
        if len(x) != len(self.coords):
            raise ConfigError(f"[seeds] x0 has {len(x)} entries for {len(self.coords)} coordinates")
        return x

    def levels(self) -> list[np.ndarray]:
        text = self.get("seeds", "levels")
        if not text:
            return []
        try:
            return [np.array([float(v) for v in part.split()]) for part in text.split(";")]
        except ValueError as exc:
            raise ConfigError(f"[seeds] levels: {exc}") from None


def parse_config(text: str) -> AnalysisConfig:
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    sections = {s: {k: _norm_value(v) for k, v in cp.items(s)} for s in cp.sections()}
    cfg = AnalysisConfig(sections, text)
    if "system" in sections:
        cfg.coords
    return cfg


def load_config(path: str) -> AnalysisConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None


# system construction -------------------------------------------------------------


def _structure(cfg: AnalysisConfig):
    kind = cfg.get("system", "structure", "none")
    coords = cfg.coords
    if kind == "none":
        return None
    entries = {}
    for key, val in cfg.sections.get("structure", {}).items():
        names = key.split()
        if len(names) != 2 or any(n not in coords for n in names):
            raise ConfigError(f"[structure] key '{key}' must name two coordinates")
        a, b = coords.index(names[0]), coords.index(names[1])
        if a == b:
            raise ConfigError(f"[structure] diagonal entry '{key}'")
        entries[(a, b)] = cfg.expr(val, f"[structure] {key}")
    if not entries:
        raise ConfigError("[structure] section is empty")
    try:
        if kind == "2form":
            return Structure2Form(len(coords), entries, cfg.basis)
        if kind == "poisson":
            return PoissonBivector(len(coords), entries, cfg.basis)
    except ValueError as exc:
        raise ConfigError(f"[structure] {exc}") from None
    raise ConfigError(f"[system] structure must be 2form, poisson or none, got '{kind}'")


def build_system(cfg: AnalysisConfig, tol: Tolerances = DEFAULT_TOLERANCES) -> SystemSpec:
    coords = cfg.coords
    basis = cfg.basis
    st = _structure(cfg)
    if isinstance(st, PoissonBivector):
        center = cfg.x0 if cfg.get("seeds", "x0") else np.zeros(len(coords))
        jac = check_jacobi(st, center + sample_points(len(coords), 32, scale=0.5))
        if jac > tol.jacobi:
            raise ConfigError(f"[structure] bivector fails the Jacobi identity (max {jac:.3e})")
    hams = None
    if cfg.get("system", "hamiltonians"):
        hams = tuple(cfg.expr_list(cfg.get("system", "hamiltonians"), "[system] hamiltonians"))
    if cfg.get("system", "fields"):
        fields = []
        for part in cfg.get("system", "fields").split("|"):
            comps = cfg.expr_list(part, "[system] fields")
            if len(comps) != len(coords):
                raise ConfigError(f"[system] fields: a field needs {len(coords)} components")
            fields.append(VectorFieldExpr(tuple(comps), basis))
    elif hams is not None and st is not None:
        try:
            if isinstance(st, Structure2Form):
                fields = [hamiltonian_vf_2form(st, H, basis=basis).field for H in hams]
            else:
                fields = [hamiltonian_vf_poisson(st, H, basis=basis) for H in hams]
        except Exception as exc:  # InconsistentSystem, NotStructurePreserving
            raise ConfigError(f"[system] cannot build Hamiltonian fields: {exc}") from None
        for X in fields:
            if not isinstance(X, VectorFieldExpr):
                raise ConfigError("[system] the 2-form is degenerate and non-constant; declare the fields explicitly")
    else:
        raise ConfigError("[system] needs fields, or hamiltonians together with a structure")
    if cfg.get("system", "integrals"):
        integrals = tuple(cfg.expr_list(cfg.get("system", "integrals"), "[system] integrals"))
    elif hams is not None and 2 * len(hams) == len(coords):
        integrals = hams
    else:
        raise ConfigError("[system] integrals are required unless 2p = m")
    try:
        return SystemSpec(tuple(coords), tuple(fields), integrals, hams, st, basis, tol=tol)
    except ValueError as exc:
        raise ConfigError(f"[system] {exc}") from None


def build_tensors(cfg: AnalysisConfig, spec: SystemSpec) -> tuple[dict[str, TensorField], dict[str, str]]:
    sec = cfg.sections.get("conservation", {})
    m = spec.m
    basis = spec.basis
    tensors: dict[str, TensorField] = {}
    expect: dict[str, str] = {}
    for key in sorted(k for k in sec if k.startswith("tensor.")):
        name = key[len("tensor."):]
        text = sec[key]
        kind, _, rest = text.partition(" ")
        where = f"[conservation] {key}"
        if kind == "structure":
            if spec.structure is None:
                raise ConfigError(f"{where}: no structure declared")
            G = spec.structure.as_tensor()
        elif kind == "d":
            G = TensorField.differential(cfg.expr(rest, where), m, basis)
        elif kind == "scalar":
            G = TensorField.scalar(cfg.expr(rest, where), basis)
        elif kind == "field":
            try:
                G = TensorField.vector(spec.fields[int(rest) - 1])
            except (ValueError, IndexError):
                raise ConfigError(f"{where}: field index out of range") from None
        elif kind in ("vector", "covector"):
            comps = cfg.expr_list(rest, where)
            if len(comps) != m:
                raise ConfigError(f"{where}: {len(comps)} components for {m} coordinates")
            G = TensorField.vector(VectorFieldExpr(tuple(comps), basis)) if kind == "vector" else TensorField.covector(comps, basis)
        elif kind == "product":
            parts = rest.split()
            if not parts or any(p not in tensors for p in parts):
                raise ConfigError(f"{where}: product factors must be declared earlier (alphabetically)")
            G = tensors[parts[0]]
            for p in parts[1:]:
                G = G.tensor(tensors[p])
        elif kind == "scaled":
            ref, _, ex = rest.partition(":")
            if ref.strip() not in tensors:
                raise ConfigError(f"{where}: unknown tensor '{ref.strip()}'")
            G = tensors[ref.strip()].scaled(cfg.expr(ex, where))
        else:
            raise ConfigError(f"{where}: unknown tensor kind '{kind}'")
        tensors[name] = G
        e = sec.get(f"expect.{name}", "conserved")
        if e not in ("conserved", "reject", "conformal"):
            raise ConfigError(f"[conservation] expect.{name} must be conserved, reject or conformal")
        expect[name] = e
    return tensors, expect


def field_from_spec(text: str):
    """Number field from 'i:-1, s2:2' (empty or 'Q' for the rationals)."""
    from .normalform.field import NumberField

    text = (text or "").strip()
    if text in ("", "Q"):
        return NumberField.rationals()
    rad = {}
    for part in text.split(","):
        name, _, d = part.partition(":")
        try:
            rad[name.strip()] = int(d)
        except ValueError:
            raise ConfigError(f"field: '{part.strip()}' must look like NAME:INTEGER") from None
    return NumberField.square_roots(rad)

