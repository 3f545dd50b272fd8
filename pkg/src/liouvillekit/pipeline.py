"""Analyses driven by a config: each returns a JSON-ready block with ``passed``."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable

import numpy as np

from . import actionangle as aa
from .config import AnalysisConfig, ConfigError, build_tensors, field_from_spec
from .conservation import HypothesisViolated, NotConformal, conformal_check, conservation_check, irrationality_probe
from .geometry import PoissonBivector, Structure2Form
from .normalform import pd_normalize, resonance_lattice, williamson_classify
from .normalform.field import FieldError
from .normalform.linear import FieldTooSmall
from .normalform.normalize import NormalFormError
from .normalform.series import FormalSeries
from .normalform.williamson import DegenerateQuadraticPart, UnresolvedMultiplicity
from .torusflow import SystemSpec, TorusChart, build_chart, torus_samples, verify_quasiperiodicity


class Executor:
    """Order-preserving map over a thread pool (plain map for one thread)."""

    def __init__(self, threads: int = 1):
        self.threads = max(1, int(threads))

    def map(self, fn: Callable, items: Iterable) -> list:
        items = list(items)
        if self.threads == 1 or len(items) < 2:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, items))


def chart_block(spec: SystemSpec, cfg: AnalysisConfig, seed: int = 0, samples: int = 16) -> tuple[dict, TorusChart]:
    x0 = cfg.x0
    defects = spec.validate(x0)
    chart = build_chart(spec, x0, seed=seed)
    p = spec.p
    rot = [chart.rotation_vector(np.eye(p)[i]).tolist() for i in range(p)]
    quasi = [verify_quasiperiodicity(chart, X, seed=seed) for X in spec.fields]
    th, pts = torus_samples(chart, samples)
    tol = spec.tol
    block = {
        "x0": x0.tolist(),
        "levels": chart.levels.tolist(),
        "lattice": chart.L.tolist(),
        "rotation_vectors": rot,
        "quasi_residuals": quasi,
        "validation": defects,
        "torus_samples": {"columns": [f"theta_{k + 1}" for k in range(p)] + list(spec.coords), "rows": np.hstack([th, pts]).tolist()},
        "passed": bool(max(quasi) <= tol.quasi),
    }
    if p > 1:
        block["irrationality"] = irrationality_probe(chart, spec.fields[0])
    return block, chart


def actions_block(spec: SystemSpec, cfg: AnalysisConfig, chart: TorusChart, ex: Executor) -> dict:
    tol = spec.tol
    block: dict = {"passed": True}
    aa.check_dimension_bound(chart)
    if isinstance(spec.structure, (Structure2Form, PoissonBivector)) and spec.hamiltonians is not None:
        iso = aa.isotropy_defect(chart)
        block["isotropy"] = iso
        block["passed"] &= iso <= tol.isotropy
    levels = cfg.levels()
    for lv in levels:
        if len(lv) != spec.q:
            raise ConfigError(f"[seeds] levels: each entry needs {spec.q} values")
    family = [chart] + ex.map(chart.at_level, levels)
    mu = aa.leafwise_action(family)
    rows = [[*c.levels.tolist(), *m.tolist()] for c, m in zip(family, mu)]
    profile = {"columns": [f"f_{j + 1}" for j in range(spec.q)] + [f"mu_{k + 1}" for k in range(spec.p)], "rows": rows}
    alpha_text = cfg.get("actions", "alpha")
    if alpha_text:
        alpha = cfg.expr_list(alpha_text, "[actions] alpha")
        if len(alpha) != spec.m:
            raise ConfigError(f"[actions] alpha needs {spec.m} components")
        mineur = np.array(ex.map(lambda c: [aa.mineur_action(c, alpha, k) for k in range(spec.p)], family))
        diff = mineur - mu
        spread = float(np.max(np.ptp(diff, axis=0)))
        profile["columns"] += [f"mineur_{k + 1}" for k in range(spec.p)]
        for r, v in zip(profile["rows"], mineur):
            r.extend(v.tolist())
        block["mineur_leafwise_spread"] = spread
        block["passed"] &= spread <= tol.equivalence
    block["profile"] = profile
    stencil = aa.stencil_family(chart)
    smu = aa.leafwise_action(stencil)
    ver = aa.verify_action(chart, stencil, smu)
    block["verification"] = ver
    block["passed"] &= ver["passed"]
    mode = cfg.get("actions", "mode")
    if mode:
        try:
            nf = aa.assemble_normal_form(chart, mode, family=stencil)
            block["normal_form"] = nf.to_dict()
            block["passed"] &= nf.passed
        except aa.ModeMismatch as exc:
            block["normal_form"] = {"error": str(exc), "passed": False}
            block["passed"] = False
    block["passed"] = bool(block["passed"])
    return block


def conservation_block(spec: SystemSpec, cfg: AnalysisConfig, chart: TorusChart, ex: Executor, grid: int | None = None) -> dict:
    tensors, expect = build_tensors(cfg, spec)
    grid = grid or cfg.int_value("conservation", "grid", 32)

    def one(name):
        G = tensors[name]
        want = expect[name]
        try:
            if want == "conformal":
                rep = conformal_check(G, spec, chart, grid, tensor_id=name)
            else:
                rep = conservation_check(G, spec, chart, grid, tensor_id=name, keep_field=True)
        except HypothesisViolated as exc:
            return {"tensor": name, "expect": want, "rejected": "hypothesis", "lie_norm": exc.norm, "passed": want == "reject"}
        except NotConformal as exc:
            return {"tensor": name, "expect": want, "rejected": "not conformal", "message": str(exc), "passed": want == "reject"}
        out = rep.to_dict()
        out["expect"] = want
        out["passed"] = bool(rep.passed and want != "reject")
        return out

    results = ex.map(one, sorted(tensors))
    return {"grid": grid, "tensors": results, "passed": all(r["passed"] for r in results)}


def _series(cfg: AnalysisConfig, section: str, maxdeg: int):
    K = field_from_spec(cfg.get(section, "field", ""))
    names = cfg.require(section, "variables").split()
    m = len(names)
    try:
        if cfg.get(section, "mode", "hamiltonian") == "hamiltonian" or section == "classify":
            return K, names, FormalSeries.from_text(cfg.require(section, "series"), m, maxdeg, K)
        comps = [FormalSeries.from_text(cfg.require(section, f"component.{j + 1}"), m, maxdeg, K) for j in range(m)]
        return K, names, comps
    except (ValueError, FieldError) as exc:
        raise ConfigError(f"[{section}] series: {exc}") from None


def normalform_block(cfg: AnalysisConfig, maxdeg: int | None = None) -> tuple[dict, str]:
    maxdeg = maxdeg or cfg.int_value("normalform", "maxdeg", 6)
    mode = cfg.get("normalform", "mode", "hamiltonian")
    K, names, X = _series(cfg, "normalform", maxdeg)
    try:
        res = pd_normalize(X, maxdeg, mode)
    except (NormalFormError, FieldTooSmall) as exc:
        return {"error": str(exc), "passed": False}, ""
    gamma = list(res.gamma)
    if mode == "hamiltonian":
        gamma = gamma + [-g for g in gamma]
    reso = resonance_lattice(gamma, maxdeg)
    block = res.to_dict()
    block["variables"] = names
    block["field"] = list(K.names)
    block["resonance"] = reso.to_dict()
    block["passed"] = bool(block["commutator_zero"])
    return block, res.to_text()


def classify_block(cfg: AnalysisConfig) -> dict:
    K, names, H2 = _series(cfg, "classify", 2)
    try:
        wt = williamson_classify(H2)
    except (DegenerateQuadraticPart, UnresolvedMultiplicity, FieldTooSmall, ValueError) as exc:
        return {"error": str(exc), "passed": False}
    out = wt.to_dict()
    out["variables"] = names
    out["passed"] = True
    return out
