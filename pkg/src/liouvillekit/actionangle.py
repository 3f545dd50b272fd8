"""Action variables, Hamiltonianity of the torus action and normal forms.

Sign conventions follow :mod:`liouvillekit.geometry`. With
``Z_k = sum_i L_ki X_i`` the period-1 generators, the action differentials
are ``dμ_k = ρ_k = sum_i L_ki dH_i`` and ``Z_k⌟ω = -dμ_k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np

from .exprcore import Expr, compile_exprs, diff_expr
from .geometry import PoissonBivector, Structure2Form, sample_points
from .torusflow import TorusChart, _numerical_rank, _refine_return, joint_flow

MODES = ("general-2form", "almost-symplectic", "symplectic", "superintegrable", "poisson")


class PrimitiveMismatch(ValueError):
    """dα differs from ω."""


class PathInconsistency(RuntimeError):
    """Two homotopic paths give different leafwise actions."""


class ModeMismatch(ValueError):
    """The structure does not fit the requested normal-form mode."""


class RankUnstable(RuntimeError):
    """The numerical rank of the action map changes across the family."""


class DimensionBoundViolated(ValueError):
    """p exceeds m - rank(ω)/2, so the tori cannot be isotropic."""


@dataclass
class ActionProfile:
    torus_id: str
    levels: np.ndarray
    actions: np.ndarray
    cycles: list[np.ndarray]
    residuals: dict[str, float] = field(default_factory=dict)
    mode: str = "symplectic"

    def __post_init__(self):
        if len(self.cycles) != len(self.actions):
            raise ValueError("one basis cycle per action is required")


@dataclass
class CoaffineChart:
    torus_ids: list[str]
    actions: np.ndarray  # (n_tori, p)
    base_dim: int
    rank: int
    singular_values: np.ndarray

    @property
    def degree(self) -> int:
        """Over-determination degree p - rank."""
        return self.actions.shape[1] - self.rank


# ---------------------------------------------------------------------------
# Helpers


def structure_rank(omega: Structure2Form, x, rel: float = 1e-8) -> int:
    return _numerical_rank(np.asarray(omega.func(np.asarray(x, dtype=float))), rel)


def check_dimension_bound(chart_or_spec, x0=None) -> None:
    """Refuse p > m - rank(ω)/2 at the seed."""
    spec = getattr(chart_or_spec, "spec", chart_or_spec)
    x0 = getattr(chart_or_spec, "x0", x0)
    if not isinstance(spec.structure, Structure2Form):
        return
    r = structure_rank(spec.structure, x0)
    if spec.p > spec.m - r / 2:
        raise DimensionBoundViolated(f"p = {spec.p} > m - rank(ω)/2 = {spec.m - r / 2:g}")


def _gauss_nodes(panels: int, order: int = 8):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, 1.0, panels + 1)
    h = np.diff(edges)
    s = (edges[:-1, None] + (x[None, :] + 1) * h[:, None] / 2).ravel()
    ws = (w[None, :] * h[:, None] / 2).ravel()
    return s, ws


def isotropy_defect(chart: TorusChart, n_samples: int = 1000, seed: int = 0) -> float:
    """max |ω(X_i, X_j)| (or |Π(dH_i, dH_j)|) over random torus samples."""
    spec = chart.spec
    rng = np.random.default_rng(seed)
    pts = chart.embed(rng.random((n_samples, chart.p)))
    if isinstance(spec.structure, Structure2Form):
        W = spec.structure.func(pts.T)  # (m, m, n)
        Xm = spec.field_matrix(pts.T)  # (m, p, n)
        vals = np.einsum("ain,abn,bjn->ijn", Xm, W, Xm)
    elif isinstance(spec.structure, PoissonBivector):
        Pm = spec.structure.func(pts.T)
        dH = spec.hamiltonians_grad(pts.T)  # (p, m, n)
        vals = np.einsum("ian,abn,jbn->ijn", dH, Pm, dH)
    else:
        raise ModeMismatch("isotropy needs a 2-form or a Poisson structure")
    return float(np.max(np.abs(vals)))


def check_primitive(alpha: Sequence[Expr], omega: Structure2Form, points, basis=None) -> float:
    """max |dα - ω| over points, with (dα)_ab = ∂_a α_b - ∂_b α_a."""
    m = omega.m
    basis = omega.basis if basis is None else basis
    exprs = []
    for a in range(m):
        for b in range(a + 1, m):
            exprs.append(diff_expr(alpha[b], a) - diff_expr(alpha[a], b) - omega[a, b])
    vals = compile_exprs(exprs, basis)(np.asarray(points, dtype=float).T)
    return float(np.max(np.abs(vals))) if np.size(vals) else 0.0


# ---------------------------------------------------------------------------
# Mineur integral


@dataclass
class MineurResult:
    value: float
    error: float
    cycle: np.ndarray


def mineur_integral(chart: TorusChart, alpha: Sequence[Expr], cycle_index: int, panels: int = 16, order: int = 8, check: bool = True) -> MineurResult:
    """∮ α over the cycle s -> φ^{s L_k}(x0), s ∈ [0, 1].

    Composite Gauss-Legendre on ``panels`` panels; the error estimate is the
    difference with half as many panels.
    """
    spec = chart.spec
    basis = spec.basis
    omega = spec.structure
    if check:
        if not isinstance(omega, Structure2Form):
            raise PrimitiveMismatch("the Mineur integral needs a 2-form structure")
        check_dimension_bound(chart)
        rng = np.random.default_rng(1)
        pts = np.vstack([chart.embed(rng.random((16, chart.p))), chart.x0 + 0.1 * sample_points(spec.m, 16, seed=2)])
        defect = check_primitive(alpha, omega, pts, basis)
        if defect > spec.tol.primitive:
            raise PrimitiveMismatch(f"|dα - ω| = {defect:.3e} exceeds {spec.tol.primitive:g}")
    afunc = compile_exprs(list(alpha), basis)
    Lk = chart.L[cycle_index]

    def integrate(npanel):
        s, w = _gauss_nodes(npanel, order)
        pts = chart.embed(np.outer(s, np.eye(chart.p)[cycle_index]))
        Xm = spec.field_matrix(pts.T)  # (m, p, n)
        Z = np.einsum("ain,i->an", Xm, Lk)
        integrand = np.sum(afunc(pts.T) * Z, axis=0)
        return float(np.sum(w * integrand))

    fine = integrate(panels)
    coarse = integrate(max(1, panels // 2))
    s = np.linspace(0.0, 1.0, 65)
    cycle = chart.embed(np.outer(s, np.eye(chart.p)[cycle_index]))
    return MineurResult(fine, abs(fine - coarse), cycle)


def mineur_action(chart: TorusChart, alpha: Sequence[Expr], cycle_index: int) -> float:
    """Mineur action ∮_γ α along the cycle of lattice generator ``cycle_index``."""
    return mineur_integral(chart, alpha, cycle_index).value


def cycle_closure(cycle: np.ndarray) -> float:
    return float(np.max(np.abs(cycle[-1] - cycle[0])))


# ---------------------------------------------------------------------------
# Leafwise action


def _rho(spec, L: np.ndarray, y: np.ndarray) -> np.ndarray:
    """ρ_k(y) = sum_i L_ki dH_i(y), shape (p, m)."""
    return L @ spec.hamiltonians_grad(y)


def _lattice_at(spec, y, L_guess) -> np.ndarray:
    rows = []
    for row in L_guess:
        t, res = _refine_return(spec, y, row)
        if res > spec.tol.ret:
            raise PathInconsistency(f"lattice continuation failed at {np.round(y, 6).tolist()} (residual {res:.3e})")
        rows.append(t)
    return np.array(rows)


def _path_integral(spec, path_pts, path_vel, weights, L0) -> np.ndarray:
    """sum_n w_n ρ(y_n)·y'_n with the lattice continued along the path."""
    L = L0
    total = np.zeros(L0.shape[0])
    for y, v, w in zip(path_pts, path_vel, weights):
        L = _lattice_at(spec, y, L)
        total += w * (_rho(spec, L, y) @ v)
    return total


def casimir_mask(spec) -> np.ndarray:
    """Which integrals are Casimirs (Poisson mode); all False otherwise."""
    mask = np.zeros(spec.q, dtype=bool)
    if not isinstance(spec.structure, PoissonBivector):
        return mask
    pts = sample_points(spec.m, 16, seed=5)
    dF = spec.integrals_grad(pts.T)
    Pm = spec.structure.func(pts.T)
    for j in range(spec.q):
        mask[j] = np.max(np.abs(np.einsum("an,abn->bn", dF[j], Pm))) < 1e-12
    return mask


def leafwise_action(charts: Sequence[TorusChart], cycle_index: int | None = None, panels: int = 2, order: int = 8, check_paths: bool = True) -> np.ndarray:
    """Leafwise actions μ on each chart by integrating ρ from the section.

    ``charts[0]`` is the reference torus (μ = 0 there); all charts must come
    from one family (same section). In Poisson mode the Casimir values of the
    target are used along the whole path so that it stays in one leaf.
    Returns shape (n_charts,) for a given ``cycle_index`` or (n_charts, p).
    """
    ref = charts[0]
    spec = ref.spec
    if spec.hamiltonians is None:
        raise ValueError("leafwise actions need declared Hamiltonians")
    if spec.structure is None:
        raise ModeMismatch("leafwise actions need a structure")
    check_dimension_bound(ref)
    poisson = isinstance(spec.structure, PoissonBivector)
    cas = casimir_mask(spec)
    s, w = _gauss_nodes(panels, order)
    out = []
    for ch in charts:
        f1 = np.asarray(ch.levels, dtype=float)
        f0 = np.where(cas, f1, ref.levels)
        if np.allclose(f0, f1, rtol=0, atol=0):
            out.append(np.zeros(ref.p))
            continue
        start_chart = ref if np.array_equal(f0, ref.levels) else ref.at_level(f0)
        fs = f0[None, :] + s[:, None] * (f1 - f0)[None, :]
        pts = np.array([ref.section(f) for f in fs])
        vel = np.array([ref.section_derivative(y) @ (f1 - f0) for y in pts])
        mu = _path_integral(spec, pts, vel, w, start_chart.L)
        if check_paths:
            if poisson:
                # the same path pushed around the torus by a fixed angle
                shift = np.full(ref.p, 0.37)
                Ls = [start_chart.L]
                for y in pts:
                    Ls.append(_lattice_at(spec, y, Ls[-1]))
                Ls = np.array(Ls[1:])
                moved, D = [], []
                for y, L in zip(pts, Ls):
                    z, Dz = joint_flow(spec.fields, y, shift @ L, variational=True, rtol=spec.tol.frame_rtol, atol=spec.tol.frame_atol)
                    moved.append(z)
                    D.append(Dz)
                # velocity of the moved path by finite differences of the node map is avoided:
                # d/dτ φ^{θL(τ)}(y(τ)) = Dφ y' + sum_i (θ dL/dτ)_i X_i, with dL/dτ from the lattice relation
                vel2 = []
                for y, L, z, Dz, v in zip(pts, Ls, moved, D, vel):
                    dL = _lattice_velocity(spec, y, L, v)
                    vel2.append(Dz @ v + spec.field_matrix(z) @ (shift @ dL))
                mu2 = _path_integral(spec, np.array(moved), np.array(vel2), w, start_chart.L)
            else:
                a, b = ref.section(f0), ch.x0
                line = a[None, :] + s[:, None] * (b - a)[None, :]
                mu2 = _path_integral(spec, line, np.repeat((b - a)[None], len(s), axis=0), w, start_chart.L)
            diff = float(np.max(np.abs(mu - mu2)))
            if diff > spec.tol.path:
                raise PathInconsistency(f"homotopic paths disagree by {diff:.3e}")
        out.append(mu)
    res = np.array(out)
    return res[:, cycle_index] if cycle_index is not None else res


def _lattice_velocity(spec, y, L, v) -> np.ndarray:
    """dL/dτ along a path with velocity v at y, from φ^{L_k}(y) = y."""
    _, D = joint_flow(spec.fields, np.repeat(y[None], L.shape[0], axis=0), L, variational=True, rtol=spec.tol.frame_rtol, atol=spec.tol.frame_atol)
    Xs = spec.field_matrix(y)
    out = np.zeros_like(L)
    for k in range(L.shape[0]):
        sol, *_ = np.linalg.lstsq(Xs, (np.eye(spec.m) - D[k]) @ v, rcond=None)
        out[k] = sol
    return out


# ---------------------------------------------------------------------------
# Families and verification


def stencil_steps(chart: TorusChart, rel: float = 1e-3) -> np.ndarray:
    """Per-invariant stencil spacing, scaled by the integral's gradient at the seed."""
    spec = chart.spec
    g = np.linalg.norm(spec.integrals_grad(chart.x0), axis=1)
    r = max(1.0, float(np.linalg.norm(chart.x0)))
    return rel * np.maximum(np.abs(chart.levels), np.maximum(g * r, 1e-3))


def stencil_family(chart: TorusChart, h=None, only: Sequence[int] | None = None) -> list[TorusChart]:
    """[chart, chart(f + h_j e_j), chart(f - h_j e_j), ...]."""
    h = stencil_steps(chart) if h is None else np.broadcast_to(np.asarray(h, dtype=float), (chart.spec.q,))
    idx = range(chart.spec.q) if only is None else only
    fam = [chart]
    for j in idx:
        for sgn in (1.0, -1.0):
            f = chart.levels.copy()
            f[j] += sgn * h[j]
            fam.append(chart.at_level(f))
    return fam


def _fit_gradient(levels: np.ndarray, values: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Gradient at ``center`` of a linear-plus-squares fit of values(levels)."""
    d = levels - center
    cols = [np.ones(len(d))] + [d[:, j] for j in range(d.shape[1])] + [d[:, j] ** 2 for j in range(d.shape[1])]
    A = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    return coef[1 : 1 + d.shape[1]]


def verify_action(chart: TorusChart, family: Sequence[TorusChart], mu: np.ndarray, n_samples: int = 32, seed: int = 0) -> dict:
    """Residual max |Z_k⌟ω + dμ_k| (2-forms) or |Z_k - dμ_k⌟Π| (Poisson).

    ``mu`` has shape (len(family), p); dμ is taken from a fit over the
    family's invariant levels and pulled back by dF.
    """
    spec = chart.spec
    mu = np.asarray(mu, dtype=float).reshape(len(family), -1)
    levels = np.array([c.levels for c in family])
    grads = np.array([_fit_gradient(levels, mu[:, k], chart.levels) for k in range(mu.shape[1])])  # (p, q)
    rng = np.random.default_rng(seed)
    pts = chart.embed(rng.random((n_samples, chart.p)))
    dF = spec.integrals_grad(pts.T)  # (q, m, n)
    dmu = np.einsum("kj,jan->kan", grads, dF)  # (p, m, n)
    Xm = spec.field_matrix(pts.T)
    Z = np.einsum("ain,ki->kan", Xm, chart.L)  # (p, m, n)
    if isinstance(spec.structure, Structure2Form):
        W = spec.structure.func(pts.T)
        res = np.einsum("kan,abn->kbn", Z, W) + dmu
    elif isinstance(spec.structure, PoissonBivector):
        Pm = spec.structure.func(pts.T)
        res = Z - np.einsum("kan,abn->kbn", dmu, Pm)
    else:
        raise ModeMismatch("verification needs a structure")
    per = np.max(np.abs(res), axis=(1, 2))
    return {"residuals": per.tolist(), "max": float(per.max()), "passed": bool(per.max() <= spec.tol.action), "dmu_df": grads.tolist()}


# ---------------------------------------------------------------------------
# Normal forms


@dataclass
class NormalFormReport:
    mode: str
    z_names: list[str]
    isotropy: float
    action_angle_residual: float
    magnetic: np.ndarray  # antisymmetric (q, q), in the (θ̃, z) chart at the reference torus
    magnetic_variation: float
    closedness_defect: float | None
    residual: float | None  # after the angle shift (symplectic, superintegrable, poisson)
    structure_matrix: np.ndarray  # shifted (or raw) structure in (θ, z) at the reference seed
    shift_coefficients: np.ndarray | None = None
    passed: bool = True

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "z": self.z_names,
            "isotropy": self.isotropy,
            "action_angle_residual": self.action_angle_residual,
            "magnetic": self.magnetic.tolist(),
            "magnetic_variation": self.magnetic_variation,
            "closedness_defect": self.closedness_defect,
            "residual": self.residual,
            "structure_matrix": self.structure_matrix.tolist(),
            "passed": self.passed,
        }


def _check_mode(chart: TorusChart, mode: str) -> None:
    spec = chart.spec
    st = spec.structure
    if mode not in MODES:
        raise ModeMismatch(f"unknown mode '{mode}'")
    if spec.hamiltonians is None:
        raise ModeMismatch("normal forms need declared Hamiltonians")
    if mode == "poisson":
        if not isinstance(st, PoissonBivector):
            raise ModeMismatch("poisson mode needs a Poisson bivector")
        return
    if not isinstance(st, Structure2Form):
        raise ModeMismatch(f"{mode} mode needs a 2-form")
    check_dimension_bound(chart)
    if mode == "general-2form":
        return
    if structure_rank(st, chart.x0) < spec.m:
        raise ModeMismatch(f"{mode} mode needs a nondegenerate 2-form")
    if mode in ("symplectic", "superintegrable"):
        from .geometry import numerically_zero

        pts = chart.x0 + 0.1 * sample_points(spec.m, 16, seed=9)
        if numerically_zero(list(st.d().values()), spec.m, spec.basis, points=pts) > 1e-9:
            raise ModeMismatch(f"{mode} mode needs a closed 2-form")
        if mode == "symplectic" and spec.p != spec.q:
            raise ModeMismatch("symplectic mode needs p = q = m/2; use superintegrable")
        if mode == "superintegrable" and spec.p >= spec.q:
            raise ModeMismatch("superintegrable mode needs p < q")


def _choose_extras(dmu_df: np.ndarray) -> list[int]:
    """Invariant indices completing μ to coordinates (greedy, largest volume)."""
    p, q = dmu_df.shape
    chosen: list[int] = []
    for _ in range(q - p):
        best, best_j = -1.0, None
        for j in range(q):
            if j in chosen:
                continue
            rows = [dmu_df] + [np.eye(q)[[c]] for c in chosen + [j]]
            s = np.linalg.svd(np.vstack(rows), compute_uv=False)
            if s[-1] > best:
                best, best_j = s[-1], j
        chosen.append(best_j)
    return chosen


def _monomials(q: int, maxdeg: int) -> list[tuple[int, ...]]:
    out = []
    for d in range(1, maxdeg + 1):
        for combo in combinations_with_replacement(range(q), d):
            e = [0] * q
            for c in combo:
                e[c] += 1
            out.append(tuple(e))
    return out


def _mono_grad(exps, u: np.ndarray) -> np.ndarray:
    """∂φ_α/∂u_l for each monomial, shape (n_mono, q)."""
    g = np.zeros((len(exps), len(u)))
    for a, e in enumerate(exps):
        for l in range(len(u)):
            if e[l] == 0:
                continue
            v = float(e[l])
            for j, ej in enumerate(e):
                v *= u[j] ** (ej - (j == l))
            g[a, l] = v
    return g


def assemble_normal_form(chart: TorusChart, mode: str, family: Sequence[TorusChart] | None = None, n_samples: int = 8, seed: int = 0, maxdeg: int = 3) -> NormalFormReport:
    """Express the structure in the chart frame and extract the normal-form blocks.

    Coordinates: θ̃ from the chart, z = (μ_1..μ_p, extra invariants). In
    symplectic, superintegrable and Poisson modes a shift θ = θ̃ - a(z),
    with a polynomial in z, removes what can be removed; the residual
    against the model form is then reported.
    """
    _check_mode(chart, mode)
    spec = chart.spec
    p, q, m = spec.p, spec.q, spec.m
    if q < p:
        raise ModeMismatch("actions are over-determined (p > q); use coaffine_chart")
    fam = list(family) if family is not None else stencil_family(chart)
    if fam[0] is not chart:
        fam = [chart] + [c for c in fam if c is not chart]
    rng = np.random.default_rng(seed)
    thetas = np.vstack([np.zeros(p), rng.random((n_samples - 1, p))])
    poisson = mode == "poisson"

    records = []
    extras = None
    for c in fam:
        pts, E = c.frame(thetas)
        rho = np.einsum("ki,ian->kan", c.L, spec.hamiltonians_grad(pts.T))  # (p, m, n)
        dmu_df = np.einsum("kan,nal->nkl", rho, E[:, :, p:])  # (n, p, q)
        if extras is None:
            extras = _choose_extras(dmu_df[0])
        Jz = np.concatenate([dmu_df, np.repeat(np.eye(q)[extras][None], len(pts), axis=0)], axis=1)  # ∂z/∂f (n, q, q)
        if poisson:
            Pm = np.moveaxis(spec.structure.func(pts.T), 2, 0)
            D = np.linalg.inv(E)
            N = np.zeros((len(pts), m, m))
            N[:, :p, :p] = np.eye(p)
            N[:, p:, p:] = Jz
            ND = N @ D
            S = ND @ Pm @ np.transpose(ND, (0, 2, 1))
        else:
            W = np.moveaxis(spec.structure.func(pts.T), 2, 0)
            M = np.zeros((len(pts), m, m))
            M[:, :p, :p] = np.eye(p)
            M[:, p:, p:] = np.linalg.inv(Jz)
            EM = E @ M
            S = np.transpose(EM, (0, 2, 1)) @ W @ EM
        records.append({"chart": c, "S": S, "dmu_df": dmu_df.mean(axis=0)})

    # z values of the family: μ by the trapezoid rule along each stencil leg
    ref = records[0]
    z0 = np.concatenate([np.zeros(p), chart.levels[extras]])
    zs = []
    for r in records:
        df = r["chart"].levels - chart.levels
        dmu = 0.5 * (ref["dmu_df"] + r["dmu_df"]) @ df
        zs.append(np.concatenate([dmu, r["chart"].levels[extras]]))
    zs = np.array(zs)

    S0 = ref["S"]
    isotropy = float(max(np.max(np.abs(r["S"][:, :p, :p])) for r in records))
    if poisson:
        ideal_tz = np.zeros((p, q))
        ideal_tz[:, :p] = -np.eye(p)  # Π^{θ z} = -Π^{z θ}
        aa = float(max(np.max(np.abs(r["S"][:, :p, p:] - ideal_tz)) for r in records))
    else:
        ideal_tz = np.zeros((p, q))
        ideal_tz[:, :p] = -np.eye(p)
        aa = float(max(np.max(np.abs(r["S"][:, :p, p:] - ideal_tz)) for r in records))
    magnetic = S0[:, p:, p:].mean(axis=0)
    mag_var = float(max(np.max(np.abs(r["S"][:, p:, p:] - r["S"][:, p:, p:].mean(axis=0))) for r in records))

    closed = None
    if not poisson and q >= 3:
        closed = _closedness_defect(records, zs, p)
    elif not poisson:
        closed = 0.0

    residual = None
    coef = None
    final = S0[0].copy()
    if mode in ("symplectic", "superintegrable", "poisson"):
        coef, final, residual = _angle_shift(records, zs, z0, p, q, poisson, maxdeg)
    tol = spec.tol
    passed = isotropy <= tol.isotropy * 10 and aa <= tol.normal_form
    if residual is not None:
        passed = passed and residual <= tol.normal_form
    z_names = [f"mu_{k + 1}" for k in range(p)] + [f"F_{j + 1}" for j in extras]
    return NormalFormReport(mode, z_names, isotropy, aa, magnetic, mag_var, closed, residual, final, coef, passed)


def _closedness_defect(records, zs, p) -> float:
    """|dβ| from centred differences of the zz block across the stencil."""
    q = zs.shape[1]
    B = [r["S"][:, p:, p:].mean(axis=0) for r in records]
    grads = np.zeros((q, q, q))  # ∂_c B_ab
    n_legs = (len(records) - 1) // 2
    for leg in range(n_legs):
        i_plus, i_minus = 1 + 2 * leg, 2 + 2 * leg
        dz = zs[i_plus] - zs[i_minus]
        # the leg moves mainly along one z-direction
        c = int(np.argmax(np.abs(dz)))
        grads[:, :, c] = (B[i_plus] - B[i_minus]) / dz[c]
    worst = 0.0
    for a in range(q):
        for b in range(a + 1, q):
            for c in range(b + 1, q):
                v = grads[b, c, a] + grads[c, a, b] + grads[a, b, c]
                worst = max(worst, abs(float(v)))
    return worst


def _angle_shift(records, zs, z0, p, q, poisson, maxdeg):
    """Least-squares polynomial a(z) killing the removable blocks.

    2-form: new zz block = B + CᵀP - PᵀC with P the θz block and
    C_kl = ∂a_k/∂z_l; entries with an action index are driven to zero.
    Poisson: new θθ block = T - C Q - (C Q)ᵀ with Q the zθ block.
    """
    scale = np.maximum(np.max(np.abs(zs - z0), axis=0), 1e-12)
    exps = _monomials(q, maxdeg)
    nm = len(exps)
    n_unknown = p * nm
    rows, rhs = [], []
    entries = [(a, b) for a in range(q) for b in range(a + 1, q) if a < p] if not poisson else [(a, b) for a in range(p) for b in range(a + 1, p)]
    mats = []
    for r, z in zip(records, zs):
        u = (z - z0) / scale
        G = _mono_grad(exps, u) / scale[None, :]  # (nm, q)
        for S in r["S"]:
            # C(c) is linear in c: C_kl = sum_alpha c[k, alpha] G[alpha, l]
            basis_C = np.zeros((n_unknown, p, q))
            for k in range(p):
                basis_C[k * nm : (k + 1) * nm, k, :] = G
            if poisson:
                Q = S[p:, :p]  # zθ (q, p)
                T = S[:p, :p]
                lin = np.einsum("ukl,lj->ukj", basis_C, Q)
                delta = -(lin + np.transpose(lin, (0, 2, 1)))
                base = T
            else:
                P = S[:p, p:]  # θz (p, q)
                B = S[p:, p:]
                lin = np.einsum("ukl,kj->ulj", basis_C, P)  # CᵀP
                delta = lin - np.transpose(lin, (0, 2, 1))
                base = B
            for a, b in entries:
                rows.append(delta[:, a, b])
                rhs.append(-base[a, b])
            mats.append((S, basis_C))
    if rows:
        A = np.array(rows)
        coef, *_ = np.linalg.lstsq(A, np.array(rhs), rcond=None)
    else:
        coef = np.zeros(n_unknown)
    # apply the full (nonlinear) change of coordinates and measure
    worst = 0.0
    first = None
    for S, basis_C in mats:
        C = np.einsum("u,ukl->kl", coef, basis_C)
        m = S.shape[0]
        if poisson:
            K = np.eye(m)
            K[:p, p:] = -C
            new = K @ S @ K.T
            ideal = np.zeros((m, m))
            for k in range(p):
                ideal[p + k, k] = 1.0
                ideal[k, p + k] = -1.0
            mask = np.ones((m, m), dtype=bool)
            mask[p + p :, p + p :] = False  # extras block b_ij is allowed
        else:
            M2 = np.eye(m)
            M2[:p, p:] = C
            new = M2.T @ S @ M2
            ideal = np.zeros((m, m))
            for k in range(p):
                ideal[k, p + k] = -1.0
                ideal[p + k, k] = 1.0
            mask = np.ones((m, m), dtype=bool)
            mask[p + p :, p + p :] = False  # reduced-base block of superintegrable systems
        worst = max(worst, float(np.max(np.abs((new - ideal)[mask]))))
        if first is None:
            first = new
    return coef.reshape(p, nm), first, worst


# ---------------------------------------------------------------------------
# Co-affine charts


def coaffine_chart(charts: Sequence[TorusChart], actions: np.ndarray, base_dim: int | None = None, rel: float = 1e-8) -> CoaffineChart:
    """Rank of the action map over a family of tori.

    The base is parametrised by the affine span of the charts' invariant
    levels (dimension ``base_dim``, inferred when omitted). μ is fitted
    linearly plus squares in those coordinates and the rank of its Jacobian
    decided at ``rel`` relative to the largest singular value. The rank is
    also measured on every sub-family that leaves out one torus; a change
    raises :class:`RankUnstable`.
    """
    acts = np.asarray(actions, dtype=float)
    levels = np.array([c.levels for c in charts])
    center = levels.mean(axis=0)
    U, s, Vt = np.linalg.svd(levels - center, full_matrices=False)
    if base_dim is None:
        base_dim = int(np.sum(s > rel * max(s[0], 1e-300))) if s.size else 0
    coords = (levels - center) @ Vt[:base_dim].T

    def rank_of(idx):
        c = coords[idx]
        cols = [np.ones(len(c))] + [c[:, j] for j in range(base_dim)]
        if len(c) > 2 * base_dim + 1:
            cols += [c[:, j] ** 2 for j in range(base_dim)]
        A = np.stack(cols, axis=1)
        coef, *_ = np.linalg.lstsq(A, acts[idx], rcond=None)
        J = coef[1 : 1 + base_dim].T  # (p, base_dim)
        sv = np.linalg.svd(J, compute_uv=False) if J.size else np.zeros(0)
        r = int(np.sum(sv > rel * sv[0])) if sv.size and sv[0] > 0 else 0
        return r, sv

    rank, sv = rank_of(np.arange(len(charts)))
    if len(charts) > base_dim + 2:
        for drop in range(len(charts)):
            idx = np.array([i for i in range(len(charts)) if i != drop])
            r2, _ = rank_of(idx)
            if r2 != rank:
                raise RankUnstable(f"action-map rank {r2} without torus {drop} differs from {rank}")
    ids = [c.meta.get("id", f"torus{i}") for i, c in enumerate(charts)]
    return CoaffineChart(ids, acts, base_dim, rank, sv)


def restricted_rank(omega: Structure2Form, x, constraints: Sequence[np.ndarray], rel: float = 1e-8) -> int:
    """Rank of ω restricted to the common kernel of the constraint covectors."""
    W = np.asarray(omega.func(np.asarray(x, dtype=float)))
    C = np.atleast_2d(np.asarray(constraints, dtype=float))
    _, s, Vt = np.linalg.svd(C)
    r = int(np.sum(s > rel * s[0]))
    K = Vt[r:].T
    return _numerical_rank(K.T @ W @ K, rel)
