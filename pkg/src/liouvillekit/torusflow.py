"""Commuting flows and Liouville torus charts.

The chart through a seed ``x0`` is the map ``θ -> φ^{θ L}(x0)`` where the
rows of ``L`` generate the return lattice of the joint flow
``φ^t = exp(t_1 X_1 + ... + t_p X_p)``. Because the fields commute this is
the same as composing the individual flows; :func:`compose_flows` does that
explicitly and is used to check the equality.

Nearby tori are reached through an affine section
``s(f) = x0 + G c`` with ``G = [∇F_1(x0) ... ∇F_q(x0)]`` solved so that
``F(s(f)) = f``. The resulting coordinates ``(θ, f)`` carry the frame used by
the action and averaging code.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import lattice
from .exprcore import DEFAULT_BASIS, Expr, IrrationalBasis, compile_exprs, diff_expr
from .geometry import PoissonBivector, Structure2Form, VectorFieldExpr, sample_points
from .tolerances import DEFAULT_TOLERANCES, Tolerances

METHOD = "DOP853"


class StepFailure(RuntimeError):
    """The integrator gave up (stiffness, blow-up or non-finite values)."""


class DomainExit(RuntimeError):
    """The trajectory left the configured domain box."""


class NoReturnFound(RuntimeError):
    """No return lattice of full rank within the search horizon."""


class DegenerateSeed(ValueError):
    """Nondegeneracy fails at the seed (singular level set)."""


class SystemValidationError(ValueError):
    """A declared system violates commutation or first-integral conditions."""


# ---------------------------------------------------------------------------
# System declaration


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """An integrable system of type (p, q) declared by expressions."""

    coords: tuple[str, ...]
    fields: tuple[VectorFieldExpr, ...]
    integrals: tuple[Expr, ...] = ()
    hamiltonians: tuple[Expr, ...] | None = None
    structure: Structure2Form | PoissonBivector | None = None
    basis: IrrationalBasis = DEFAULT_BASIS
    box: float = 1e6
    tol: Tolerances = DEFAULT_TOLERANCES

    def __post_init__(self):
        m = len(self.coords)
        if len(set(self.coords)) != m or m == 0:
            raise ValueError("coordinates must be nonempty and unique")
        if not self.fields:
            raise ValueError("at least one vector field is required")
        for X in self.fields:
            if X.m != m:
                raise ValueError("vector field dimension does not match the coordinates")
        if self.integrals and len(self.fields) + len(self.integrals) != m:
            raise ValueError(f"p + q = {len(self.fields) + len(self.integrals)} must equal m = {m}")
        if self.hamiltonians is not None and len(self.hamiltonians) != len(self.fields):
            raise ValueError("one Hamiltonian per vector field is required")
        if self.structure is not None and self.structure.m != m:
            raise ValueError("structure dimension does not match the coordinates")

    @property
    def m(self) -> int:
        return len(self.coords)

    @property
    def p(self) -> int:
        return len(self.fields)

    @property
    def q(self) -> int:
        return len(self.integrals)

    @cached_property
    def integrals_func(self):
        return compile_exprs(self.integrals, self.basis)

    @cached_property
    def integrals_grad(self):
        m, q = self.m, self.q
        f = compile_exprs([diff_expr(F, a) for F in self.integrals for a in range(m)], self.basis)

        def grad(x):
            v = f(x)
            return v.reshape((q, m) + v.shape[1:])

        return grad

    @cached_property
    def hamiltonians_grad(self):
        if self.hamiltonians is None:
            raise ValueError("no Hamiltonians declared")
        m, p = self.m, self.p
        f = compile_exprs([diff_expr(H, a) for H in self.hamiltonians for a in range(m)], self.basis)

        def grad(x):
            v = f(x)
            return v.reshape((p, m) + v.shape[1:])

        return grad

    def field_matrix(self, x) -> np.ndarray:
        """Columns X_i(x); shape (m, p) or (m, p, n)."""
        return np.stack([np.asarray(X(x), dtype=float) for X in self.fields], axis=1)

    def commutator_defect(self, points) -> float:
        """max |[X_i, X_j]| over points, with [X,Y] = DY·X - DX·Y."""
        pts = np.asarray(points, dtype=float).T
        worst = 0.0
        for i in range(self.p):
            for j in range(i + 1, self.p):
                Xi, Xj = self.fields[i], self.fields[j]
                c = np.einsum("abn,bn->an", Xj.jacobian_func(pts), Xi(pts)) - np.einsum("abn,bn->an", Xi.jacobian_func(pts), Xj(pts))
                worst = max(worst, float(np.max(np.abs(c))))
        return worst

    def first_integral_defect(self, points) -> float:
        """max |X_i(F_j)| over points."""
        if not self.integrals:
            return 0.0
        pts = np.asarray(points, dtype=float).T
        dF = self.integrals_grad(pts)
        worst = 0.0
        for X in self.fields:
            worst = max(worst, float(np.max(np.abs(np.einsum("jan,an->jn", dF, X(pts))))))
        return worst

    def validate(self, x0, n_points: int = 32, radius: float = 0.1, seed: int = 0) -> dict[str, float]:
        """Check commutation and first integrals near ``x0`` and nondegeneracy at ``x0``."""
        x0 = np.asarray(x0, dtype=float)
        scale = radius * max(1.0, float(np.max(np.abs(x0))))
        pts = x0 + sample_points(self.m, n_points, seed=seed, scale=scale)
        pts = np.vstack([x0, pts])
        comm = self.commutator_defect(pts)
        fint = self.first_integral_defect(pts)
        if comm > self.tol.commute:
            raise SystemValidationError(f"fields do not commute: max |[X_i,X_j]| = {comm:.3e}")
        if fint > self.tol.firstint:
            raise SystemValidationError(f"declared integrals are not preserved: max |X_i(F_j)| = {fint:.3e}")
        check_nondegenerate(self, x0)
        return {"commute": comm, "firstint": fint}


def _numerical_rank(mat: np.ndarray, rel: float = 1e-8) -> int:
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rel * s[0]))


def check_nondegenerate(spec: SystemSpec, x0) -> None:
    x0 = np.asarray(x0, dtype=float)
    Xm = spec.field_matrix(x0)
    if np.max(np.abs(Xm)) == 0 or _numerical_rank(Xm) < spec.p:
        raise DegenerateSeed("X_1 ∧ ... ∧ X_p vanishes at the seed")
    if spec.q:
        dF = spec.integrals_grad(x0)
        if np.max(np.abs(dF)) == 0 or _numerical_rank(dF) < spec.q:
            raise DegenerateSeed("dF_1 ∧ ... ∧ dF_q vanishes at the seed")


# ---------------------------------------------------------------------------
# Integration


def _run(fun, y0, t1, rtol, atol, box, dense=False):
    def leave(t, y):
        return box - np.max(np.abs(y))

    leave.terminal = True
    try:
        sol = solve_ivp(fun, (0.0, t1), y0, method=METHOD, rtol=rtol, atol=atol, dense_output=dense, events=leave)
    except (FloatingPointError, ZeroDivisionError, OverflowError) as exc:
        raise StepFailure(str(exc)) from exc
    if sol.status == 1:
        raise DomainExit(f"trajectory left the box |x| <= {box:g} at t = {sol.t_events[0][0]:.6g}")
    if sol.status != 0 or not np.all(np.isfinite(sol.y[:, -1])):
        raise StepFailure(sol.message)
    return sol


def integrate_flow(
    X: VectorFieldExpr,
    x0,
    t: float,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    box: float = 1e6,
) -> np.ndarray:
    """φ^t_X(x0) by an adaptive embedded Runge-Kutta scheme (DOP853)."""
    x0 = np.asarray(x0, dtype=float)
    if t == 0:
        return x0.copy()
    sol = _run(lambda s, y: t * X.func(y), x0, 1.0, rtol, atol, box)
    return sol.y[:, -1]


def joint_flow(
    fields: Sequence[VectorFieldExpr],
    points,
    times,
    variational: bool = False,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    box: float = 1e6,
):
    """Joint flow ``exp(sum_i t_i X_i)`` applied to a batch.

    ``points`` has shape (n, m) (or (m,)), ``times`` shape (n, p) (or (p,)).
    All trajectories are integrated together over a rescaled unit time.
    With ``variational`` the derivative ``Dφ`` (n, m, m) is returned too.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    tt = np.atleast_2d(np.asarray(times, dtype=float))
    single = np.ndim(points) == 1 and np.ndim(times) == 1
    n, m = pts.shape
    if tt.shape[0] == 1 and n > 1:
        tt = np.repeat(tt, n, axis=0)
    if pts.shape[0] == 1 and tt.shape[0] > 1:
        pts = np.repeat(pts, tt.shape[0], axis=0)
        n = pts.shape[0]
    coef = tt.T  # (p, n)

    if not variational:

        def rhs(s, y):
            x = y.reshape(m, n)
            v = np.zeros((m, n))
            for i, X in enumerate(fields):
                v += coef[i] * X.func(x)
            return v.ravel()

        y0 = pts.T.ravel()
    else:

        def rhs(s, y):
            x = y[: m * n].reshape(m, n)
            V = y[m * n :].reshape(m, m, n)
            v = np.zeros((m, n))
            J = np.zeros((m, m, n))
            for i, X in enumerate(fields):
                v += coef[i] * X.func(x)
                J += coef[i] * X.jacobian_func(x)
            dV = np.einsum("abn,bcn->acn", J, V)
            return np.concatenate([v.ravel(), dV.ravel()])

        V0 = np.repeat(np.eye(m)[:, :, None], n, axis=2)
        y0 = np.concatenate([pts.T.ravel(), V0.ravel()])
    if not np.any(tt):
        out = pts.copy()
        D = np.repeat(np.eye(m)[None], n, axis=0)
    else:
        sol = _run(rhs, y0, 1.0, rtol, atol, box)
        y = sol.y[:, -1]
        out = y[: m * n].reshape(m, n).T
        if variational:
            D = np.moveaxis(y[m * n :].reshape(m, m, n), 2, 0)
    if single:
        out = out[0]
        if variational:
            D = D[0]
    return (out, D) if variational else out


def compose_flows(
    fields: Sequence[VectorFieldExpr],
    x0,
    t: Sequence[float],
    order: Sequence[int] | None = None,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> np.ndarray:
    """Apply the flows one after another; ``order[0]`` is applied first."""
    order = list(range(len(fields)))[::-1] if order is None else list(order)
    x = np.asarray(x0, dtype=float)
    for i in order:
        x = integrate_flow(fields[i], x, float(t[i]), rtol=rtol, atol=atol)
    return x


# ---------------------------------------------------------------------------
# Return lattice


def _refine_return(spec: SystemSpec, x0, t0, target=None, maxit: int = 25):
    """Gauss-Newton on t so that φ^t(x0) = target (default x0)."""
    x0 = np.asarray(x0, dtype=float)
    target = x0 if target is None else np.asarray(target, dtype=float)
    t = np.array(t0, dtype=float)
    tol = spec.tol
    scale = max(1.0, float(np.max(np.abs(target))))
    best = (np.inf, t.copy())
    for _ in range(maxit):
        x = joint_flow(spec.fields, x0, t, rtol=tol.frame_rtol, atol=tol.frame_atol, box=spec.box)
        r = x - target
        nr = float(np.max(np.abs(r)))
        if nr < best[0]:
            best = (nr, t.copy())
        if nr < 1e-12 * scale:
            break
        J = spec.field_matrix(x)
        dt, *_ = np.linalg.lstsq(J, -r, rcond=None)
        if float(np.max(np.abs(dt))) < 1e-14 * max(1.0, float(np.max(np.abs(t)))):
            break
        t = t + dt
    return best[1], best[0]


def _period_estimate(X: VectorFieldExpr, x0) -> float:
    speed = float(np.linalg.norm(X(x0)))
    return 2 * np.pi * max(float(np.linalg.norm(x0)), 1.0) / max(speed, 1e-300)


def _scan_returns(spec: SystemSpec, coeffs: np.ndarray, x0: np.ndarray, want: int, horizon_factor: float = 50.0):
    """Near-returns of the flow of sum_i c_i X_i, refined to lattice vectors."""
    Y = VectorFieldExpr(tuple(_combine(spec.fields, coeffs)), spec.basis) if np.count_nonzero(coeffs) > 1 else None
    if Y is None:
        i = int(np.flatnonzero(coeffs)[0])
        Y = spec.fields[i].scaled(float(coeffs[i])) if coeffs[i] != 1 else spec.fields[i]
    T_est = _period_estimate(Y, x0)
    horizon = horizon_factor * T_est
    tol = spec.tol
    found: list[np.ndarray] = []
    y = x0.copy()
    t_start = 0.0
    dmax = 0.0
    prev_d = np.array([np.inf, np.inf])
    prev_t = np.array([-1.0, 0.0])
    ts = np.linspace(0.0, T_est, 401)
    while t_start < horizon and len(found) < want:
        sol = _run(lambda s, z: Y.func(z), y, T_est, tol.rtol, tol.atol, spec.box, dense=True)
        d = np.linalg.norm(sol.sol(ts).T - x0, axis=1)
        y = sol.y[:, -1]
        full_d = np.concatenate([prev_d, d[1:]])
        full_t = np.concatenate([prev_t, t_start + ts[1:]])
        for k in range(1, len(full_d) - 1):
            dk = full_d[k]
            dmax = max(dmax, dk)
            if dk <= full_d[k - 1] and dk < full_d[k + 1] and dk < 0.05 * dmax:
                t_vec, res = _refine_return(spec, x0, full_t[k] * coeffs)
                if res <= tol.ret and np.linalg.norm(t_vec) > 1e-6:
                    found.append(t_vec)
                    if len(found) >= want:
                        break
        prev_d, prev_t = full_d[-2:], full_t[-2:]
        t_start += T_est
    return found


def _combine(fields, coeffs):
    from .exprcore import Const, add, mul
    from fractions import Fraction

    comps = []
    m = fields[0].m
    for a in range(m):
        e = None
        for c, X in zip(coeffs, fields):
            if c == 0:
                continue
            term = mul(Const(Fraction(float(c))), X.components[a])
            e = term if e is None else add(e, term)
        comps.append(e)
    return comps


def _in_lattice(t: np.ndarray, L: np.ndarray, tol: float = 1e-6) -> bool:
    c = np.linalg.solve(L.T, t)
    return bool(np.max(np.abs(c - np.rint(c))) < tol)


def _completion(spec: SystemSpec, x0: np.ndarray, L: np.ndarray) -> list[np.ndarray]:
    """Lattice vectors inside the fundamental cell of L that L misses."""
    p = L.shape[0]
    if p > 3:
        return []
    n = 16 if p <= 2 else 8
    grid = np.array(np.meshgrid(*[np.arange(n)] * p, indexing="ij")).reshape(p, -1).T  # (n^p, p)
    times = (grid / n) @ L
    tol = spec.tol
    pts = joint_flow(spec.fields, x0, times, rtol=tol.rtol, atol=tol.atol, box=spec.box)
    d = np.linalg.norm(pts - x0, axis=1).reshape((n,) * p)
    dmax = float(d.max())
    extra = []
    for idx in zip(*np.nonzero(d < 0.3 * dmax)):
        if not any(idx):
            continue
        val = d[idx]
        is_min = True
        for ax in range(p):
            for sh in (-1, 1):
                j = list(idx)
                j[ax] = (j[ax] + sh) % n
                if d[tuple(j)] < val:
                    is_min = False
        if not is_min:
            continue
        t0 = (np.array(idx) / n) @ L
        t_vec, res = _refine_return(spec, x0, t0)
        if res <= tol.ret and not _in_lattice(t_vec, L):
            extra.append(t_vec)
    return extra


def find_period_lattice(spec: SystemSpec, x0, seed: int = 0, horizon_factor: float = 50.0) -> np.ndarray:
    """Reduced basis (rows) of the return lattice of the joint flow at ``x0``."""
    x0 = np.asarray(x0, dtype=float)
    check_nondegenerate(spec, x0)
    p = spec.p
    tol = spec.tol
    vecs: list[np.ndarray] = []
    for i in range(p):
        c = np.zeros(p)
        c[i] = 1.0
        vecs += _scan_returns(spec, c, x0, want=2, horizon_factor=horizon_factor)
    rng = np.random.default_rng(seed)
    attempts = 0
    while (not vecs or np.linalg.matrix_rank(np.array(vecs), tol=1e-6) < p) and attempts < 3:
        c = 1.0 + 0.5 * rng.random(p)
        vecs += _scan_returns(spec, c, x0, want=2 * p, horizon_factor=horizon_factor)
        attempts += 1
    if not vecs or np.linalg.matrix_rank(np.array(vecs), tol=1e-6) < p:
        raise NoReturnFound(f"found {len(vecs)} return vectors, rank < {p} within horizon {horizon_factor}·T_est")
    L = lattice.lattice_from_generators(np.array(vecs), p)
    for _ in range(4):
        extra = _completion(spec, x0, L)
        if not extra:
            break
        L = lattice.lattice_from_generators(np.vstack([L] + extra), p)
    L = lattice.pairwise_reduce(L)
    # polish each row and verify the return
    rows = []
    for row in L:
        t_vec, res = _refine_return(spec, x0, row)
        if res > tol.ret:
            raise NoReturnFound(f"lattice vector {row.tolist()} does not return (residual {res:.3e})")
        rows.append(t_vec)
    return np.array(rows)


# ---------------------------------------------------------------------------
# Charts


@dataclass(frozen=True, eq=False)
class TorusChart:
    """Liouville chart of the torus through ``x0``.

    ``L`` rows are lattice vectors in flow time; ``a = L^{-1}`` so that
    ``X_i = sum_j a_ij ∂/∂θ_j``. The section origin and directions are
    shared by all charts of one family.
    """

    spec: SystemSpec
    x0: np.ndarray
    L: np.ndarray
    levels: np.ndarray
    section_origin: np.ndarray
    section_dirs: np.ndarray
    composition: tuple[int, ...]
    meta: dict = field(default_factory=dict)

    @property
    def p(self) -> int:
        return self.L.shape[0]

    @cached_property
    def a(self) -> np.ndarray:
        return np.linalg.inv(self.L)

    def rotation_vector(self, coeffs) -> np.ndarray:
        """Angle-frame velocity of sum_i c_i X_i per unit time."""
        return np.asarray(coeffs, dtype=float) @ self.a

    def embed(self, theta) -> np.ndarray:
        """Torus points for angles ``theta`` (n, p) -> (n, m)."""
        th = np.atleast_2d(np.asarray(theta, dtype=float))
        tol = self.spec.tol
        out = joint_flow(self.spec.fields, self.x0, th @ self.L, rtol=tol.frame_rtol, atol=tol.frame_atol, box=self.spec.box)
        return out[0] if np.ndim(theta) == 1 else out

    def grid(self, n: int) -> np.ndarray:
        """Uniform angle grid (n^p, p), last angle fastest."""
        g = np.meshgrid(*[np.arange(n) / n] * self.p, indexing="ij")
        return np.stack([a.ravel() for a in g], axis=1)

    @cached_property
    def _lookup(self):
        n = 16 if self.p <= 2 else 8
        th = self.grid(n)
        return th, self.embed(th)

    def angles(self, x) -> np.ndarray:
        """θ(x) in [0,1)^p for points on this torus (n, m) -> (n, p)."""
        xs = np.atleast_2d(np.asarray(x, dtype=float))
        th_grid, pts = self._lookup
        out = []
        for y in xs:
            k = int(np.argmin(np.linalg.norm(pts - y, axis=1)))
            t, _ = _refine_return(self.spec, self.x0, th_grid[k] @ self.L, target=y)
            out.append(np.mod(t @ self.a, 1.0))
        th = np.array(out)
        th[th >= 1.0 - 1e-13] = 0.0
        return th[0] if np.ndim(x) == 1 else th

    # -- family -----------------------------------------------------------

    def section(self, f) -> np.ndarray:
        return section_point(self.spec, self.section_origin, self.section_dirs, f)

    def section_derivative(self, s) -> np.ndarray:
        """∂s/∂f = G (DF(s) G)^{-1}, shape (m, q)."""
        G = self.section_dirs
        return G @ np.linalg.inv(self.spec.integrals_grad(s) @ G)

    def at_level(self, f) -> "TorusChart":
        """Chart of the neighbouring torus F = f, lattice continued from this one."""
        f = np.asarray(f, dtype=float)
        s = self.section(f)
        rows = []
        for row in self.L:
            t, res = _refine_return(self.spec, s, row)
            if res > self.spec.tol.ret:
                raise NoReturnFound(f"lattice continuation failed at level {f.tolist()} (residual {res:.3e})")
            rows.append(t)
        return TorusChart(self.spec, s, np.array(rows), f.copy(), self.section_origin, self.section_dirs, self.composition, dict(self.meta))

    def lattice_derivative(self) -> np.ndarray:
        """∂L/∂f with shape (q, p, p): entry [j, k, i] = ∂L_ki/∂f_j."""
        spec = self.spec
        tol = spec.tol
        s = self.x0
        ds = self.section_derivative(s)
        Xs = spec.field_matrix(s)
        out = np.zeros((spec.q, self.p, self.p))
        _, D = joint_flow(spec.fields, np.repeat(s[None], self.p, axis=0), self.L, variational=True, rtol=tol.frame_rtol, atol=tol.frame_atol, box=spec.box)
        for k in range(self.p):
            rhs = (np.eye(spec.m) - D[k]) @ ds  # (m, q)
            sol, *_ = np.linalg.lstsq(Xs, rhs, rcond=None)  # (p, q)
            out[:, k, :] = sol.T
        return out

    def frame(self, theta):
        """Points and coordinate frame of the (θ, f) chart.

        Returns ``(points (n, m), E (n, m, m))`` where the columns of ``E``
        are ∂/∂θ_1..∂/∂θ_p, ∂/∂f_1..∂/∂f_q at each point.
        """
        spec = self.spec
        tol = spec.tol
        th = np.atleast_2d(np.asarray(theta, dtype=float))
        times = th @ self.L
        pts, D = joint_flow(spec.fields, self.x0, times, variational=True, rtol=tol.frame_rtol, atol=tol.frame_atol, box=spec.box)
        pts = np.atleast_2d(pts)
        if D.ndim == 2:
            D = D[None]
        Xm = np.moveaxis(spec.field_matrix(pts.T), 2, 0)  # (n, m, p)
        Z = Xm @ self.L.T  # (n, m, p): Z_k = sum_i L_ki X_i
        ds = self.section_derivative(self.x0)  # (m, q)
        dL = self.lattice_derivative()  # (q, p, p)
        cols = [Z]
        if spec.q:
            # ∂Φ/∂f_j = Dφ ds_j + sum_i (θ dL_j)_i X_i
            dt = np.einsum("nk,jki->nji", th, dL)  # (n, q, p)
            Ef = np.einsum("nab,bj->naj", D, ds) + np.einsum("nmi,nji->nmj", Xm, dt)
            cols.append(Ef)
        E = np.concatenate(cols, axis=2)
        return pts, E


def section_point(spec: SystemSpec, origin, dirs, f, maxit: int = 50) -> np.ndarray:
    """Point s = origin + dirs·c with F(s) = f (Newton)."""
    origin = np.asarray(origin, dtype=float)
    f = np.asarray(f, dtype=float)
    c = np.zeros(dirs.shape[1])
    for _ in range(maxit):
        s = origin + dirs @ c
        r = spec.integrals_func(s) - f
        if np.max(np.abs(r)) < 1e-14 * max(1.0, float(np.max(np.abs(f)))):
            break
        J = spec.integrals_grad(s) @ dirs
        c = c - np.linalg.solve(J, r)
    s = origin + dirs @ c
    if np.max(np.abs(spec.integrals_func(s) - f)) > 1e-10 * max(1.0, float(np.max(np.abs(f)))):
        raise DegenerateSeed(f"section does not reach the level {f.tolist()}")
    return s


def build_chart(spec: SystemSpec, x0, seed: int = 0) -> TorusChart:
    """Liouville chart through ``x0``: lattice, frequencies and section."""
    x0 = np.asarray(x0, dtype=float)
    L = find_period_lattice(spec, x0, seed=seed)
    levels = spec.integrals_func(x0) if spec.q else np.zeros(0)
    G = spec.integrals_grad(x0).T if spec.q else np.zeros((spec.m, 0))
    return TorusChart(
        spec=spec,
        x0=x0,
        L=L,
        levels=np.asarray(levels, dtype=float),
        section_origin=x0,
        section_dirs=G,
        composition=tuple(range(spec.p))[::-1],
        meta={"seed": seed},
    )


def verify_quasiperiodicity(chart: TorusChart, X: VectorFieldExpr, n_samples: int = 64, seed: int = 0) -> float:
    """max over torus samples of |X in the angle frame - its value at the seed|.

    The normal part of X (off the torus) counts toward the residual.
    """
    rng = np.random.default_rng(seed)
    th = np.vstack([np.zeros(chart.p), rng.random((n_samples, chart.p))])
    pts = chart.embed(th)
    Xm = np.moveaxis(chart.spec.field_matrix(pts.T), 2, 0)  # (n, m, p)
    Z = Xm @ chart.L.T
    v = np.asarray(X(pts.T)).T  # (n, m)
    worst = 0.0
    ref = None
    for k in range(len(pts)):
        c, *_ = np.linalg.lstsq(Z[k], v[k], rcond=None)
        normal = float(np.max(np.abs(Z[k] @ c - v[k])))
        if ref is None:
            ref = c
        worst = max(worst, normal, float(np.max(np.abs(c - ref))))
    return worst


def torus_samples(chart: TorusChart, n: int = 16) -> tuple[np.ndarray, np.ndarray]:
    th = chart.grid(n)
    return th, chart.embed(th)


def torus_csv(chart: TorusChart, n: int = 16) -> str:
    """CSV text with columns theta_1..theta_p, then the coordinates."""
    th, pts = torus_samples(chart, n)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"theta_{k + 1}" for k in range(chart.p)] + list(chart.spec.coords))
    for a, b in zip(th, pts):
        w.writerow([f"{v:.17g}" for v in a] + [f"{v:.17g}" for v in b])
    return buf.getvalue()
