"""Torus averaging and executable checks of the conservation property.

Tensors are pulled into the chart frame ``(∂θ_1..∂θ_p, ∂f_1..∂f_q)``:
upper indices are contracted with ``E^{-1}``, lower ones with ``E``. In
that frame the torus action is a coordinate translation, so an invariant
tensor has θ-independent components and averaging is a plain mean over a
uniform angle grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .geometry import TensorField, VectorFieldExpr, lie_derivative
from .torusflow import SystemSpec, TorusChart


class HypothesisViolated(ValueError):
    """L_{X_i} G does not vanish, so no conservation is predicted."""

    def __init__(self, message, norm: float):
        self.norm = norm
        super().__init__(message)


class NotConformal(ValueError):
    """No scalar factor f with L_X G = f G fits (within tolerance, smoothly)."""


@dataclass
class TorusAverageReport:
    tensor_id: str
    grid: int
    average: np.ndarray  # frame components, shape (m,)*(h+k)
    deviation: float  # max over grid of max-abs component of G - Ḡ
    passed: bool
    lie_norm: float | None = None
    factors: list[float] | None = None
    fourier_max: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.grid < 8:
            raise ValueError("grid resolution must be at least 8 per angle")
        if self.deviation < 0:
            raise ValueError("deviation norm must be nonnegative")

    def to_dict(self) -> dict:
        out = {
            "tensor": self.tensor_id,
            "grid": self.grid,
            "average": np.asarray(self.average).tolist(),
            "deviation": self.deviation,
            "passed": self.passed,
        }
        if self.lie_norm is not None:
            out["lie_norm"] = self.lie_norm
        if self.factors is not None:
            out["factors"] = self.factors
        if self.fourier_max is not None:
            out["fourier_max"] = self.fourier_max
        out.update(self.extra)
        return out


# ---------------------------------------------------------------------------
# Frame pull-back and averaging


def _to_frame(vals: np.ndarray, h: int, k: int, E: np.ndarray, D: np.ndarray) -> np.ndarray:
    """vals (n, m, ..., m) ambient components -> frame components."""
    out = vals
    for axis in range(1, h + k + 1):
        T = D if axis <= h else np.transpose(E, (0, 2, 1))
        # contract index ``axis`` with T[n, new, old]
        out = np.moveaxis(out, axis, -1)
        out = np.einsum("n...o,nwo->n...w", out, T)
        out = np.moveaxis(out, -1, axis)
    return out


def frame_samples(G: TensorField, chart: TorusChart, grid: int = 32, frame=None):
    """Frame components of ``G`` on the uniform angle grid, shape (n,) + (m,)*(h+k)."""
    th = chart.grid(grid)
    pts, E = chart.frame(th) if frame is None else frame
    vals = np.asarray(G.func(pts.T), dtype=float)
    vals = np.moveaxis(vals, -1, 0) if G.h + G.k else vals.reshape(-1)
    D = np.linalg.inv(E)
    return _to_frame(vals, G.h, G.k, E, D), pts


def average_samples(samples: np.ndarray) -> np.ndarray:
    """Trapezoid (= mean) over the periodic grid, pairwise summation."""
    return np.add.reduce(samples, axis=0) / samples.shape[0]


def torus_average(G: TensorField, chart: TorusChart, grid: int = 32) -> np.ndarray:
    """Averaged frame components Ḡ (constant in θ by construction)."""
    samples, _ = frame_samples(G, chart, grid)
    return average_samples(samples)


def deviation_norm(samples: np.ndarray) -> float:
    return float(np.max(np.abs(samples - average_samples(samples)))) if samples.size else 0.0


def fourier_max(samples: np.ndarray, p: int, grid: int) -> float:
    """Largest nonzero-frequency Fourier coefficient of any frame component."""
    arr = samples.reshape((grid,) * p + samples.shape[1:])
    F = np.fft.fftn(arr, axes=tuple(range(p))) / grid**p
    F[(0,) * p] = 0.0
    return float(np.max(np.abs(F))) if F.size else 0.0


def _lie_norm(G: TensorField, fields, points: np.ndarray) -> float:
    worst = 0.0
    for X in fields:
        LG = lie_derivative(X, G)
        v = np.asarray(LG.func(points.T), dtype=float)
        worst = max(worst, float(np.max(np.abs(v))) if v.size else 0.0)
    return worst


def conservation_check(
    G: TensorField,
    spec: SystemSpec,
    chart: TorusChart,
    grid: int = 32,
    irrational: bool = False,
    tensor_id: str = "G",
    keep_field: bool = False,
) -> TorusAverageReport:
    """Check that an invariant tensor is invariant under the torus action.

    Precondition (checked): L_{X_i} G vanishes on the torus for every i, or
    only for X_1 when ``irrational`` is set. Then the deviation of G from its
    torus average is measured in the chart frame.
    """
    th = chart.grid(grid)
    frame = chart.frame(th)
    pts = frame[0]
    fields = spec.fields[:1] if irrational else spec.fields
    norm = _lie_norm(G, fields, pts)
    if norm > spec.tol.hypothesis:
        raise HypothesisViolated(f"max |L_X G| = {norm:.3e} on the torus exceeds {spec.tol.hypothesis:g}", norm)
    samples, _ = frame_samples(G, chart, grid, frame=frame)
    dev = deviation_norm(samples)
    fm = fourier_max(samples, chart.p, grid)
    rep = TorusAverageReport(tensor_id, grid, average_samples(samples), dev, dev <= spec.tol.avg, lie_norm=norm, fourier_max=fm)
    if keep_field:
        # per grid point max-abs deviation, row-major over the angle grid
        d = np.abs(samples - rep.average).reshape(len(samples), -1)
        rep.extra["deviation_field"] = (np.max(d, axis=1) if d.shape[1] else np.zeros(len(samples))).tolist()
    return rep


def _spectral_derivative(arr: np.ndarray, axis: int, grid: int) -> np.ndarray:
    k = np.fft.fftfreq(grid, d=1.0 / grid)
    if grid % 2 == 0:
        k[grid // 2] = 0.0
    shape = [1] * arr.ndim
    shape[axis] = grid
    F = np.fft.fft(arr, axis=axis)
    return np.real(np.fft.ifft(F * (2j * np.pi * k.reshape(shape)), axis=axis))


def _fit_factor(L: np.ndarray, G: np.ndarray, tol: float, what: str) -> tuple[np.ndarray, float]:
    """Per-point f with L ≈ f G, from the largest-magnitude component of G."""
    n = G.shape[0]
    Gf = G.reshape(n, -1)
    Lf = L.reshape(n, -1)
    f = np.zeros(n)
    worst = 0.0
    for i in range(n):
        j = int(np.argmax(np.abs(Gf[i])))
        if abs(Gf[i, j]) < 1e-8:
            if np.max(np.abs(Lf[i])) > tol:
                raise NotConformal(f"{what}: G vanishes at a grid point where L G does not")
            f[i] = np.nan
            continue
        f[i] = Lf[i, j] / Gf[i, j]
        worst = max(worst, float(np.max(np.abs(Lf[i] - f[i] * Gf[i]))))
    if worst > tol:
        raise NotConformal(f"{what}: residual |L G - f G| = {worst:.3e}")
    return f, worst


def _smooth(f: np.ndarray, p: int, grid: int) -> float:
    """Share of the factor in the upper half of the resolved frequencies."""
    if np.any(~np.isfinite(f)):
        return np.inf
    arr = f.reshape((grid,) * p)
    F = np.abs(np.fft.fftn(arr)) / grid**p
    k = np.abs(np.fft.fftfreq(grid, d=1.0 / grid))
    high = np.zeros(F.shape, dtype=bool)
    for ax in range(p):
        shape = [1] * p
        shape[ax] = grid
        high |= (k >= grid / 4).reshape(shape)
    return float(np.max(F[high]) / max(1.0, float(np.max(np.abs(arr)))))


def conformal_check(G: TensorField, spec: SystemSpec, chart: TorusChart, grid: int = 32, tensor_id: str = "G") -> TorusAverageReport:
    """Conformal invariance under the X_i, then under the torus generators."""
    th = chart.grid(grid)
    frame = chart.frame(th)
    pts = frame[0]
    Gv = np.asarray(G.func(pts.T), dtype=float)
    Gv = np.moveaxis(Gv, -1, 0)
    tol = spec.tol
    factors = []
    for i, X in enumerate(spec.fields):
        Lv = np.moveaxis(np.asarray(lie_derivative(X, G).func(pts.T), dtype=float), -1, 0)
        f, _ = _fit_factor(Lv, Gv, tol.conformal, f"X_{i + 1}")
        if _smooth(f, chart.p, grid) > 1e-6:
            raise NotConformal(f"X_{i + 1}: the factor is not smooth on the torus")
        factors.append(float(np.nanmean(f)))
    samples, _ = frame_samples(G, chart, grid, frame=frame)
    arr = samples.reshape((grid,) * chart.p + samples.shape[1:])
    g_est = []
    worst = 0.0
    for j in range(chart.p):
        dG = _spectral_derivative(arr, j, grid).reshape(samples.shape)
        g, res = _fit_factor(dG, samples, tol.conformal_generator, f"Z_{j + 1}")
        g_est.append(float(np.nanmean(g)))
        worst = max(worst, res)
    dev = deviation_norm(samples)
    rep = TorusAverageReport(tensor_id, grid, average_samples(samples), dev, worst <= tol.conformal_generator, factors=factors)
    rep.extra = {"generator_factors": g_est, "generator_residual": worst}
    return rep


# ---------------------------------------------------------------------------
# Irrationality


def continued_fraction(x: float, max_terms: int = 64) -> list[int]:
    out = []
    for _ in range(max_terms):
        a = math.floor(x)
        out.append(a)
        frac = x - a
        if frac < 1e-15:
            break
        x = 1.0 / frac
        if x > 1e16:
            break
    return out


def convergents(x: float, qmax: int = 10_000) -> list[tuple[int, int, float]]:
    """(p, q, |x - p/q|) for the convergents of x with q <= qmax."""
    cf = continued_fraction(x)
    h0, h1 = 1, cf[0]
    k0, k1 = 0, 1
    out = [(h1, k1, abs(x - h1 / k1))]
    for a in cf[1:]:
        h0, h1 = h1, a * h1 + h0
        k0, k1 = k1, a * k1 + k0
        if k1 > qmax:
            break
        out.append((h1, k1, abs(x - h1 / k1)))
    return out


def probe_rotation_vector(nu, qmax: int = 10_000, rel: float = 1e-9) -> dict:
    """Continued-fraction analysis of the ratios nu_j / nu_ref."""
    nu = np.asarray(nu, dtype=float)
    ref = int(np.flatnonzero(np.abs(nu) > 0)[0])
    ratios = []
    for j in range(len(nu)):
        if j == ref:
            continue
        r = nu[j] / nu[ref]
        sgn = -1 if r < 0 else 1
        conv = convergents(abs(r), qmax)
        resonant = [(sgn * pp, qq, err) for pp, qq, err in conv if err < rel / qq**2]
        best = resonant[0] if resonant else (sgn * conv[-1][0], conv[-1][1], conv[-1][2])
        ratios.append(
            {
                "index": j,
                "ratio": r,
                "resonant": bool(resonant),
                "best": [best[0], best[1]],
                "error": best[2],
                "convergents": [[sgn * pp, qq, err] for pp, qq, err in conv],
            }
        )
    return {"reference": ref, "ratios": ratios, "resonant": any(r["resonant"] for r in ratios)}


def irrationality_probe(chart: TorusChart, X1: VectorFieldExpr, qmax: int = 10_000) -> dict:
    """Rotation vector of X1 in the period-1 angle frame and its resonances."""
    spec = chart.spec
    Z = spec.field_matrix(chart.x0) @ chart.L.T
    nu, *_ = np.linalg.lstsq(Z, np.asarray(X1(chart.x0), dtype=float), rcond=None)
    out = probe_rotation_vector(nu, qmax)
    out["rotation_vector"] = nu.tolist()
    return out


def rational_ratio(r: dict) -> Fraction:
    return Fraction(r["best"][0], r["best"][1])
