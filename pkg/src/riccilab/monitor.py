"""Reduced volume, blow-down stages and the asymptotic-soliton residuals."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import quad, simpson

from .errors import HorizonError, ParameterError
from .lgeodesic import STENCIL, LSolver, ReducedField, _W1, _W2, _laplacian_parts, local_jets
from .models import FlowHistory, ShrinkingSphere, GaussianStatic, sphere_volume
from .splice import RescaledFlow, SplicedFlow, base_points, test_curve_bounds

__all__ = [
    "cutoff",
    "ReducedVolume",
    "ReducedVolumeSeries",
    "reduced_volume",
    "reduced_volume_series",
    "monotonicity_certificate",
    "BlowdownStage",
    "blowdown",
    "StageResiduals",
    "stage_residuals",
    "soliton_residual",
    "conjugate_heat_residual",
    "perelman_v",
    "weighted_gradient_bound",
    "local_bound_witness",
    "DensityLimit",
    "gaussian_density_limit",
    "limit_density",
]


def cutoff(t):
    """Smooth step: 1 on [0, 1], 0 on [2, inf), with ``|chi'| <= 2``."""
    t = np.asarray(t, dtype=float)
    u = np.clip(t - 1.0, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        b = np.where(u < 1, np.exp(-1.0 / np.where(u < 1, 1.0 - u, 1.0)), 0.0)
    return b / (a + b)


# ---------------------------------------------------------------------------
# reduced volume

@dataclass(frozen=True)
class ReducedVolume:
    tau: float
    V: float
    tail: float
    radius: float
    truncated: bool


def _weight(flow, tau, x, l):
    n = flow.n
    G = flow.geom(np.full(x.shape, tau), x)
    return (sphere_volume(n - 1) * (4 * math.pi * tau) ** (-n / 2) * np.exp(-l)
            * G.a * np.abs(G.psi) ** (n - 1)), G


def _truncation_radius(flow, solver, tau, cutoff_level):
    if flow.period is not None:
        return flow.period / 2, False
    a0 = float(flow.geom(np.array([tau]), np.array([0.0])).a[0])
    x = math.sqrt(tau) / a0 * np.geomspace(1e-2, 1e4, 97)
    x = x[x <= solver.x_max]
    rd = solver.reduced_distance(x, tau)
    w, _ = _weight(flow, tau, x, rd.l)
    # w * x bounds the mass beyond x up to a modest factor and, unlike w,
    # does not depend on how far the coordinate is stretched
    mass = w * x
    k = int(np.nanargmax(mass))
    small = np.nonzero((mass < cutoff_level) & (np.arange(x.size) > k))[0]
    if small.size:
        return float(x[small[0]]), False
    return float(x[-1]), True


def _radial_distance(G, x):
    # arc length from the pole along the radial coordinate at fixed tau
    seg = 0.5 * (G.a[1:] + G.a[:-1]) * np.diff(x)
    return np.concatenate([[0.0], np.cumsum(seg)])


def _radial_integral(flow, solver, tau, nodes, cutoff_level, with_grad=False, A=None):
    X, truncated = _truncation_radius(flow, solver, tau, cutoff_level)
    x = np.linspace(0.0, X, nodes)
    rd = solver.reduced_distance(x, tau)
    if not np.all(rd.reached):
        raise ParameterError("reduced distance unreached at quadrature nodes; widen v_range")
    w, G = _weight(flow, tau, x, rd.l)
    V = float(simpson(w, x=x))
    if with_grad:
        phi2 = 1.0 if A is None else cutoff(_radial_distance(G, x) / A) ** 2
        Wg = float(simpson(phi2 * w * rd.grad**2, x=x))
    else:
        Wg = math.nan
    tail = 0.0
    if flow.period is None:
        # exponential extrapolation of l beyond the cut with the outermost slope
        n = flow.n
        slope = max((rd.l[-1] - rd.l[-2]) / (x[-1] - x[-2]), 1e-3)
        a, psi, dpsi = G.a[-1], abs(G.psi[-1]), G.psi_x[-1]
        c = sphere_volume(n - 1) * (4 * math.pi * tau) ** (-n / 2)
        f = lambda s: c * math.exp(-(rd.l[-1] + slope * s)) * a * max(psi + dpsi * s, 0.0) ** (n - 1)
        tail = quad(f, 0.0, math.inf)[0]
    return V, tail, X, truncated, Wg


def reduced_volume(flow: FlowHistory, tau: float, *, solver: Optional[LSolver] = None,
                   nodes: int = 401, cutoff_level: float = 1e-12) -> ReducedVolume:
    """``V(tau) = int (4 pi tau)^(-n/2) e^-l dg(tau)`` by radial Simpson quadrature.

    Noncompact integrals are cut where ``x`` times the integrand drops
    below ``cutoff_level``; the reported tail is the extrapolated remainder and
    is not added to ``V``.
    """
    solver = solver or LSolver(flow)
    V, tail, X, truncated, _ = _radial_integral(flow, solver, float(tau), nodes, cutoff_level)
    return ReducedVolume(float(tau), V, tail, X, truncated)


@dataclass(frozen=True, eq=False)
class ReducedVolumeSeries:
    taus: np.ndarray
    V: np.ndarray
    tail: np.ndarray
    stage: Optional[int] = None


def reduced_volume_series(flow, taus, *, solver=None, stage=None, **kw) -> ReducedVolumeSeries:
    solver = solver or LSolver(flow)
    vols = [reduced_volume(flow, t, solver=solver, **kw) for t in taus]
    return ReducedVolumeSeries(np.asarray(taus, float), np.array([v.V for v in vols]),
                               np.array([v.tail for v in vols]), stage)


@dataclass(frozen=True)
class MonotonicityReport:
    passed: bool
    max_uphill: float
    max_V: float
    le_one: bool


def monotonicity_certificate(series: ReducedVolumeSeries, tol: float = 1e-6,
                             bound_tol: float = 1e-4) -> MonotonicityReport:
    """V non-increasing within ``tol`` and ``V <= 1 + bound_tol``."""
    order = np.argsort(series.taus)
    V = series.V[order]
    up = float(np.max(np.diff(V))) if V.size > 1 else 0.0
    up = max(up, 0.0)
    return MonotonicityReport(up <= tol, up, float(np.max(V)), bool(np.max(V) <= 1 + bound_tol))


# ---------------------------------------------------------------------------
# blow-down

@dataclass(eq=False)
class BlowdownStage:
    """The rescaled flow ``g_i(tau) = tau_i^-1 g(tau tau_i)`` around ``x_i``.

    ``base`` is the radial coordinate of ``x_i`` measured from ``p0``;
    ``window`` is the coordinate interval covered by ``B_{g_i(1)}(x_i, r)``.
    """

    i: int
    tau_i: float
    flow: RescaledFlow
    base: float
    window: tuple
    r: float
    l_at_base: float
    curv_bound: float
    K_i: float
    inj_proxy: float
    window_covered: bool
    solver: LSolver = field(repr=False, default=None)


def _sectional(flow, G):
    n = flow.n
    k_rad = G.ric_rad / (n - 1)
    if n > 2:
        k_tan = (G.ric_tan - k_rad) / (n - 2)
    else:
        k_tan = k_rad
    return np.maximum(np.abs(k_rad), np.abs(k_tan))


def blowdown(spliced: SplicedFlow, p0: float, stages: Sequence[int], *, r: float = 1.0,
             solver_kw: Optional[dict] = None) -> list:
    """Build blow-down stages with their Type-I diagnostics.

    Each stage records ``l_i(x_i, 1)``, the curvature bound on the window
    over ``tau in [1, 2]``, the Ricci lower bound ``K_i`` and an injectivity
    proxy (the conjugate radius ``pi a`` on spheres, infinite when flat).
    """
    if not spliced.homogeneous and p0 != 0.0:
        raise ParameterError("profile splices need the base point at the pole")
    solver_kw = solver_kw or {}
    out = []
    J = spliced.junctions
    for i in stages:
        if i < 0 or i > spliced.i_max:
            raise HorizonError(f"stage {i} needs i_max >= {i}")
        ti = float(J[i])
        if 2 * ti > spliced.tau_max * (1 + 1e-12):
            raise HorizonError(
                f"stage {i} needs tau_max >= {2 * ti:.6g}, have {spliced.tau_max:.6g}")
        flow = RescaledFlow(spliced, ti)
        xi = float(base_points(spliced.breather, p0, i)[-1])
        d = float(flow.distance(np.array([xi - p0]))[0]) if spliced.homogeneous else abs(xi)
        a1 = float(flow.geom(np.array([1.0]), np.array([d])).a[0])
        rad = r / a1
        lo, hi = max(0.0, d - rad), d + rad
        if flow.period is not None:
            hi = min(hi, flow.period / 2)
        solver = LSolver(flow, **solver_kw)
        l_base = float(solver.reduced_distance(np.array([d]), np.array([1.0])).l[0])
        T, X = np.meshgrid(np.linspace(1.0, 2.0, 9), np.linspace(lo, hi, 9), indexing="ij")
        G = flow.geom(T.ravel(), X.ravel())
        curv = float(np.max(_sectional(flow, G)))
        K = float(max(0.0, -min(np.min(G.ric_rad), np.min(G.ric_tan))))
        inj = math.pi * a1 if flow.kind == "round" else math.inf
        covered = bool(i + 1 <= spliced.i_max and J[i + 1] / ti >= 2.0 - 1e-12)
        out.append(BlowdownStage(i, ti, flow, d, (lo, hi), r, l_base, curv, K, inj,
                                 covered, solver))
    return out


@dataclass(frozen=True, eq=False)
class StageResiduals:
    """Residual fields of one stage on its window lattice."""

    stage: int
    x: np.ndarray
    tau: np.ndarray
    soliton: np.ndarray
    conjheat: np.ndarray
    v: np.ndarray
    v_evolution: np.ndarray
    lll1: np.ndarray
    lll2: np.ndarray
    smooth: np.ndarray
    field: ReducedField = None

    def max_abs(self, name):
        arr = getattr(self, name)[self.smooth]
        return float(np.max(np.abs(arr))) if arr.size else math.nan


def soliton_residual(field: ReducedField) -> np.ndarray:
    """Frobenius norm of ``Ric + Hess l - g/(2 tau)`` in an orthonormal frame."""
    n = field.flow.n
    G = field.geom
    half = 1.0 / (2 * field.tau)
    s_rad = G.ric_rad + field.hess_rad - half
    s_tan = G.ric_tan + field.hess_tan - half
    return np.sqrt(s_rad**2 + (n - 1) * s_tan**2)


def conjugate_heat_residual(field: ReducedField) -> np.ndarray:
    """``d_tau u - lap u + R u`` for ``u = (4 pi tau)^(-n/2) e^-l``, by finite differences."""
    return field.u_tau - field.lap_u + field.geom.R * field.u


def _v_of(field: ReducedField) -> np.ndarray:
    n = field.flow.n
    return (field.tau * (2 * field.lap - field.grad**2 + field.geom.R) + field.l - n) * field.u


def perelman_v(field: ReducedField, solver: LSolver, h_outer: float = 0.1,
               h_tau_outer: float = 2.5e-2):
    """Perelman's ``v`` and the residual of its evolution equation.

    Returns ``(v, evolution)`` where ``evolution`` is
    ``(d_tau - lap + R) v + 2 tau |Ric + Hess l - g/(2 tau)|^2 u``, computed
    with an outer five-point stencil over locally recomputed jets.
    """
    f = field
    N = f.x.size
    v = _v_of(f)
    hx = h_outer / f.geom.a
    ht = h_tau_outer * f.tau
    off = STENCIL[[0, 1, 3, 4]]
    xs = np.concatenate([f.x[:, None] + off[None, :] * hx[:, None],
                         np.repeat(f.x[:, None], 4, 1)], axis=1)
    ts = np.concatenate([np.repeat(f.tau[:, None], 4, 1),
                         f.tau[:, None] + off[None, :] * ht[:, None]], axis=1)
    J = local_jets(solver, xs.ravel(), ts.ravel(), h=f.h, h_tau=f.h_tau)
    vn = _v_of(J).reshape(N, 8)
    vx = np.column_stack([vn[:, 0], vn[:, 1], v, vn[:, 2], vn[:, 3]])
    vt = np.column_stack([vn[:, 4], vn[:, 5], v, vn[:, 6], vn[:, 7]])
    v_x = vx @ _W1 / hx
    v_xx = vx @ _W2 / hx**2
    v_tau = vt @ _W1 / ht
    lap_v, _, _ = _laplacian_parts(f.flow, f.geom, f.x, v_x, v_xx, f.flow.n)
    S = soliton_residual(f)
    evolution = v_tau - lap_v + f.geom.R * v + 2 * f.tau * S**2 * f.u
    smooth = J.smooth.reshape(N, 8).all(axis=1)
    return v, evolution, smooth


def stage_residuals(stage: BlowdownStage, taus=None, nx: int = 9, *, h: float = 2e-2,
                    h_tau: float = 5e-3, l_scale: float = 1.0) -> StageResiduals:
    """All residual fields of a stage on ``window x taus``."""
    taus = np.linspace(1.1, 1.9, 9) if taus is None else np.asarray(taus, float)
    xs = np.linspace(stage.window[0], stage.window[1], nx)
    T, X = np.meshgrid(taus, xs, indexing="ij")
    fld = local_jets(stage.solver, X.ravel(), T.ravel(), h=h, h_tau=h_tau)
    if l_scale != 1.0:
        fld = fld.scaled(l_scale)
    n = stage.flow.n
    v, evo, sm_v = perelman_v(fld, stage.solver)
    R = fld.geom.R
    g2 = fld.grad**2
    lll1 = 2 * fld.l_tau + g2 - R + fld.l / fld.tau
    lll2 = 2 * fld.lap - g2 + R + (fld.l - n) / fld.tau
    return StageResiduals(stage.i, fld.x, fld.tau, soliton_residual(fld),
                          conjugate_heat_residual(fld), v, evo, lll1, lll2,
                          fld.smooth & sm_v, fld)


@dataclass(frozen=True)
class WeightedGradient:
    tau: float
    value: float
    V: float
    bound: float
    C0: float

    @property
    def passed(self) -> bool:
        return self.value <= self.bound * (1 + 1e-6) and self.value <= self.C0


def weighted_gradient_bound(stage_or_flow, tau: float = 1.0, *, solver=None, A=None,
                            nodes: int = 401, cutoff_level: float = 1e-12) -> WeightedGradient:
    """``int |grad l|^2 (4 pi tau)^(-n/2) e^-l dg`` with the bound ``(2n/tau) V``.

    Letting the cutoff radius go to infinity in the weighted estimate gives
    ``int |grad l|^2 u <= (2n/tau) V(tau) <= 2n`` on ``tau >= 1``, so
    ``C0 = 2n`` works for every stage. With a finite ``A`` the integrand
    carries the cutoff ``chi(d/A)^2`` in the distance ``d`` from the base,
    which can only lower the value.
    """
    if isinstance(stage_or_flow, BlowdownStage):
        flow, solver = stage_or_flow.flow, stage_or_flow.solver
    else:
        flow = stage_or_flow
        solver = solver or LSolver(flow)
    V, _, _, _, W = _radial_integral(flow, solver, float(tau), nodes, cutoff_level,
                                     with_grad=True, A=A)
    n = flow.n
    return WeightedGradient(float(tau), W, V, 2 * n * V / tau, 2.0 * n)


@dataclass(frozen=True)
class LocalBoundWitness:
    stage: int
    l_max: float
    grad_max: float
    C: float

    @property
    def passed(self) -> bool:
        return self.l_max <= self.C and self.grad_max <= self.C


def local_bound_witness(stage: BlowdownStage, res: StageResiduals, l_bound: float,
                        eps: float = 0.1) -> LocalBoundWitness:
    """Measured maxima of ``l_i`` and ``|d_tau l_i| + |grad l_i|`` with the
    constant of the local estimate.

    The constant is ``2 C + 2 C_1 + 4 exp(2 n C_1 tau) r^2 / eps^2`` at
    ``tau = 2``, where ``C`` bounds the L-energy of a curve to ``(x_i, 1)``
    and ``C_1`` is the curvature bound on the window.
    """
    f = res.field
    s = res.smooth
    n = stage.flow.n
    C1 = stage.curv_bound
    C = 2 * l_bound + 2 * C1 + 4 * math.exp(2 * n * C1 * 2.0) * stage.r**2 / eps**2
    lmax = float(np.max(f.l[s])) if np.any(s) else math.nan
    gmax = float(np.max(np.abs(f.l_tau[s]) + np.abs(f.grad[s]))) if np.any(s) else math.nan
    return LocalBoundWitness(stage.i, lmax, gmax, C)


# ---------------------------------------------------------------------------
# density of the limit

def limit_density(flow_kind: str, n: int, tau: float = 1.5) -> float:
    """Gaussian density of the limit shrinker by direct quadrature.

    ``flat``: the Gaussian soliton with potential ``|x|^2/(4 tau)``.
    ``round``: the sphere ``2(n-1) tau g_unit``; the soliton equation with
    ``Ric = g/(2 tau)`` forces a constant potential ``f = n - tau R``.
    """
    w = sphere_volume(n - 1)
    c = (4 * math.pi * tau) ** (-n / 2)
    if flow_kind == "flat":
        val = quad(lambda r: w * c * math.exp(-r * r / (4 * tau)) * r ** (n - 1), 0, math.inf)[0]
        return float(val)
    if flow_kind == "round":
        s = 2 * (n - 1) * tau
        R = n * (n - 1) / s
        f = n - tau * R
        val = quad(lambda x: w * c * math.exp(-f) * s ** (n / 2) * math.sin(x) ** (n - 1),
                   0, math.pi)[0]
        return float(val)
    raise ParameterError(f"no limit density for kind {flow_kind!r}")


@dataclass(frozen=True)
class DensityLimit:
    verdict: str          # "converged" or "inconclusive"
    V_inf: float
    static_euclidean: bool
    soliton_density: float
    fatou_gap: float
    stages: tuple
    values: tuple


def gaussian_density_limit(stage_ids, values, taus_i, *, kind: str, n: int,
                           flat_tol: float = 1e-3) -> DensityLimit:
    """Extrapolate ``V_i(1) = V(tau_i)`` linearly in ``tau_i^(-1/2)`` over the last
    three stages."""
    values = np.asarray(values, float)
    taus_i = np.asarray(taus_i, float)
    dens = limit_density(kind, n)
    if values.size < 3 or not np.all(np.isfinite(values)):
        return DensityLimit("inconclusive", math.nan, False, dens, math.nan,
                            tuple(stage_ids), tuple(values))
    z = taus_i[-3:] ** -0.5
    slope, V_inf = np.polyfit(z, values[-3:], 1)
    diffs = np.abs(np.diff(values[-3:]))
    converging = diffs[-1] <= diffs[0] + 1e-12
    verdict = "converged" if converging and 0 < V_inf <= 1 + flat_tol else "inconclusive"
    return DensityLimit(verdict, float(V_inf), bool(abs(V_inf - 1) <= flat_tol), dens,
                        float(V_inf - dens), tuple(int(s) for s in stage_ids),
                        tuple(float(v) for v in values))
