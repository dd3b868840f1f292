"""Backward Ricci flow: integration, interpolation and certificates."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import RectBivariateSpline

from .errors import (DegenerationError, DomainError, ParameterError,
                     StencilError, StiffnessError)
from .models import (FlowHistory, HomogeneousFlat, HomogeneousRound,
                     MetricSnapshot, RadialGeom, RotSymPlane, radial_curvature)

__all__ = [
    "GridFlow",
    "FlowResidual",
    "evolve_backward",
    "flow_residual",
    "one_sided_weights",
    "one_sided_time_derivatives",
    "write_history",
    "read_history",
]


def _hermite(times, states, derivs, tau):
    """Cubic Hermite interpolation of ``states`` (K, m) at the times ``tau``."""
    tau = np.asarray(tau, dtype=float)
    k = np.clip(np.searchsorted(times, tau, side="right") - 1, 0, len(times) - 2)
    t0, t1 = times[k], times[k + 1]
    h = t1 - t0
    u = ((tau - t0) / h)[..., None]
    h = h[..., None]
    h00 = (1 + 2 * u) * (1 - u) ** 2
    h10 = u * (1 - u) ** 2
    h01 = u**2 * (3 - 2 * u)
    h11 = u**2 * (u - 1)
    return (h00 * states[k] + h10 * h * derivs[k]
            + h01 * states[k + 1] + h11 * h * derivs[k + 1])


class GridFlow(FlowHistory):
    """A history sampled at accepted integrator steps.

    The state is ``[s]`` for round metrics and ``[a_0..a_J, psi_0..psi_J]``
    for profile metrics; queries between steps use cubic Hermite
    interpolation with the stored right-hand sides.
    """

    provenance = "integrated"
    order = 3

    def __init__(self, n, kind, times, states, derivs, grid=None,
                 psi_x_end=None, meta=None):
        times = np.asarray(times, dtype=float)
        if times.size < 2 or np.any(np.diff(times) <= 0):
            raise ParameterError("history times must be strictly increasing")
        super().__init__(n, times[0], times[-1])
        self.kind = kind
        self.times = times
        self.states = np.asarray(states, dtype=float)
        self.derivs = np.asarray(derivs, dtype=float)
        self.grid = None if grid is None else np.asarray(grid, dtype=float)
        self.psi_x_end = psi_x_end
        self.meta = dict(meta or {})
        if kind == "round":
            self.period = 2 * math.pi
        if kind == "rotsym" and np.any(self.states[:, self.grid.size + 1:] <= 0):
            raise DegenerationError("profile history is not positive")
        self._splines = None

    @property
    def sample_points(self):
        if self.kind == "rotsym":
            return self.grid[1:]
        return np.array([0.5]) if self.kind == "round" else np.array([1.0])

    def state(self, tau):
        return _hermite(self.times, self.states, self.derivs, self.check_tau(tau))

    def _build_splines(self):
        J = self.grid.size
        r = self.grid
        rr = np.concatenate([-r[:0:-1], r])
        kt = min(3, self.times.size - 1)
        fields = {k: [] for k in ("a", "psi", "R", "ric_rad", "ric_tan")}
        for st in self.states:
            a, psi = st[:J], st[J:]
            cur = radial_curvature(self.n, r, psi, a, self.psi_x_end)
            for key, val, parity in (("a", a, 1), ("psi", psi, -1), ("R", cur["R"], 1),
                                     ("ric_rad", cur["ric_rad"], 1),
                                     ("ric_tan", cur["ric_tan"], 1)):
                fields[key].append(np.concatenate([parity * val[:0:-1], val]))
        self._splines = {k: RectBivariateSpline(self.times, rr, np.array(v), kx=kt, ky=3)
                         for k, v in fields.items()}

    def geom(self, tau, x, side=None):
        x = np.asarray(x, dtype=float)
        tau = np.broadcast_to(self.check_tau(tau), np.broadcast(tau, x).shape)
        x = np.broadcast_to(x, tau.shape)
        z = np.zeros(tau.shape)
        if self.kind == "flat":
            return RadialGeom(z + 1.0, z, x + z, z + 1.0, z, z, z, z)
        if self.kind == "round":
            s = self.state(tau)[..., 0]
            q = np.sqrt(s)
            ric = (self.n - 1) / s
            return RadialGeom(q, z, q * np.sin(x), q * np.cos(x), self.n * ric, z, ric, ric)
        if np.any(np.abs(x) > self.grid[-1] * (1 + 1e-12)):
            raise DomainError(f"|x| exceeds the grid radius {self.grid[-1]}")
        if self._splines is None:
            self._build_splines()
        sp = self._splines
        ev = lambda k, dy=0: sp[k].ev(tau, x, dy=dy)
        return RadialGeom(ev("a"), ev("a", 1), ev("psi"), ev("psi", 1), ev("R"),
                          ev("R", 1), ev("ric_rad"), ev("ric_tan"))

    def components(self, tau, x=None, side=None):
        if self.kind != "rotsym" or x is not None:
            return super().components(tau, x, side)
        J = self.grid.size
        st = self.state(float(tau))
        return np.concatenate([st[:J] ** 2, st[J + 1:] ** 2])

    def ricci2(self, tau, x=None, side=None):
        if self.kind != "rotsym" or x is not None:
            return super().ricci2(tau, x, side)
        J = self.grid.size
        st = self.state(float(tau))
        a, psi = st[:J], st[J:]
        cur = radial_curvature(self.n, self.grid, psi, a, self.psi_x_end)
        return np.concatenate([2 * cur["ric_rad"] * a**2,
                               2 * cur["ric_tan"][1:] * psi[1:] ** 2])

    def geometry_at(self, tau, side=None):
        if self.kind == "rotsym":
            J = self.grid.size
            st = self.state(float(tau))
            psi = st[J:].copy()
            psi[0] = 0.0
            return RotSymPlane(self.n, self.grid, psi, st[:J]), 1.0
        return super().geometry_at(tau, side)

    def describe(self):
        return super().describe() | {"steps": int(self.times.size)} | self.meta


def _profile_rhs(n, r, psi_x_end):
    J = r.size

    def rhs(_t, y):
        a, psi = y[:J], y[J:]
        if not np.all(np.isfinite(y)) or np.any(psi[1:] <= 0) or np.any(a <= 0):
            # rejected by the step-size controller; accepted states are
            # checked by the degeneration event
            return np.full_like(y, np.nan)
        cur = radial_curvature(n, r, psi, a, psi_x_end)
        dpsi = cur["ric_tan"] * psi
        dpsi[0] = 0.0
        return np.concatenate([cur["ric_rad"] * a, dpsi])

    return rhs


def evolve_backward(initial: MetricSnapshot, tau_end: float, *, rtol=1e-8, atol=1e-10,
                    max_step=math.inf, min_step=1e-12, growth_guard=1e3) -> GridFlow:
    """Integrate ``d/dtau g = 2 Ric`` from ``initial.tau`` to ``tau_end``.

    Uses the Bogacki-Shampine embedded pair.  Profile metrics are evolved
    by the method of lines in the fixed radial coordinate, with
    ``a_tau = Ric_rad a`` and ``psi_tau = Ric_tan psi``.  The far boundary
    keeps ``psi_x`` at its initial value.  The profile system is a
    backward heat equation, so grid-scale roundoff grows like
    ``exp(tau / h^2)``; ``growth_guard`` bounds the admissible growth of
    the state and raises :class:`StiffnessError` when exceeded.
    """
    tau0 = float(initial.tau)
    if not tau_end > tau0:
        raise ParameterError("tau_end must exceed the initial time")
    geo = initial.geometry
    n = geo.n
    meta = {"rtol": rtol, "atol": atol, "max_step": max_step}
    if isinstance(geo, HomogeneousFlat):
        times = np.array([tau0, tau_end])
        return GridFlow(n, "flat", times, np.ones((2, 1)), np.zeros((2, 1)), meta=meta)
    if isinstance(geo, HomogeneousRound):
        if not initial.scale > 0:
            raise DegenerationError("initial round scale must be positive")
        rhs = lambda _t, y: np.full_like(y, 2.0 * (n - 1))
        y0 = np.array([initial.scale])
        kind, grid, pxe = "round", None, None
    else:
        grid = geo.r
        pxe = float(radial_curvature(n, geo.r, geo.psi, geo.a)["psi_x"][-1])
        rhs = _profile_rhs(n, grid, pxe)
        y0 = np.concatenate([geo.a, geo.psi])
        kind = "rotsym"
        meta["h"] = geo.h
    events = None
    if kind == "rotsym":
        J = grid.size

        def degenerate(_t, y):
            return min(np.min(y[J + 1:]), np.min(y[:J]))

        degenerate.terminal = True
        events = degenerate
    sol = solve_ivp(rhs, (tau0, tau_end), y0, method="RK23", rtol=rtol, atol=atol,
                    max_step=max_step, events=events)
    if sol.status == 1:
        raise DegenerationError(f"the profile degenerated at tau = {sol.t[-1]:.6g}")
    if sol.status != 0:
        raise StiffnessError(f"integration stopped at tau = {sol.t[-1]:.6g}: {sol.message}")
    steps = np.diff(sol.t)
    if steps.size > 1 and np.min(steps[:-1]) < min_step:
        raise StiffnessError(f"step size fell below {min_step:g}")
    states = sol.y.T
    if np.max(np.abs(states)) > growth_guard * max(1.0, np.max(np.abs(y0))):
        raise StiffnessError("state growth exceeded the guard; the grid is too fine "
                             "for this horizon")
    derivs = np.array([rhs(t, y) for t, y in zip(sol.t, states)])
    return GridFlow(n, kind, sol.t, states, derivs, grid=grid, psi_x_end=pxe, meta=meta)


@dataclass(frozen=True)
class FlowResidual:
    value: float
    one_sided: bool
    tau: float


def _step(history, tau, rel=1e-4):
    t_lo, t_hi = history.tau_min, history.tau_max
    br = history.breaks
    lo = max([t_lo] + [b for b in br if b < tau])
    hi = min([t_hi] + [b for b in br if b > tau])
    return rel * max(hi - lo, 1e-300) if math.isfinite(hi) else rel * max(1.0, abs(tau))


def flow_residual(history: FlowHistory, tau: float, r=None, *, rel_step=1e-4) -> FlowResidual:
    """Max-norm of ``(d/dtau g - 2 Ric)`` measured in the frame of ``g``.

    Closed-form flows use their exact time derivative.  Otherwise the
    derivative is a centered difference of the history, or a one-sided
    second order difference at the ends of the time range (flagged).
    """
    history.check_tau(tau)
    comp = history.components(tau, r)
    exact = history.dcomponents(tau, r)
    one_sided = False
    if exact is not None:
        d = exact
    else:
        h = _step(history, tau, rel_step)
        if tau - h >= history.tau_min and tau + h <= history.tau_max:
            d = (history.components(tau + h, r) - history.components(tau - h, r)) / (2 * h)
        elif tau + 2 * h <= history.tau_max:
            one_sided = True
            d = (-3 * comp + 4 * history.components(tau + h, r)
                 - history.components(tau + 2 * h, r)) / (2 * h)
        else:
            one_sided = True
            d = (3 * comp - 4 * history.components(tau - h, r)
                 + history.components(tau - 2 * h, r)) / (2 * h)
    res = np.abs(d - history.ricci2(tau, r)) / np.abs(comp)
    return FlowResidual(float(np.max(res)), one_sided, float(tau))


def one_sided_weights(k: int, side: str) -> tuple[np.ndarray, np.ndarray]:
    """Offsets (in units of h) and weights of a one-sided k-th derivative.

    Uses ``k + 2`` nodes, which gives second order accuracy.  Multiply the
    weights by ``h**-k``.
    """
    if k == 0:
        return np.array([0.0]), np.array([1.0])
    m = k + 2
    off = np.arange(m, dtype=float)
    if side == "left":
        off = -off
    A = np.vander(off, m, increasing=True).T
    rhs = np.zeros(m)
    rhs[k] = math.factorial(k)
    return off, np.linalg.solve(A, rhs)


def one_sided_time_derivatives(history: FlowHistory, tau_star: float, k: int,
                               h=None, x=None):
    """Left and right k-th time derivatives of the metric components at ``tau_star``.

    The stencils stay inside the smooth pieces adjacent to ``tau_star``;
    the left stencil queries the flow with ``side='left'`` so that a
    junction time itself is evaluated on the earlier piece.
    """
    if k not in (0, 1, 2, 3):
        raise ParameterError("derivative order must be 0..3")
    br = np.asarray(history.breaks)
    lo = max([history.tau_min] + [b for b in br if b < tau_star - 1e-14 * abs(tau_star)])
    hi = min([history.tau_max] + [b for b in br if b > tau_star + 1e-14 * abs(tau_star)])
    if h is None:
        span = min(tau_star - lo, hi - tau_star if math.isfinite(hi) else tau_star - lo)
        h = 1e-3 * span
    if not h > 0:
        raise StencilError("tau_star must be interior to the history")
    if tau_star - (k + 1) * h < lo - 1e-12 or tau_star + (k + 1) * h > hi + 1e-12:
        raise StencilError(f"fewer than {k + 2} samples fit on both sides of tau = {tau_star}")
    if isinstance(history, GridFlow):
        t = history.times
        if min(np.count_nonzero(t < tau_star), np.count_nonzero(t > tau_star)) < k + 2 - 1:
            raise StencilError(f"history has too few samples around tau = {tau_star}")
    out = []
    for side in ("left", "right"):
        off, w = one_sided_weights(k, side)
        vals = np.array([history.components(tau_star + o * h, x, side=side) for o in off])
        out.append(w @ vals / h**k)
    return out[0], out[1]


# ---------------------------------------------------------------------------
# serialization

def write_history(path, history: FlowHistory, taus=None, tolerances=None):
    """Write ``tau,s`` (homogeneous) or ``tau,r,psi,a`` rows plus a JSON sidecar."""
    path = Path(path)
    if taus is None:
        taus = getattr(history, "times", None)
        if taus is None:
            taus = np.linspace(history.tau_min, min(history.tau_max, history.tau_min + 1), 11)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if history.kind == "rotsym":
            w.writerow(["tau", "r", "psi", "a"])
            for t in taus:
                geo = history.snapshot(t).geometry
                for r, p, a in zip(geo.r, geo.psi, geo.a):
                    w.writerow([repr(float(t)), repr(float(r)), repr(float(p)), repr(float(a))])
        else:
            w.writerow(["tau", "s"])
            for t in taus:
                w.writerow([repr(float(t)), repr(float(history.snapshot(t).scale))])
    meta = history.describe()
    meta["tolerances"] = tolerances or {}
    if history.kind == "rotsym":
        meta["grid"] = {"points": int(history.grid.size), "r_max": float(history.grid[-1])}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))


def read_history(path) -> GridFlow:
    """Read a history CSV written by :func:`write_history` as a GridFlow.

    Derivatives for the Hermite interpolant are recomputed from the flow
    equation, so the reconstruction is exact at the stored times.
    """
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    n = int(meta["n"])
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if "s" in rows[0]:
        t = np.array([float(r["tau"]) for r in rows])
        s = np.array([[float(r["s"])] for r in rows])
        if meta["kind"] == "flat":
            return GridFlow(n, "flat", t, s, np.zeros_like(s), meta={"source": str(path)})
        return GridFlow(n, "round", t, s, np.full_like(s, 2.0 * (n - 1)),
                        meta={"source": str(path)})
    t_all = np.array([float(r["tau"]) for r in rows])
    times = np.unique(t_all)
    J = rows and int(np.count_nonzero(t_all == times[0]))
    grid = np.array([float(r["r"]) for r in rows[:J]])
    states = []
    for k in range(times.size):
        block = rows[k * J:(k + 1) * J]
        states.append(np.concatenate([[float(r["a"]) for r in block],
                                      [float(r["psi"]) for r in block]]))
    states = np.array(states)
    pxe = float(radial_curvature(n, grid, states[0, J:], states[0, :J])["psi_x"][-1])
    rhs = _profile_rhs(n, grid, pxe)
    derivs = np.array([rhs(tt, y) for tt, y in zip(times, states)])
    return GridFlow(n, "rotsym", times, states, derivs, grid=grid, psi_x_end=pxe,
                    meta={"source": str(path)})
