"""L-geodesics, reduced distance and the pointwise identities it satisfies.

All curves start at the pole ``x = 0`` at ``tau = 0``.  In the variable
``sigma = sqrt(tau)`` the L-energy is

    L(beta) = int_0^sqrt(tau) (2 sigma^2 R + 1/2 |beta'|^2) dsigma

and radial L-geodesics of ``a^2 dx^2 + psi^2 g_S`` solve

    x'' = 2 sigma^2 R_x / a^2 - (a_x / a) x'^2 - 4 sigma Ric_rad x',
    x(0) = 0,  x'(0) = 2 v.

Shooting is vectorised: many initial velocities are integrated as one
stacked system.  For each target a fan of velocities brackets every branch
that reaches the target (or one of its periodic images on the sphere), the
brackets are refined by regula falsi, and the branch of least energy is the
reduced distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import simpson, solve_ivp

from .errors import EscapeError, ParameterError, UnreachedTargetError
from .models import FlowHistory

__all__ = [
    "LCurve",
    "LGeodesicResult",
    "ReducedDistance",
    "ReducedField",
    "LSolver",
    "l_energy",
    "shoot",
    "solve_bvp",
    "reduced_distance",
    "reduced_field",
    "identity_residuals",
    "IdentityResiduals",
    "STENCIL",
]


@dataclass(frozen=True, eq=False)
class LCurve:
    """Samples of a curve in the ``sigma`` parametrisation.

    ``dx`` is ``dx/dsigma``.  ``piece`` pins evaluation to one copy of a
    spliced flow, so junction endpoints use the right piece.
    """

    sigma: np.ndarray
    x: np.ndarray
    dx: np.ndarray
    flow: FlowHistory
    piece: Optional[int] = None

    @classmethod
    def from_tau(cls, flow, tau, x, dxdtau, piece=None):
        s = np.sqrt(np.asarray(tau, dtype=float))
        return cls(s, np.asarray(x, dtype=float), 2.0 * s * np.asarray(dxdtau, dtype=float),
                   flow, piece)

    def integrand(self) -> np.ndarray:
        tau = self.sigma**2
        if self.piece is not None:
            G = self.flow.piece_geom(np.full(tau.shape, self.piece), tau, self.x)
        else:
            G = self.flow.geom(tau, self.x)
        return 2.0 * self.sigma**2 * G.R + 0.5 * G.a**2 * self.dx**2


def l_energy(curve) -> float:
    """L-energy by composite Simpson on each smooth piece."""
    if isinstance(curve, LCurve):
        return float(simpson(curve.integrand(), x=curve.sigma))
    return float(sum(l_energy(c) for c in curve))


@dataclass(frozen=True)
class LGeodesicResult:
    x: float
    tau: float
    L: float
    l: float
    v: float
    grad: float
    minimal: bool = True
    conjugate: bool = False
    smooth: bool = True


@dataclass(frozen=True, eq=False)
class ReducedDistance:
    """Reduced distance at a batch of points ``(q, tau)``, ``q >= 0``."""

    q: np.ndarray
    tau: np.ndarray
    l: np.ndarray
    L: np.ndarray
    v: np.ndarray
    grad: np.ndarray
    branches: np.ndarray
    tie: np.ndarray
    conjugate: np.ndarray
    reached: np.ndarray
    smooth: np.ndarray


def _fan(v_min, v_max, m):
    pos = np.geomspace(v_min, v_max, m)
    return np.concatenate([-pos[::-1], [0.0], pos])


class LSolver:
    """Vectorised shooting for radial L-geodesics of one flow.

    ``v_range`` and ``v_guard`` are physical speeds; they are converted to
    coordinate speeds with the radial metric factor at the pole at
    ``tau = 1`` (clamped to the flow's range), so stretched coordinates such
    as deep blow-down stages need no retuning.
    """

    def __init__(self, flow: FlowHistory, *, rtol=1e-12, atol=1e-13, v_range=(1e-5, 1e5),
                 fan_size=32, v_guard=1e8, tol_x=1e-11, max_iter=60, tie_rel=1e-8,
                 cut_margin=0.2, x_max=None):
        self.flow = flow
        self.rtol = float(rtol)
        self.atol = float(atol)
        if not 0 < v_range[0] < v_range[1]:
            raise ParameterError("v_range must be 0 < v_min < v_max")
        t_ref = min(max(1.0, flow.tau_min), flow.tau_max)
        self.v_unit = 1.0 / float(flow.geom(np.array([t_ref]), np.array([0.0])).a[0])
        self.v_fan = self.v_unit * _fan(float(v_range[0]), float(v_range[1]), int(fan_size))
        self.v_guard = float(v_guard) * self.v_unit
        self.tol_x = float(tol_x)
        self.max_iter = int(max_iter)
        self.tie_rel = float(tie_rel)
        self.cut_margin = float(cut_margin)
        grid = getattr(flow, "grid", None)
        self.x_max = x_max if x_max is not None else (
            float(grid[-1]) if grid is not None else math.inf)

    # -- integration ---------------------------------------------------------

    def _forces(self, sig, x, p, side=None):
        G = self.flow.geom(sig**2, self._clip(x), side=side)
        dp = (2 * sig**2 * G.R_x / G.a**2 - (G.a_x / G.a) * p**2
              - 4 * sig * G.ric_rad * p)
        dL = 2 * sig**2 * G.R + 0.5 * G.a**2 * p**2
        return dp, dL

    def _clip(self, x):
        if math.isfinite(self.x_max):
            return np.clip(x, -self.x_max, self.x_max)
        return x

    def _edges(self, s_max):
        """``[0, sqrt(breaks)..., s_max]``: the smooth stretches of sigma."""
        if self.flow.time_smooth:
            return np.array([0.0, s_max])
        br = np.asarray(self.flow.breaks, dtype=float)
        br = np.sort(br[(br > 0) & (br < s_max**2)])
        return np.concatenate([[0.0], np.sqrt(br), [s_max]])

    def _integrate_pieces(self, y0, edges, rtol):
        """Integrate in sigma, restarting at every break of the flow.

        An adaptive step never straddles a break, so flows that are only
        piecewise smooth in time (such as a splice of an inexact breather)
        cost a restart per break and not a cascade of rejected steps.
        """
        N = y0.size // 3
        sols = []
        y = y0
        for a, b in zip(edges[:-1], edges[1:]):
            def rhs(s, y, a=a):
                x, p = y[:N], y[N:2 * N]
                dp, dL = self._forces(s, x, p, side="right" if s <= a else "left")
                return np.concatenate([p, dp, dL])

            sol = solve_ivp(rhs, (a, b), y, method="DOP853", rtol=rtol, atol=self.atol,
                            dense_output=True)
            if sol.status != 0:
                raise EscapeError(f"shooting integration failed: {sol.message}")
            sols.append(sol)
            y = sol.y[:, -1]
        return sols

    def _solve_endpoints(self, v, sbar):
        """Integrate to each ``sbar`` with the time rescaled to ``t in [0, 1]``.

        Flows with breaks below ``max(sbar)`` are integrated on the common
        clock ``sigma`` instead, piece by piece.
        """
        v = np.asarray(v, dtype=float)
        sbar = np.asarray(sbar, dtype=float)
        N = v.size
        if N == 0:
            e = np.empty(0)
            return e, e, e, np.zeros(0, bool)
        y0 = np.concatenate([np.zeros(N), 2.0 * v, np.zeros(N)])
        edges = self._edges(float(sbar.max()))
        if edges.size > 2:
            return self._solve_pieces(y0, sbar, edges)

        def rhs(t, y):
            x, p = y[:N], y[N:2 * N]
            dp, dL = self._forces(sbar * t, x, p)
            return np.concatenate([sbar * p, sbar * dp, sbar * dL])

        sol = solve_ivp(rhs, (0.0, 1.0), y0, method="DOP853", rtol=self.rtol,
                        atol=self.atol)
        if sol.status != 0:
            raise EscapeError(f"shooting integration failed: {sol.message}")
        xs = sol.y[:N]
        peak = np.max(np.abs(xs), axis=1)
        escaped = peak >= self.x_max
        return sol.y[:N, -1], sol.y[N:2 * N, -1], sol.y[2 * N:, -1], escaped

    def _solve_pieces(self, y0, sbar, edges):
        N = sbar.size
        sols = self._integrate_pieces(y0, edges, self.rtol)
        seg = np.clip(np.searchsorted(edges, sbar, side="left") - 1, 0, len(sols) - 1)
        end = np.empty((3, N))
        peak = np.zeros(N)
        for j, sol in enumerate(sols):
            sel = np.nonzero(seg == j)[0]
            if sel.size:
                Y = sol.sol(sbar[sel])
                cols = np.arange(sel.size)
                for c in range(3):
                    end[c, sel] = Y[c * N + sel, cols]
            # running maximum of |x| over the steps each shot actually covers
            steps = np.abs(sol.y[:N])
            mask = sol.t[None, :] <= sbar[:, None]
            peak = np.maximum(peak, np.max(np.where(mask, steps, 0.0), axis=1))
        peak = np.maximum(peak, np.abs(end[0]))
        return end[0], end[1], end[2], peak >= self.x_max

    def _fan_solution(self, s_max):
        v = self.v_fan
        N = v.size
        y0 = np.concatenate([np.zeros(N), 2.0 * v, np.zeros(N)])

        def rhs(s, y):
            x, p = y[:N], y[N:2 * N]
            dp, dL = self._forces(s, x, p)
            return np.concatenate([p, dp, dL])

        edges = self._edges(s_max)
        if edges.size > 2:
            sols = self._integrate_pieces(y0, edges, 1e-10)

            def dense(s):
                j = min(max(int(np.searchsorted(edges, s, side="left")) - 1, 0), len(sols) - 1)
                return sols[j].sol(s)

            return dense
        sol = solve_ivp(rhs, (0.0, s_max), y0, method="DOP853", rtol=1e-10,
                        atol=self.atol, dense_output=True)
        if sol.status != 0:
            raise EscapeError(f"fan integration failed: {sol.message}")
        return sol.sol

    # -- public operations ---------------------------------------------------

    def shoot(self, v, tau_bar):
        """Single shot; returns an :class:`LGeodesicResult` at ``tau_bar``."""
        if not tau_bar > 0:
            raise ParameterError("tau_bar must be positive")
        if abs(v) > self.v_guard:
            raise ParameterError(f"|v| = {abs(v):g} exceeds the blow-up guard {self.v_guard:g}")
        sb = math.sqrt(tau_bar)
        x, p, L, esc = self._solve_endpoints(np.array([v]), np.array([sb]))
        if esc[0]:
            raise EscapeError("the L-geodesic left the computational domain", sigma=None)
        a = float(self.flow.geom(np.array([tau_bar]), self._clip(x))[0][0])
        return LGeodesicResult(float(x[0]), tau_bar, float(L[0]), float(L[0]) / (2 * sb),
                               float(v), a * float(p[0]) / (2 * sb))

    def _images(self, q, lo, hi):
        if self.flow.period is None:
            return np.array([q]) if lo <= q <= hi else np.empty(0)
        P = self.flow.period
        k = np.arange(math.floor((lo - q) / P), math.ceil((hi - q) / P) + 1)
        y = q + P * k
        return y[(y >= lo) & (y <= hi)]

    def reduced_distance(self, q, tau) -> ReducedDistance:
        """Reduced distance from ``(pole, 0)`` to the points ``(q, tau)``.

        ``q`` is the radial distance (any sign is folded).  Points whose
        minimal branch is unique, free of conjugate points and away from
        the cut region are flagged ``smooth``.
        """
        q = self.flow.distance(np.atleast_1d(np.asarray(q, dtype=float)))
        tau = np.broadcast_to(np.atleast_1d(np.asarray(tau, dtype=float)), q.shape).copy()
        if np.any(tau <= 0):
            raise ParameterError("tau must be positive")
        if np.any(q > self.x_max):
            raise ParameterError("target outside the computational domain")
        M = q.size
        sbar = np.sqrt(tau)
        # unique (q, tau) pairs share work
        keys, inverse = np.unique(np.stack([q, tau]), axis=1, return_inverse=True)
        inverse = inverse.ravel()
        uq, ut = keys
        us = np.sqrt(ut)
        dense = self._fan_solution(float(us.max()))
        Nf = self.v_fan.size
        rows = []  # (node, y, v_lo, v_hi, f_lo, f_hi, L_lo, L_hi)
        for s_val in np.unique(us):
            idx = np.nonzero(us == s_val)[0]
            Y = dense(s_val)
            E, Lf = Y[:Nf], Y[2 * Nf:]
            e_lo = np.minimum(E[:-1], E[1:])
            e_hi = np.maximum(E[:-1], E[1:])
            l_lo = np.minimum(Lf[:-1], Lf[1:])
            l_hi = np.maximum(Lf[:-1], Lf[1:])
            order = np.argsort(l_lo, kind="stable")
            for node in idx:
                best = np.inf
                for k in order:
                    # energy grows along the fan; nothing further can win
                    if l_lo[k] > best * (1 + 1e-6) + 1e-12:
                        break
                    for y in self._images(uq[node], e_lo[k], e_hi[k]):
                        fk, fk1 = E[k] - y, E[k + 1] - y
                        if fk1 == 0.0 and k + 1 < Nf - 1:
                            continue  # picked up by the next interval
                        rows.append((node, y, self.v_fan[k], self.v_fan[k + 1],
                                     fk, fk1, Lf[k], Lf[k + 1]))
                        best = min(best, l_hi[k])
        U = uq.size
        if rows:
            R = np.array(rows)
            node = R[:, 0].astype(int)
            # prune brackets whose energy range lies above the best candidate
            lmin = np.minimum(R[:, 6], R[:, 7])
            lmax = np.maximum(R[:, 6], R[:, 7])
            best = np.full(U, np.inf)
            np.minimum.at(best, node, lmax)
            keep = lmin <= best[node] * (1 + 1e-6) + 1e-12
            R, node = R[keep], node[keep]
            res = self._refine(R[:, 1], R[:, 2], R[:, 3], R[:, 4], R[:, 5], us[node])
        else:
            node = np.empty(0, int)
            res = None
        l = np.full(U, np.nan)
        L = np.full(U, np.nan)
        v = np.full(U, np.nan)
        grad = np.full(U, np.nan)
        nbr = np.zeros(U, int)
        tie = np.zeros(U, bool)
        conj = np.zeros(U, bool)
        reached = np.zeros(U, bool)
        if res is not None:
            vv, xe, pe, Le, slope, ok = res
            best_idx = np.full(U, -1)
            for u in range(U):
                sel = np.nonzero((node == u) & ok)[0]
                if sel.size == 0:
                    continue
                order = sel[np.lexsort((np.abs(vv[sel]), Le[sel]))]
                b = order[0]
                best_idx[u] = b
                reached[u] = True
                nbr[u] = sel.size
                L[u] = Le[b]
                v[u] = vv[b]
                scale = max(1.0, abs(Le[b]))
                tie[u] = sel.size > 1 and Le[order[1]] - Le[b] <= self.tie_rel * scale
                conj[u] = slope[b] <= 0 or (self.flow.period is not None
                                            and abs(xe[b]) >= self.flow.period / 2)
            if np.any(reached):
                bi = best_idx[reached]
                a = self.flow.geom(ut[reached], self._clip(xe[bi])).a
                grad[reached] = a * pe[bi] / (2 * us[reached])
                l[reached] = L[reached] / (2 * us[reached])
        smooth = reached & ~tie & ~conj
        if self.flow.period is not None:
            smooth &= uq <= self.flow.period / 2 - self.cut_margin
        return ReducedDistance(q, tau, l[inverse], L[inverse], v[inverse], grad[inverse],
                               nbr[inverse], tie[inverse], conj[inverse], reached[inverse],
                               smooth[inverse])

    def _refine(self, y, v_lo, v_hi, f_lo, f_hi, sb):
        """Illinois regula falsi on all brackets at once."""
        v_lo, v_hi, f_lo, f_hi = (np.array(a, dtype=float) for a in (v_lo, v_hi, f_lo, f_hi))
        B = y.size
        v_new = np.where(f_lo == 0.0, v_lo, 0.5 * (v_lo + v_hi))
        done = np.zeros(B, bool)
        side = np.zeros(B, int)
        xe = np.zeros(B)
        pe = np.zeros(B)
        Le = np.zeros(B)
        esc = np.zeros(B, bool)
        slope = (f_hi - f_lo) / (v_hi - v_lo)
        for _ in range(self.max_iter):
            act = np.nonzero(~done)[0]
            if act.size == 0:
                break
            denom = f_hi[act] - f_lo[act]
            cand = np.where(denom != 0,
                            (v_lo[act] * f_hi[act] - v_hi[act] * f_lo[act]) / np.where(denom != 0, denom, 1),
                            0.5 * (v_lo[act] + v_hi[act]))
            cand = np.where(f_lo[act] == 0.0, v_lo[act], cand)
            bad = ~((cand >= np.minimum(v_lo[act], v_hi[act])) & (cand <= np.maximum(v_lo[act], v_hi[act])))
            cand[bad] = 0.5 * (v_lo[act][bad] + v_hi[act][bad])
            x, p, L, e = self._solve_endpoints(cand, sb[act])
            f = x - y[act]
            v_new[act] = cand
            xe[act], pe[act], Le[act], esc[act] = x, p, L, e
            conv = (np.abs(f) <= self.tol_x * (1 + np.abs(y[act]))) | e
            width = np.abs(v_hi[act] - v_lo[act]) <= 4e-16 * np.maximum(1, np.abs(cand))
            conv |= width
            done[act[conv]] = True
            rest = ~conv
            a = act[rest]
            fr = f[rest]
            same = np.sign(fr) == np.sign(f_lo[a])
            # replace the endpoint on the same side; halve the other (Illinois)
            lo_idx, hi_idx = a[same], a[~same]
            v_lo[lo_idx], f_lo[lo_idx] = cand[rest][same], fr[same]
            f_hi[lo_idx] = np.where(side[lo_idx] == -1, 0.5 * f_hi[lo_idx], f_hi[lo_idx])
            side[lo_idx] = -1
            v_hi[hi_idx], f_hi[hi_idx] = cand[rest][~same], fr[~same]
            f_lo[hi_idx] = np.where(side[hi_idx] == 1, 0.5 * f_lo[hi_idx], f_lo[hi_idx])
            side[hi_idx] = 1
        ok = done & ~esc
        return v_new, xe, pe, Le, slope, ok


# ---------------------------------------------------------------------------
# module-level conveniences

def shoot(flow, v, tau_bar, **kw) -> LGeodesicResult:
    """Integrate the L-geodesic with initial velocity ``v`` up to ``tau_bar``."""
    return LSolver(flow, **kw).shoot(v, tau_bar)


def solve_bvp(flow, target, tau_bar, **kw) -> LGeodesicResult:
    """Minimal L-geodesic from ``(pole, 0)`` to ``(target, tau_bar)``."""
    rd = LSolver(flow, **kw).reduced_distance(np.array([target]), np.array([tau_bar]))
    if not rd.reached[0]:
        raise UnreachedTargetError(
            f"no branch reached x = {target} at tau = {tau_bar}; widen the fan range")
    return LGeodesicResult(float(rd.q[0]), float(tau_bar), float(rd.L[0]), float(rd.l[0]),
                           float(rd.v[0]), float(rd.grad[0]), True, bool(rd.conjugate[0]),
                           bool(rd.smooth[0]))


def reduced_distance(flow, q, tau, **kw) -> ReducedDistance:
    return LSolver(flow, **kw).reduced_distance(q, tau)


# ---------------------------------------------------------------------------
# fields and local jets

#: five-point offsets and weights for first and second derivatives
STENCIL = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
_W1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_W2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


@dataclass(frozen=True, eq=False)
class ReducedField:
    """Reduced distance and its derivatives at a set of nodes.

    Spatial derivatives are in the coordinate ``x``; ``grad`` is the radial
    component of the gradient taken from the endpoint velocity of the
    minimal L-geodesic, while ``grad_fd`` is ``l_x / a``.
    """

    flow: FlowHistory
    x: np.ndarray
    tau: np.ndarray
    l: np.ndarray
    l_x: np.ndarray
    l_xx: np.ndarray
    l_tau: np.ndarray
    grad: np.ndarray
    lap: np.ndarray
    hess_rad: np.ndarray
    hess_tan: np.ndarray
    smooth: np.ndarray
    h: float
    h_tau: float
    # u = (4 pi tau)^(-n/2) e^-l and its stencil derivatives
    u: np.ndarray
    u_tau: np.ndarray
    lap_u: np.ndarray
    geom: tuple

    @property
    def grad_fd(self):
        return self.l_x / self.geom.a

    def scaled(self, factor: float) -> "ReducedField":
        """The field of ``factor * l`` (fault injection)."""
        f = factor
        return replace(self, l=f * self.l, l_x=f * self.l_x, l_xx=f * self.l_xx,
                       l_tau=f * self.l_tau, grad=f * self.grad, lap=f * self.lap,
                       hess_rad=f * self.hess_rad, hess_tan=f * self.hess_tan)

    def shape_as(self, arr, shape):
        return np.asarray(arr).reshape(shape)


def _laplacian_parts(flow, G, x, l_x, l_xx, n):
    a, a_x, psi, psi_x = G.a, G.a_x, G.psi, G.psi_x
    hess_rad = (l_xx - (a_x / a) * l_x) / a**2
    pole = np.abs(psi) < 1e-12 * np.maximum(1.0, a)
    with np.errstate(divide="ignore", invalid="ignore"):
        hess_tan = np.where(pole, hess_rad, psi_x * l_x / (a**2 * np.where(pole, 1.0, psi)))
    lap = hess_rad + (n - 1) * hess_tan
    return lap, hess_rad, hess_tan


def local_jets(solver: LSolver, x, tau, h=1e-2, h_tau=5e-3) -> ReducedField:
    """Reduced distance with five-point derivatives at the nodes ``(x, tau)``.

    The spatial step is ``h`` in the metric of ``g(tau)`` at the node, the
    time step is ``h_tau * tau``.
    """
    flow = solver.flow
    n = flow.n
    x = np.atleast_1d(np.asarray(x, dtype=float))
    tau = np.broadcast_to(np.atleast_1d(np.asarray(tau, dtype=float)), x.shape).copy()
    G = flow.geom(tau, x)
    hx = h / G.a
    ht = h_tau * tau
    N = x.size
    xs = x[:, None] + STENCIL[None, :] * hx[:, None]
    ts = tau[:, None] + STENCIL[None, :] * ht[:, None]
    X = np.concatenate([xs, np.repeat(x[:, None], 5, 1)], axis=1)
    T = np.concatenate([np.repeat(tau[:, None], 5, 1), ts], axis=1)
    rd = solver.reduced_distance(X.ravel(), T.ravel())
    lv = rd.l.reshape(N, 10)
    lx_s, lt_s = lv[:, :5], lv[:, 5:]
    sm = rd.smooth.reshape(N, 10).all(axis=1)
    l0 = lx_s[:, 2]
    l_x = lx_s @ _W1 / hx
    l_xx = lx_s @ _W2 / hx**2
    l_tau = lt_s @ _W1 / ht
    grad = rd.grad.reshape(N, 10)[:, 2]
    # the gradient is odd in x; the solver returns it for |x|
    grad = np.where(x < 0, -grad, grad)
    lap, hr, ht_ = _laplacian_parts(flow, G, x, l_x, l_xx, n)
    u_x = (4 * math.pi * tau[:, None]) ** (-n / 2) * np.exp(-lx_s)
    u_t = (4 * math.pi * ts) ** (-n / 2) * np.exp(-lt_s)
    u = u_x[:, 2]
    ux = u_x @ _W1 / hx
    uxx = u_x @ _W2 / hx**2
    u_tau = u_t @ _W1 / ht
    lap_u, _, _ = _laplacian_parts(flow, G, x, ux, uxx, n)
    return ReducedField(flow, x, tau, l0, l_x, l_xx, l_tau, grad, lap, hr, ht_, sm, h, h_tau,
                        u, u_tau, lap_u, G)


def reduced_field(flow, taus, xs, *, h=1e-2, h_tau=5e-3, solver: Optional[LSolver] = None,
                  **kw) -> ReducedField:
    """Field on the lattice ``taus x xs`` (flattened tau-major)."""
    solver = solver or LSolver(flow, **kw)
    T, X = np.meshgrid(np.asarray(taus, float), np.asarray(xs, float), indexing="ij")
    return local_jets(solver, X.ravel(), T.ravel(), h=h, h_tau=h_tau)


@dataclass(frozen=True, eq=False)
class IdentityResiduals:
    """Pointwise residuals of the three reduced-distance identities.

    ``res1 = 2 l_tau + |grad l|^2 - R + l/tau``            (should be 0)
    ``res2 = l_tau - lap l + |grad l|^2 - R + n/(2 tau)``  (should be >= 0)
    ``res3 = 2 lap l - |grad l|^2 + R + (l - n)/tau``      (should be <= 0)
    """

    x: np.ndarray
    tau: np.ndarray
    res1: np.ndarray
    res2: np.ndarray
    res3: np.ndarray
    smooth: np.ndarray

    def worst(self):
        s = self.smooth
        if not np.any(s):
            return {"res1": math.nan, "res2_min": math.nan, "res3_max": math.nan}
        return {"res1": float(np.max(np.abs(self.res1[s]))),
                "res2_min": float(np.min(self.res2[s])),
                "res3_max": float(np.max(self.res3[s]))}


def identity_residuals(field: ReducedField) -> IdentityResiduals:
    f = field
    n = f.flow.n
    R = f.geom.R
    g2 = f.grad**2
    res1 = 2 * f.l_tau + g2 - R + f.l / f.tau
    res2 = f.l_tau - f.lap + g2 - R + n / (2 * f.tau)
    res3 = 2 * f.lap - g2 + R + (f.l - n) / f.tau
    nan = ~np.isfinite(res1) | ~np.isfinite(res2) | ~np.isfinite(res3)
    return IdentityResiduals(f.x, f.tau, res1, res2, res3, f.smooth & ~nan)
