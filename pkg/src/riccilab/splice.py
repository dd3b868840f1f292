"""Ancient solutions spliced together from copies of a shrinking breather.

A breather is a flow ``g0`` on ``[0, 1]`` with ``alpha g0(1) = phi^* g0(0)``.
The spliced flow is

    g(tau) = g0(tau)                                     for tau in [0, tau_0]
    g(tau) = alpha^-i (phi^i)^* g0(alpha^i (tau - tau_{i-1}))   on [tau_{i-1}, tau_i]

with junction times ``tau_i = sum_{k<=i} alpha^-k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, ParameterError
from .flow import GridFlow, one_sided_time_derivatives
from .models import FlowHistory, RadialGeom

__all__ = [
    "Diffeo",
    "BreatherSpec",
    "SplicedFlow",
    "RescaledFlow",
    "JunctionReport",
    "RadialSegment",
    "junction_times",
    "breather_residual",
    "splice",
    "junction_certificate",
    "tau_sandwich",
    "base_points",
    "test_curve",
    "test_curve_bound",
    "test_curve_bounds",
    "rescaled_copy_identity",
]


@dataclass(frozen=True)
class Diffeo:
    """``identity`` or ``radial_scaling`` (x -> lam x)."""

    kind: str = "identity"
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in ("identity", "radial_scaling"):
            raise ParameterError(f"unknown diffeomorphism {self.kind!r}")
        if self.kind == "identity" and self.lam != 1.0:
            raise ParameterError("identity takes no scale factor")
        if not self.lam > 0:
            raise ParameterError("radial scaling factor must be positive")

    @classmethod
    def radial_scaling(cls, lam):
        return cls("radial_scaling", float(lam))

    def power(self, k):
        """Scale factor of ``phi^k``."""
        return self.lam ** k

    def describe(self):
        return {"kind": self.kind, "lam": self.lam}


def breather_residual(g0: FlowHistory, alpha: float, phi: Diffeo) -> float:
    """Relative max-norm of ``alpha g0(1) - phi^* g0(0)`` over sample points."""
    if phi.kind == "radial_scaling" and g0.kind == "round":
        raise ParameterError("radial scaling is not a diffeomorphism of the round sphere")
    xs = g0.sample_points
    lam = phi.lam
    if getattr(g0, "grid", None) is not None:
        xs = xs[lam * xs <= g0.grid[-1]]
    G1 = g0.geom(np.ones_like(xs), xs)
    G0 = g0.geom(np.zeros_like(xs), lam * xs)
    lhs = alpha * np.concatenate([G1.a**2, G1.psi**2])
    rhs = np.concatenate([(lam * G0.a) ** 2, G0.psi**2])
    return float(np.max(np.abs(lhs - rhs) / np.abs(rhs)))


@dataclass(frozen=True, eq=False)
class BreatherSpec:
    g0: FlowHistory
    alpha: float
    phi: Diffeo = field(default_factory=Diffeo)
    tol: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ParameterError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.g0.tau_min > 0 or self.g0.tau_max < 1:
            raise ParameterError("g0 must be defined on [0, 1]")

    @property
    def tolerance(self) -> float:
        if self.tol is not None:
            return self.tol
        if isinstance(self.g0, GridFlow):
            return 10.0 * float(self.g0.meta.get("rtol", 1e-8))
        return 1e-10

    @property
    def residual(self) -> float:
        return breather_residual(self.g0, self.alpha, self.phi)

    @property
    def certified(self) -> bool:
        return self.residual <= self.tolerance


def junction_times(alpha: float, i_max: int) -> np.ndarray:
    """``tau_i = sum_{k=0}^{i} alpha^-k`` for i = 0..i_max."""
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    if i_max < 0:
        raise ParameterError("i_max must be non-negative")
    return np.cumsum(alpha ** -np.arange(i_max + 1, dtype=float))


def tau_sandwich(alpha: float, taus: np.ndarray) -> bool:
    """``alpha^-i <= tau_i <= alpha^-i / (1 - alpha)`` for every junction."""
    i = np.arange(taus.size)
    lo = alpha ** -i
    return bool(np.all(lo <= taus * (1 + 1e-15)) and np.all(taus <= lo / (1 - alpha) * (1 + 1e-15)))


class SplicedFlow(FlowHistory):
    """Piecewise flow assembled from pulled-back, rescaled copies of ``g0``."""

    provenance = "spliced"

    def __init__(self, breather: BreatherSpec, i_max: int):
        self.breather = breather
        self.junctions = junction_times(breather.alpha, i_max)
        self.i_max = int(i_max)
        g0 = breather.g0
        super().__init__(g0.n, 0.0, float(self.junctions[-1]))
        self.kind = g0.kind
        self.period = g0.period
        self.grid = getattr(g0, "grid", None)

    @property
    def sample_points(self):
        return self.breather.g0.sample_points

    @property
    def breaks(self):
        return self.junctions[:-1]

    @property
    def time_smooth(self):
        # copies of a certified breather match to all orders at the junctions
        return self.breather.certified

    def piece(self, tau, side=None):
        side = "right" if side == "right" else "left"
        return np.searchsorted(self.junctions, np.asarray(tau, dtype=float), side=side)

    def piece_geom(self, i, tau, x) -> RadialGeom:
        """Geometry of the i-th copy, ``alpha^-i (phi^i)^* g0(alpha^i (tau - tau_{i-1}))``."""
        alpha = self.breather.alpha
        lam = self.breather.phi.lam
        i = np.asarray(i)
        x = np.asarray(x, dtype=float)
        tau = np.asarray(tau, dtype=float)
        prev = np.where(i > 0, self.junctions[np.maximum(i - 1, 0)], 0.0)
        ai = alpha ** i.astype(float)
        li = lam ** i.astype(float)
        u = np.clip(ai * (tau - prev), 0.0, 1.0)
        G = self.breather.g0.geom(u, li * x)
        m = 1.0 / np.sqrt(ai)
        return RadialGeom(m * li * G.a, m * li**2 * G.a_x, m * G.psi, m * li * G.psi_x,
                          ai * G.R, ai * li * G.R_x, ai * G.ric_rad, ai * G.ric_tan)

    def geom(self, tau, x, side=None):
        tau = self.check_tau(tau)
        tau, x = np.broadcast_arrays(tau, np.asarray(x, dtype=float))
        i = self.piece(tau, side)
        if np.any(i > self.i_max):
            raise DomainError("tau beyond the last junction")
        return self.piece_geom(i, tau, x)

    def describe(self):
        b = self.breather
        return super().describe() | {"alpha": b.alpha, "phi": b.phi.describe(),
                                     "i_max": self.i_max, "g0": b.g0.describe()}


class RescaledFlow(FlowHistory):
    """Parabolic blow-down ``g_T(tau) = T^-1 g(T tau)``."""

    def __init__(self, base: FlowHistory, factor: float):
        if not factor > 0:
            raise ParameterError("rescaling factor must be positive")
        self.base = base
        self.factor = float(factor)
        super().__init__(base.n, base.tau_min / factor, base.tau_max / factor)
        self.kind = base.kind
        self.period = base.period
        self.grid = getattr(base, "grid", None)
        self.provenance = base.provenance

    @property
    def sample_points(self):
        return self.base.sample_points

    @property
    def breaks(self):
        return np.asarray(self.base.breaks) / self.factor

    @property
    def time_smooth(self):
        return self.base.time_smooth

    def geom(self, tau, x, side=None):
        T = self.factor
        G = self.base.geom(np.asarray(tau, dtype=float) * T, x, side=side)
        m = 1.0 / math.sqrt(T)
        return RadialGeom(m * G.a, m * G.a_x, m * G.psi, m * G.psi_x, T * G.R, T * G.R_x,
                          T * G.ric_rad, T * G.ric_tan)

    def dcomponents(self, tau, x=None, side=None):
        # d/dtau of T^-1 g(T tau) is g'(T tau)
        return self.base.dcomponents(tau * self.factor, x, side)

    def describe(self):
        return super().describe() | {"rescaled_by": self.factor}


def splice(breather: BreatherSpec, i_max: int, *, force: bool = False) -> SplicedFlow:
    """Assemble the spliced flow on ``[0, tau_{i_max}]``.

    Refuses an uncertified breather unless ``force`` is set, which is used
    to inspect deliberately corrupted inputs.
    """
    if not force and not breather.certified:
        raise ParameterError(
            f"breather identity residual {breather.residual:.3e} exceeds "
            f"tolerance {breather.tolerance:.1e}")
    return SplicedFlow(breather, i_max)


@dataclass(frozen=True)
class JunctionReport:
    """Per-junction gaps; ``gaps[i, k]`` is the order-k gap at ``tau_i``."""

    taus: np.ndarray
    gaps: np.ndarray
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.gaps <= self.tol))

    @property
    def max_gap(self) -> float:
        return float(np.max(self.gaps)) if self.gaps.size else 0.0


def junction_certificate(spliced: SplicedFlow, k: int = 2, tol: float = 1e-6,
                         h_rel: float = 1e-3) -> JunctionReport:
    """Compare one-sided time derivatives of orders ``0..k`` at each junction.

    Gaps are measured in the frame of ``g(tau_i)`` and made dimensionless
    with ``tau_i^k``, so the same tolerance applies at every scale.
    """
    taus = spliced.junctions[:-1]
    rows = []
    alpha = spliced.breather.alpha
    for i, t in enumerate(taus):
        left_len = t - (spliced.junctions[i - 1] if i > 0 else 0.0)
        h = h_rel * min(left_len, left_len / alpha)
        base = np.abs(spliced.components(t, side="left"))
        gaps = []
        for order in range(k + 1):
            left, right = one_sided_time_derivatives(spliced, t, order, h=h)
            gaps.append(float(np.max(np.abs(left - right) / base)) * t**order)
        rows.append(gaps)
    return JunctionReport(taus, np.array(rows).reshape(len(taus), k + 1), tol)


def base_points(breather: BreatherSpec, p0: float, i_max: int) -> np.ndarray:
    """``x_i = phi^-(i+1)(p0)`` for i = 0..i_max, as radial coordinates."""
    lam = breather.phi.lam
    return p0 / lam ** np.arange(1, i_max + 2, dtype=float)


@dataclass(frozen=True)
class RadialSegment:
    """Constant-speed radial curve ``tau -> start + tau (end - start)`` on [0, 1]."""

    start: float
    end: float

    def point(self, tau):
        return self.start + np.asarray(tau) * (self.end - self.start)

    def velocity(self, tau):
        return np.full(np.shape(tau), float(self.end - self.start))


def test_curve(spliced: SplicedFlow, p0: float, i: int, sigma=None, samples: int = 65):
    """Pieces of the concatenated curve from ``(p0, 0)`` to ``(x_{i+1}, tau_{i+1})``.

    Returns a list of :class:`~riccilab.lgeodesic.LCurve`, one per smooth
    piece: ``sigma`` on ``[0, 1]``, then the pulled-back copies
    ``sigma_j(tau) = phi^-(j+1) sigma(alpha^(j+1)(tau - tau_j))`` on
    ``[tau_j, tau_{j+1}]`` for j = 0..i.
    """
    from .lgeodesic import LCurve

    if i < 0 or i + 1 > spliced.i_max:
        raise DomainError(f"test curve for i = {i} needs i_max >= {i + 1}")
    b = spliced.breather
    if sigma is None:
        sigma = RadialSegment(p0, float(base_points(b, p0, 0)[0]))
    alpha, lam = b.alpha, b.phi.lam
    J = spliced.junctions
    # every piece is sampled uniformly in sigma = sqrt(tau), the variable of the quadrature
    t = np.linspace(0.0, 1.0, samples) ** 2
    curves = [LCurve.from_tau(spliced, t, sigma.point(t), sigma.velocity(t), piece=0)]
    for j in range(i + 1):
        s = np.linspace(math.sqrt(J[j]), math.sqrt(J[j + 1]), samples)
        tau = s**2
        u = np.clip(alpha ** (j + 1) * (tau - J[j]), 0.0, 1.0)
        scale = lam ** -(j + 1)
        x = scale * sigma.point(u)
        dx = scale * alpha ** (j + 1) * sigma.velocity(u)
        curves.append(LCurve.from_tau(spliced, tau, x, dx, piece=j + 1))
    grid = spliced.grid
    if grid is not None:
        for c in curves:
            if np.any(np.abs(c.x) > grid[-1]):
                raise DomainError("test curve leaves the model domain")
    return curves


def test_curve_bound(spliced: SplicedFlow, p0: float, i: int, sigma=None,
                     samples: int = 65) -> float:
    """Upper bound ``L(gamma_i) / (2 sqrt(tau_{i+1}))`` for ``l(x_{i+1}, tau_{i+1})``."""
    from .lgeodesic import l_energy

    curves = test_curve(spliced, p0, i, sigma, samples)
    return l_energy(curves) / (2.0 * math.sqrt(spliced.junctions[i + 1]))


def test_curve_bounds(spliced: SplicedFlow, p0: float, i_last: int, sigma=None,
                      samples: int = 65) -> np.ndarray:
    """Bounds for i = 0..i_last, reusing the piecewise energies."""
    from .lgeodesic import l_energy

    curves = test_curve(spliced, p0, i_last, sigma, samples)
    energies = np.cumsum([l_energy(c) for c in curves])
    J = spliced.junctions
    return np.array([energies[i + 1] / (2.0 * math.sqrt(J[i + 1])) for i in range(i_last + 1)])


def rescaled_copy_identity(spliced: SplicedFlow, i: int, samples: int = 9):
    """Check ``tau_i^-1 g(tau_i tau)`` against the single pulled-back copy.

    On ``tau in [1, tau_{i+1}/tau_i]`` the rescaled flow equals
    ``tau_i^-1 alpha^-(i+1) (phi^(i+1))^* g0(alpha^(i+1) tau_i (tau - 1))``.
    Returns the relative residual and the factor ``tau_i^-1 alpha^-(i+1)``,
    which tends to ``(1 - alpha)/alpha``.
    """
    if i + 1 > spliced.i_max:
        raise DomainError(f"need i_max >= {i + 1}")
    b = spliced.breather
    J = spliced.junctions
    ti = J[i]
    factor = b.alpha ** -(i + 1) / ti
    lam = b.phi.lam ** (i + 1)
    tau = np.linspace(1.0, J[i + 1] / ti, samples)
    xs = spliced.sample_points
    T, X = np.meshgrid(tau, xs, indexing="ij")
    G = RescaledFlow(spliced, ti).geom(T, X, side="left")
    u = np.clip(b.alpha ** (i + 1) * ti * (T - 1.0), 0.0, 1.0)
    G0 = b.g0.geom(u, lam * X)
    a_ref = np.sqrt(factor) * lam * G0.a
    psi_ref = np.sqrt(factor) * G0.psi
    res = max(np.max(np.abs(G.a**2 - a_ref**2) / a_ref**2),
              np.max(np.abs(G.psi**2 - psi_ref**2) / np.maximum(psi_ref**2, 1e-300)))
    return float(res), float(factor)
