"""Model geometries, curvature of warped products and closed-form flows.

Every metric handled by the library has the warped form

    g = a(x)^2 dx^2 + psi(x)^2 g_{S^{n-1}}

in a signed radial coordinate ``x``.  The flat space uses ``a = 1`` and
``psi = x``; the round sphere of scale ``s`` uses ``a = sqrt(s)`` and
``psi = sqrt(s) sin x`` so that ``x`` is the polar angle.  Rotationally
symmetric planes carry ``a`` and ``psi`` as nodal arrays on a uniform grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Optional, Union

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DegenerateMetricError, DomainError, ParameterError

__all__ = [
    "HomogeneousFlat",
    "HomogeneousRound",
    "RotSymPlane",
    "MetricSnapshot",
    "CurvatureSample",
    "RadialGeom",
    "FlowHistory",
    "GaussianStatic",
    "ShrinkingSphere",
    "radial_curvature",
    "curvature_at",
    "exact_flow",
    "load_profile",
    "save_profile",
    "sphere_profile",
    "flat_profile",
    "sphere_volume",
]


def sphere_volume(m: int) -> float:
    """Volume of the unit round sphere ``S^m``."""
    return 2.0 * math.pi ** ((m + 1) / 2.0) / math.gamma((m + 1) / 2.0)


def _check_dim(n) -> int:
    if int(n) != n or n < 2:
        raise ParameterError(f"dimension must be an integer >= 2, got {n!r}")
    return int(n)


@dataclass(frozen=True)
class HomogeneousFlat:
    n: int

    def __post_init__(self):
        _check_dim(self.n)

    kind = "flat"


@dataclass(frozen=True)
class HomogeneousRound:
    n: int

    def __post_init__(self):
        _check_dim(self.n)

    kind = "round"


@dataclass(frozen=True, eq=False)
class RotSymPlane:
    """Rotationally symmetric metric ``a^2 dr^2 + psi^2 g_S`` on a radial grid.

    The grid must be uniform and start at the pole ``r = 0``.  ``a``
    defaults to one, in which case ``r`` is arclength.
    """

    n: int
    r: np.ndarray
    psi: np.ndarray
    a: Optional[np.ndarray] = None

    kind = "rotsym"

    def __post_init__(self):
        _check_dim(self.n)
        r = np.asarray(self.r, dtype=float)
        psi = np.asarray(self.psi, dtype=float)
        a = np.ones_like(r) if self.a is None else np.asarray(self.a, dtype=float)
        if r.ndim != 1 or r.shape != psi.shape or r.shape != a.shape:
            raise ParameterError("r, psi and a must be 1-d arrays of equal length")
        if r.size < 6:
            raise ParameterError("a RotSymPlane grid needs at least 6 nodes")
        if r[0] != 0.0:
            raise ParameterError("the radial grid must start at the pole r = 0")
        dr = np.diff(r)
        if np.any(dr <= 0) or np.ptp(dr) > 1e-9 * dr.mean():
            raise ParameterError("the radial grid must be uniform and increasing")
        if abs(psi[0]) > 1e-14:
            raise DegenerateMetricError("psi must vanish at the pole")
        bad = np.nonzero(psi[1:] <= 0)[0]
        if bad.size:
            raise DegenerateMetricError(
                f"psi is not positive at r = {r[bad[0] + 1]:.6g}")
        if np.any(a <= 0):
            raise DegenerateMetricError("the radial stretch a must be positive")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "a", a)

    @property
    def h(self) -> float:
        return float(self.r[1] - self.r[0])


ModelGeometry = Union[HomogeneousFlat, HomogeneousRound, RotSymPlane]


@dataclass(frozen=True, eq=False)
class MetricSnapshot:
    """Metric at one backward time.  ``scale`` is the factor ``s`` of a
    homogeneous metric ``s * g_unit`` and is 1 for profile metrics."""

    tau: float
    geometry: ModelGeometry
    scale: float = 1.0


@dataclass(frozen=True)
class CurvatureSample:
    tau: float
    r: float
    R: float
    ric_rad: float
    ric_tan: float
    dR_dr: float


class RadialGeom(NamedTuple):
    """Warping data and curvature of a flow at points ``(tau, x)``."""

    a: np.ndarray
    a_x: np.ndarray
    psi: np.ndarray
    psi_x: np.ndarray
    R: np.ndarray
    R_x: np.ndarray
    ric_rad: np.ndarray
    ric_tan: np.ndarray


# ---------------------------------------------------------------------------
# finite differences on the radial grid

def _ghosted(f, parity):
    # two ghost nodes left of the pole from the reflection symmetry
    return np.concatenate([parity * f[2:0:-1], f])


def _d1(f, h, parity):
    """First derivative: fourth order central, second order near the far end."""
    g = _ghosted(f, parity)
    J = f.size
    d = np.empty(J)
    d[: J - 2] = (g[0:J - 2] - 8 * g[1:J - 1] + 8 * g[3:J + 1] - g[4:J + 2]) / (12 * h)
    d[J - 2] = (f[J - 1] - f[J - 3]) / (2 * h)
    d[J - 1] = (3 * f[J - 1] - 4 * f[J - 2] + f[J - 3]) / (2 * h)
    return d


def _d2(f, h, parity, end_slope=None):
    """Second derivative: second order central with a one-sided closure.

    With ``end_slope`` the last node uses a Neumann ghost instead.
    """
    g = _ghosted(f, parity)
    J = f.size
    d = np.empty(J)
    d[: J - 1] = (g[1:J] - 2 * g[2:J + 1] + g[3:J + 2]) / h**2
    if end_slope is None:
        d[J - 1] = (2 * f[J - 1] - 5 * f[J - 2] + 4 * f[J - 3] - f[J - 4]) / h**2
    else:
        d[J - 1] = 2 * (f[J - 2] - f[J - 1] + h * end_slope) / h**2
    return d


def radial_curvature(n, r, psi, a=None, psi_x_end=None):
    """Curvature of ``a^2 dr^2 + psi^2 g_S`` at the grid nodes.

    Returns a dict of nodal arrays ``R``, ``ric_rad``, ``ric_tan``, ``R_x``,
    together with the coordinate derivatives ``a_x`` and ``psi_x``.  The
    first derivative uses a fourth order stencil so that the tangential
    sectional curvature ``(1 - psi_s^2)/psi^2`` stays accurate next to the
    pole, where it is a ratio of two small numbers.  The pole value is the
    even Richardson extrapolation of the first two nodes.
    """
    r = np.asarray(r, dtype=float)
    psi = np.asarray(psi, dtype=float)
    a = np.ones_like(r) if a is None else np.asarray(a, dtype=float)
    h = r[1] - r[0]
    psi_x = _d1(psi, h, -1.0)
    if psi_x_end is not None:
        psi_x[-1] = psi_x_end
    psi_xx = _d2(psi, h, -1.0, end_slope=psi_x_end)
    a_x = _d1(a, h, 1.0)
    a_x[0] = 0.0
    psi_s = psi_x / a
    psi_ss = (psi_xx - a_x * psi_x / a) / a**2
    k_rad = np.empty_like(r)
    k_tan = np.empty_like(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        k_rad[1:] = -psi_ss[1:] / psi[1:]
        k_tan[1:] = (1.0 - psi_s[1:] ** 2) / psi[1:] ** 2
    k_rad[0] = (4 * k_rad[1] - k_rad[2]) / 3
    k_tan[0] = (4 * k_tan[1] - k_tan[2]) / 3
    ric_rad = (n - 1) * k_rad
    ric_tan = k_rad + (n - 2) * k_tan
    R = ric_rad + (n - 1) * ric_tan
    R_x = _d1(R, h, 1.0)
    R_x[0] = 0.0
    return {"R": R, "ric_rad": ric_rad, "ric_tan": ric_tan, "R_x": R_x,
            "a_x": a_x, "psi_x": psi_x}


def _even_spline(r, f, parity):
    rr = np.concatenate([-r[:0:-1], r])
    ff = np.concatenate([parity * f[:0:-1], f])
    return CubicSpline(rr, ff)


def curvature_at(snapshot: MetricSnapshot, r: float) -> CurvatureSample:
    """Scalar, radial Ricci and tangential Ricci curvature at radius ``r``."""
    geo = snapshot.geometry
    n = geo.n
    if isinstance(geo, HomogeneousFlat):
        return CurvatureSample(snapshot.tau, float(r), 0.0, 0.0, 0.0, 0.0)
    if isinstance(geo, HomogeneousRound):
        s = snapshot.scale
        if not s > 0:
            raise DegenerateMetricError(f"round scale must be positive, got {s}")
        ric = (n - 1) / s
        return CurvatureSample(snapshot.tau, float(r), n * ric, ric, ric, 0.0)
    if not 0.0 <= r <= geo.r[-1] * (1 + 1e-12):
        raise DomainError(f"r = {r} outside the grid [0, {geo.r[-1]}]")
    cur = radial_curvature(n, geo.r, geo.psi, geo.a)
    vals = [float(_even_spline(geo.r, cur[k], 1.0)(r))
            for k in ("R", "ric_rad", "ric_tan")]
    dR = float(_even_spline(geo.r, cur["R"], 1.0)(r, 1))
    return CurvatureSample(snapshot.tau, float(r), *vals, dR)


# ---------------------------------------------------------------------------
# flows

class FlowHistory:
    """A backward Ricci flow ``d/dtau g = 2 Ric`` on ``[tau_min, tau_max]``.

    Subclasses implement :meth:`geom`, which returns the warping data and
    curvature at arrays of times and radial coordinates.  Everything else
    (metric components, snapshots, residuals) is built on top of it.
    """

    provenance = "closed-form"
    kind = "flat"
    #: coordinate period of the radial direction (2 pi on round spheres)
    period: Optional[float] = None
    #: interpolation order in time; 0 means the flow is exact
    order = 0
    #: False when the metric may jump at ``breaks`` (solvers then restart there)
    time_smooth = True

    def __init__(self, n, tau_min=0.0, tau_max=math.inf):
        self.n = _check_dim(n)
        if not tau_max > tau_min:
            raise ParameterError("tau_max must exceed tau_min")
        self.tau_min = float(tau_min)
        self.tau_max = float(tau_max)

    @property
    def homogeneous(self) -> bool:
        return self.kind in ("flat", "round")

    @property
    def sample_points(self) -> np.ndarray:
        return np.array([0.5])

    @property
    def breaks(self) -> np.ndarray:
        """Times where the flow is only piecewise smooth."""
        return np.empty(0)

    def check_tau(self, tau):
        t = np.asarray(tau, dtype=float)
        span = max(1.0, abs(self.tau_max) if math.isfinite(self.tau_max) else 1.0)
        if np.any(t < self.tau_min - 1e-12 * span) or np.any(t > self.tau_max * (1 + 1e-12)):
            raise DomainError(
                f"tau outside [{self.tau_min}, {self.tau_max}]: "
                f"{np.min(t):.6g}..{np.max(t):.6g}")
        return t

    def geom(self, tau, x, side=None) -> RadialGeom:  # pragma: no cover
        raise NotImplementedError

    def distance(self, x):
        """Map signed coordinates to radial distance from the pole."""
        x = np.abs(np.asarray(x, dtype=float))
        if self.period is not None:
            x = np.mod(x, self.period)
            x = np.minimum(x, self.period - x)
        return x

    def components(self, tau, x=None, side=None) -> np.ndarray:
        """Metric components ``(a^2, psi^2)`` at the sample points."""
        xs = self.sample_points if x is None else np.atleast_1d(np.asarray(x, float))
        G = self.geom(np.full(xs.shape, float(tau)), xs, side=side)
        keep = np.abs(G.psi) > 0
        return np.concatenate([G.a**2, G.psi[keep] ** 2])

    def ricci2(self, tau, x=None, side=None) -> np.ndarray:
        """Components of ``2 Ric`` in the same layout as :meth:`components`."""
        xs = self.sample_points if x is None else np.atleast_1d(np.asarray(x, float))
        G = self.geom(np.full(xs.shape, float(tau)), xs, side=side)
        keep = np.abs(G.psi) > 0
        return np.concatenate([2 * G.ric_rad * G.a**2,
                               2 * G.ric_tan[keep] * G.psi[keep] ** 2])

    def dcomponents(self, tau, x=None, side=None):
        """Exact time derivative of :meth:`components`, or None."""
        return None

    def geometry_at(self, tau, side=None):
        if self.kind == "flat":
            return HomogeneousFlat(self.n), 1.0
        if self.kind == "round":
            G = self.geom(np.array([float(tau)]), np.array([0.0]), side=side)
            return HomogeneousRound(self.n), float(G.a[0] ** 2)
        grid = self.grid
        G = self.geom(np.full(grid.shape, float(tau)), grid, side=side)
        return RotSymPlane(self.n, grid, np.where(grid == 0, 0.0, G.psi), G.a), 1.0

    def snapshot(self, tau, side=None) -> MetricSnapshot:
        self.check_tau(tau)
        geo, scale = self.geometry_at(tau, side=side)
        return MetricSnapshot(float(tau), geo, scale)

    def sample(self, taus):
        return [self.snapshot(t) for t in taus]

    def describe(self) -> dict:
        return {"kind": self.kind, "n": self.n, "provenance": self.provenance,
                "tau_min": self.tau_min, "tau_max": self.tau_max}


class GaussianStatic(FlowHistory):
    """The static flat metric, whose reduced volume is the Gaussian soliton."""

    kind = "flat"

    def __init__(self, n, tau_min=0.0, tau_max=math.inf):
        super().__init__(n, tau_min, tau_max)
        self.sample_points_ = np.array([1.0])

    @property
    def sample_points(self):
        return self.sample_points_

    def geom(self, tau, x, side=None):
        x = np.asarray(x, dtype=float)
        tau = np.broadcast_to(self.check_tau(tau), x.shape)
        z = np.zeros(np.broadcast(tau, x).shape)
        return RadialGeom(z + 1.0, z, z + x, z + 1.0, z, z, z, z)

    def dcomponents(self, tau, x=None, side=None):
        return np.zeros_like(self.components(tau, x, side))

    def describe(self):
        return super().describe() | {"model": "gaussian_static"}


class ShrinkingSphere(FlowHistory):
    """Round sphere of radius squared ``s(tau) = 2(n-1)(tau + c)``."""

    kind = "round"
    period = 2 * math.pi

    def __init__(self, n, c=1.0, tau_min=0.0, tau_max=math.inf):
        super().__init__(n, tau_min, tau_max)
        if c < 0 or (c == 0 and tau_min <= 0):
            raise ParameterError("need c > 0, or c = 0 with tau_min > 0")
        self.c = float(c)

    def scale(self, tau):
        return 2.0 * (self.n - 1) * (np.asarray(tau, dtype=float) + self.c)

    def geom(self, tau, x, side=None):
        x = np.asarray(x, dtype=float)
        tau = self.check_tau(tau)
        s = np.broadcast_to(self.scale(tau), np.broadcast(tau, x).shape)
        q = np.sqrt(s)
        ric = (self.n - 1) / s
        z = np.zeros(s.shape)
        return RadialGeom(q, z, q * np.sin(x), q * np.cos(x), self.n * ric, z, ric, ric)

    def dcomponents(self, tau, x=None, side=None):
        xs = self.sample_points if x is None else np.atleast_1d(np.asarray(x, float))
        ds = 2.0 * (self.n - 1)
        sin2 = np.sin(xs) ** 2
        return np.concatenate([np.full(xs.shape, ds), ds * sin2[sin2 > 0]])

    def describe(self):
        return super().describe() | {"model": "shrinking_sphere", "c": self.c}


def exact_flow(model: str, n: int, *, c: float = 1.0, tau_min=0.0, tau_max=math.inf):
    """Closed-form flow by name: ``gaussian_static`` or ``shrinking_sphere``."""
    if model == "gaussian_static":
        return GaussianStatic(n, tau_min, tau_max)
    if model == "shrinking_sphere":
        return ShrinkingSphere(n, c, tau_min, tau_max)
    raise ParameterError(f"unknown closed-form model {model!r}")


# ---------------------------------------------------------------------------
# profiles

def flat_profile(n, h=1.0 / 16, r_max=4.0) -> RotSymPlane:
    r = np.arange(0.0, r_max + h / 2, h)
    return RotSymPlane(n, r, r.copy())


def sphere_profile(n, h=1.0 / 64, r_max=1.5, radius=1.0) -> RotSymPlane:
    """Polar cap of a round sphere of the given radius, in arclength."""
    r = np.arange(0.0, r_max + h / 2, h)
    return RotSymPlane(n, r, radius * np.sin(r / radius))


def load_profile(path, n) -> RotSymPlane:
    """Read a profile CSV with header ``r,psi``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames[:2]] != ["r", "psi"]:
            raise ParameterError(f"{path}: expected header 'r,psi'")
        rows = [(float(row["r"]), float(row["psi"])) for row in reader]
    data = np.array(rows)
    return RotSymPlane(n, data[:, 0], data[:, 1])


def save_profile(path, geometry: RotSymPlane):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "psi"])
        for r, p in zip(geometry.r, geometry.psi):
            w.writerow([repr(float(r)), repr(float(p))])
