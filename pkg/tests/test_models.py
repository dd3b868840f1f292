import math

import numpy as np
import pytest

from riccilab.errors import DegenerateMetricError, DomainError, ParameterError
from riccilab.models import (GaussianStatic, MetricSnapshot, RotSymPlane, ShrinkingSphere,
                             curvature_at, exact_flow, flat_profile, load_profile,
                             radial_curvature, save_profile, sphere_profile, sphere_volume)


def test_sphere_volume_small_cases():
    assert sphere_volume(1) == pytest.approx(2 * math.pi)
    assert sphere_volume(2) == pytest.approx(4 * math.pi)
    assert sphere_volume(3) == pytest.approx(2 * math.pi**2)


def test_flat_profile_has_zero_curvature():
    geo = flat_profile(3, h=1 / 16, r_max=4)
    k = radial_curvature(3, geo.r, geo.psi)
    assert np.max(np.abs(k["R"])) == 0.0


def test_sphere_profile_curvature_converges_second_order():
    errs = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        geo = sphere_profile(3, h=h, r_max=1.5)
        k = radial_curvature(3, geo.r, geo.psi)
        errs.append(np.max(np.abs(k["R"] - 6.0)))
    assert errs[-1] < 1e-3
    assert errs[0] / errs[1] > 3 and errs[1] / errs[2] > 3


def test_unit_sphere_ricci_components():
    geo = sphere_profile(4, h=1 / 128, r_max=1.2)
    k = radial_curvature(4, geo.r, geo.psi)
    i = np.searchsorted(geo.r, math.pi / 4)
    assert k["ric_rad"][i] == pytest.approx(3.0, abs=1e-3)
    assert k["ric_tan"][i] == pytest.approx(3.0, abs=1e-3)
    assert k["R"][i] == pytest.approx(12.0, abs=1e-3)


def test_curvature_at_interpolates_between_nodes():
    snap = MetricSnapshot(0.0, sphere_profile(3, h=1 / 64, r_max=1.5))
    s = curvature_at(snap, 0.7)
    assert s.R == pytest.approx(6.0, abs=1e-3)
    assert s.dR_dr == pytest.approx(0.0, abs=1e-2)


def test_rotsym_validation():
    r = np.linspace(0, 1, 11)
    with pytest.raises(ParameterError):
        RotSymPlane(3, r[1:], r[1:])
    with pytest.raises(DegenerateMetricError):
        RotSymPlane(3, r, np.where(r > 0.5, -r, r))
    with pytest.raises(ParameterError):
        RotSymPlane(3, r**2, r)
    with pytest.raises(ParameterError):
        RotSymPlane(1, r, r)


def test_closed_form_sphere_scale_law():
    g = ShrinkingSphere(3, 1.0)
    for tau in (0.0, 0.5, 7.0):
        snap = g.snapshot(tau)
        assert snap.scale == pytest.approx(4 * (tau + 1))
        G = g.geom(np.array([tau]), np.array([1.0]))
        assert G.R[0] == pytest.approx(6 / (4 * (tau + 1)))


def test_gaussian_static_is_flat_and_static():
    g = GaussianStatic(3)
    G = g.geom(np.array([0.3, 5.0]), np.array([0.0, 2.0]))
    assert np.all(G.R == 0) and np.all(G.a == 1)
    assert np.allclose(G.psi, [0.0, 2.0])


def test_exact_flow_lookup_and_domain():
    assert isinstance(exact_flow("gaussian_static", 3), GaussianStatic)
    g = exact_flow("shrinking_sphere", 3, c=2.0, tau_max=5.0)
    with pytest.raises(DomainError):
        g.geom(np.array([6.0]), np.array([0.1]))
    with pytest.raises(ParameterError):
        exact_flow("torus", 3)


def test_profile_roundtrip(tmp_path):
    geo = sphere_profile(3, h=1 / 32, r_max=1.0)
    path = tmp_path / "p.csv"
    save_profile(path, geo)
    assert path.read_text().splitlines()[0] == "r,psi"
    back = load_profile(path, 3)
    assert np.array_equal(back.r, geo.r) and np.array_equal(back.psi, geo.psi)
