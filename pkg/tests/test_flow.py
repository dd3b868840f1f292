import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riccilab.errors import DomainError, ParameterError, StencilError, StiffnessError
from riccilab.flow import (GridFlow, evolve_backward, flow_residual, one_sided_time_derivatives,
                           one_sided_weights, read_history, write_history)
from riccilab.models import (GaussianStatic, HomogeneousFlat, HomogeneousRound, MetricSnapshot,
                             ShrinkingSphere, flat_profile, sphere_profile)


def test_round_ode_matches_linear_scale_law():
    g = evolve_backward(MetricSnapshot(0.0, HomogeneousRound(3), 4.0), 1.0, rtol=1e-10)
    assert g.snapshot(1.0).scale == pytest.approx(8.0, rel=1e-12)
    assert g.snapshot(0.37).scale == pytest.approx(4 * 1.37, rel=1e-10)
    assert flow_residual(g, 0.5).value < 1e-9


def test_flat_history_is_static():
    g = evolve_backward(MetricSnapshot(0.0, HomogeneousFlat(3), 1.0), 2.0)
    assert g.snapshot(1.3).scale == 1.0
    prof = evolve_backward(MetricSnapshot(0.0, flat_profile(3, h=1 / 8, r_max=2)), 0.5)
    geo = prof.snapshot(0.5).geometry
    assert np.max(np.abs(geo.psi - geo.r)) < 1e-12
    assert np.max(np.abs(geo.a - 1)) < 1e-12


def test_hemisphere_profile_follows_the_exact_law():
    # the equator has psi_x = 0, which is exactly the frozen boundary slope
    h = math.pi / 32
    geo = sphere_profile(3, h=h, r_max=math.pi / 2)
    g = evolve_backward(MetricSnapshot(0.0, geo), 0.01, rtol=1e-9, atol=1e-12)
    T = 0.01
    snap = g.snapshot(T).geometry
    exact = math.sqrt(1 + 4 * T)
    assert np.max(np.abs(snap.a - exact)) < 1e-3
    assert np.max(np.abs(snap.psi - exact * np.sin(snap.r))) < 1e-3


def test_growth_guard_stops_long_profile_runs():
    geo = sphere_profile(3, h=math.pi / 64, r_max=math.pi / 2)
    with pytest.raises(StiffnessError):
        evolve_backward(MetricSnapshot(0.0, geo), 1.0)


def test_evolve_rejects_backwards_interval():
    with pytest.raises(ParameterError):
        evolve_backward(MetricSnapshot(1.0, HomogeneousRound(3), 4.0), 0.5)


def test_closed_form_residuals_are_roundoff():
    assert flow_residual(ShrinkingSphere(3, 1.0), 0.3).value < 1e-14
    assert flow_residual(GaussianStatic(3), 0.3).value == 0.0


def test_residual_detects_a_wrong_flow():
    # s(tau) = 4 + 5 tau is not a Ricci flow in dimension 3
    t = np.linspace(0, 1, 11)
    s = (4 + 5 * t)[:, None]
    g = GridFlow(3, "round", t, s, np.full_like(s, 5.0))
    assert flow_residual(g, 0.5).value > 0.1


def test_residual_uses_one_sided_stencil_at_the_ends():
    t = np.linspace(0, 1, 11)
    s = (4 + 4 * t)[:, None]
    g = GridFlow(3, "round", t, s, np.full_like(s, 4.0))
    end = flow_residual(g, 1.0)
    assert end.one_sided and end.value < 1e-9


@given(k=st.integers(1, 3), side=st.sampled_from(["left", "right"]),
       coeffs=st.lists(st.floats(-3, 3), min_size=5, max_size=5))
@settings(max_examples=60, deadline=None)
def test_one_sided_weights_are_exact_on_low_degree_polynomials(k, side, coeffs):
    off, w = one_sided_weights(k, side)
    deg = k + 1
    p = np.polynomial.Polynomial(coeffs[:deg + 1])
    exact = p.deriv(k)(0.0)
    assert w @ p(off) == pytest.approx(exact, abs=1e-9 * (1 + np.sum(np.abs(coeffs))))


def test_one_sided_derivatives_need_room():
    g = ShrinkingSphere(3, 1.0, tau_max=1.0)
    with pytest.raises(StencilError):
        one_sided_time_derivatives(g, 1.0, 1, h=0.1)
    left, right = one_sided_time_derivatives(g, 0.5, 1)
    assert np.allclose(left, right)


def test_history_roundtrip(tmp_path):
    g = evolve_backward(MetricSnapshot(0.0, HomogeneousRound(3), 4.0), 1.0)
    path = tmp_path / "h.csv"
    write_history(path, g, tolerances={"rtol": 1e-8})
    assert path.read_text().splitlines()[0] == "tau,s"
    back = read_history(path)
    assert back.snapshot(1.0).scale == pytest.approx(8.0)
    assert path.with_suffix(".json").exists()


def test_profile_history_roundtrip(tmp_path):
    geo = sphere_profile(3, h=math.pi / 16, r_max=math.pi / 2)
    g = evolve_backward(MetricSnapshot(0.0, geo), 0.005)
    path = tmp_path / "p.csv"
    write_history(path, g)
    assert path.read_text().splitlines()[0] == "tau,r,psi,a"
    back = read_history(path)
    a = back.snapshot(0.005).geometry.a
    assert np.allclose(a, g.snapshot(0.005).geometry.a)


def test_history_queries_outside_range_fail():
    g = evolve_backward(MetricSnapshot(0.0, HomogeneousRound(3), 4.0), 1.0)
    with pytest.raises(DomainError):
        g.snapshot(1.5)
