import copy
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import sphere_l
from riccilab.errors import EscapeError, ParameterError, UnreachedTargetError
from riccilab.lgeodesic import (LCurve, LSolver, identity_residuals, l_energy, reduced_distance,
                                reduced_field, shoot, solve_bvp)
from riccilab.models import GaussianStatic, ShrinkingSphere
from riccilab.splice import BreatherSpec, Diffeo, splice

FLAT = GaussianStatic(3)
SPHERE = ShrinkingSphere(3, 1.0, tau_max=10.0)


def test_flat_shot_is_a_straight_line():
    r = shoot(FLAT, 0.7, 2.0)
    # x = 2 v sqrt(tau), so l = v^2 and grad l = x / (2 tau)
    assert r.x == pytest.approx(2 * 0.7 * math.sqrt(2.0), rel=1e-12)
    assert r.l == pytest.approx(0.49, rel=1e-12)
    assert r.grad == pytest.approx(r.x / 4.0, rel=1e-12)


@given(q=st.floats(0.0, 3.0), tau=st.floats(0.05, 4.0))
@settings(max_examples=40, deadline=None)
def test_flat_reduced_distance_is_quadratic(q, tau):
    rd = reduced_distance(FLAT, [q], [tau])
    assert rd.reached[0] and rd.smooth[0]
    assert rd.l[0] == pytest.approx(q**2 / (4 * tau), rel=1e-9, abs=1e-13)
    assert rd.grad[0] == pytest.approx(q / (2 * tau), rel=1e-8, abs=1e-12)


def test_sphere_reduced_distance_matches_closed_form():
    q = np.array([0.0, 0.2, 0.5, 1.0, 1.4])
    tau = np.array([0.5, 1.0, 2.0, 3.0, 5.0])
    rd = reduced_distance(SPHERE, q, tau)
    assert np.all(rd.smooth)
    assert np.allclose(rd.l, sphere_l(3, 1.0, q, tau), rtol=1e-9, atol=1e-12)


def test_gradient_matches_finite_differences_on_the_sphere():
    f = reduced_field(SPHERE, [1.0, 2.0], [0.3, 1.0])
    assert np.max(np.abs(f.grad - f.grad_fd)) < 1e-8


def test_identities_hold_on_flat_space():
    w = identity_residuals(reduced_field(FLAT, [0.5, 1.0, 2.0], [0.1, 1.0, 2.0])).worst()
    assert w["res1"] < 1e-6
    assert abs(w["res2_min"]) < 1e-6 and abs(w["res3_max"]) < 1e-6


def test_identity_signs_on_the_sphere():
    # the sphere is not a soliton in these variables, so the inequalities are strict
    w = identity_residuals(reduced_field(SPHERE, [1.0, 2.0], [0.3, 1.0])).worst()
    assert w["res1"] < 1e-6
    assert w["res2_min"] > 0 and w["res3_max"] < 0


def test_scaled_field_breaks_the_first_identity():
    f = reduced_field(FLAT, [1.0], [0.5, 1.0]).scaled(1.1)
    assert identity_residuals(f).worst()["res1"] > 1e-2


def test_l_energy_of_straight_curve():
    tau = np.linspace(0, 2, 65)
    c = LCurve.from_tau(FLAT, tau, 0.5 * tau, np.full_like(tau, 0.5))
    # |dx/dtau|^2 = 1/4 and R = 0, so L = int sqrt(tau)/4 dtau
    assert l_energy(c) == pytest.approx(2 / 3 * 2**1.5 / 4, rel=1e-8)
    assert l_energy([c, c]) == pytest.approx(2 * l_energy(c))


def test_solve_bvp_and_unreached_target():
    r = solve_bvp(FLAT, 1.5, 1.0)
    assert r.l == pytest.approx(1.5**2 / 4, rel=1e-10)
    with pytest.raises(UnreachedTargetError):
        solve_bvp(FLAT, 5.0, 1.0, v_range=(1e-3, 1.0))


def test_guards():
    s = LSolver(FLAT)
    with pytest.raises(ParameterError):
        s.shoot(1.0, 0.0)
    with pytest.raises(ParameterError):
        s.shoot(1e9, 1.0)
    with pytest.raises(ParameterError):
        LSolver(FLAT, v_range=(1.0, 0.5))
    with pytest.raises(ParameterError):
        s.reduced_distance([1.0], [-1.0])


def test_escape_from_the_grid_is_reported():
    s = LSolver(FLAT, x_max=1.0)
    with pytest.raises(EscapeError):
        s.shoot(2.0, 1.0)


def test_piecewise_integration_agrees_with_the_smooth_path():
    sp = splice(BreatherSpec(ShrinkingSphere(3, 1.0), 0.5, Diffeo()), 8)

    class Rough(type(sp)):
        @property
        def time_smooth(self):
            return False

    rough = copy.copy(sp)
    rough.__class__ = Rough
    q = np.array([0.2, 0.5, 0.9])
    t = np.array([2.0, 5.0, 40.0])
    a = reduced_distance(sp, q, t)
    b = reduced_distance(rough, q, t)
    assert np.allclose(a.l, b.l, rtol=1e-10)
    assert np.allclose(a.l, sphere_l(3, 1.0, q, t), rtol=1e-10)
