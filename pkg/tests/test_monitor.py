import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from conftest import sphere_l
from riccilab.errors import HorizonError, ParameterError
from riccilab.models import GaussianStatic, ShrinkingSphere
from riccilab.monitor import (ReducedVolumeSeries, blowdown, cutoff, gaussian_density_limit,
                              limit_density, local_bound_witness, monotonicity_certificate,
                              reduced_volume, reduced_volume_series, stage_residuals,
                              weighted_gradient_bound)

FLAT = GaussianStatic(3)
SPHERE = ShrinkingSphere(3, 1.0, tau_max=10.0)


def sphere_volume_oracle(tau):
    s = 4 * (tau + 1)
    f = lambda r: (4 * math.pi * (4 * math.pi * tau) ** -1.5
                   * math.exp(-sphere_l(3, 1.0, r, tau)) * s**1.5 * math.sin(r) ** 2)
    return quad(f, 0, math.pi, epsabs=1e-14)[0]


def test_cutoff_shape():
    t = np.linspace(0, 3, 30001)
    c = cutoff(t)
    assert np.all(c[t <= 1] == 1) and np.all(c[t >= 2] == 0)
    assert np.all(np.diff(c) <= 0)
    slope = np.max(np.abs(np.gradient(c, t)))
    assert slope <= 2.0 + 1e-6 and slope > 1.99


@given(t=st.floats(0, 5))
def test_cutoff_range(t):
    assert 0.0 <= float(cutoff(t)) <= 1.0


@pytest.mark.parametrize("tau", [0.5, 1.0, 2.0])
def test_flat_reduced_volume_is_one(tau):
    rv = reduced_volume(FLAT, tau)
    assert rv.V == pytest.approx(1.0, abs=1e-10)
    assert not rv.truncated and rv.tail < 1e-12


def test_sphere_volume_tends_to_one_at_small_tau():
    assert reduced_volume(SPHERE, 1e-3).V == pytest.approx(1.0, abs=1e-6)


def test_sphere_series_matches_quadrature_and_decreases():
    taus = [0.5, 1.0, 1.5, 2.0]
    ser = reduced_volume_series(SPHERE, taus)
    oracle = [sphere_volume_oracle(t) for t in taus]
    assert np.allclose(ser.V, oracle, rtol=1e-9)
    rep = monotonicity_certificate(ser)
    assert rep.passed and rep.le_one and rep.max_uphill == 0.0


def test_monotonicity_detects_an_uphill_step():
    ser = ReducedVolumeSeries(np.array([1.0, 2.0, 3.0]), np.array([0.99, 1.0, 0.98]),
                              np.zeros(3))
    rep = monotonicity_certificate(ser, tol=1e-6)
    assert not rep.passed and rep.max_uphill == pytest.approx(1e-2)
    assert monotonicity_certificate(
        ReducedVolumeSeries(np.array([1.0]), np.array([1.01]), np.zeros(1))).le_one is False


def test_flat_weighted_gradient_is_half_the_dimension():
    w = weighted_gradient_bound(FLAT, 1.0)
    # E|x|^2 / (4 tau^2) under the heat kernel is n / (2 tau)
    assert w.value == pytest.approx(1.5, rel=1e-9)
    assert w.passed and w.C0 == 6.0


def test_weighted_gradient_with_cutoff_is_smaller():
    full = weighted_gradient_bound(SPHERE, 1.0)
    cut = weighted_gradient_bound(SPHERE, 1.0, A=0.5)
    assert 0 < cut.value < full.value <= full.bound


def test_limit_density_closed_forms():
    assert limit_density("flat", 3) == pytest.approx(1.0, rel=1e-12)
    for n in (2, 3, 4):
        # |S^n| (2(n-1)/(4 pi))^(n/2) e^(-n/2)
        area = 2 * math.pi ** ((n + 1) / 2) / math.gamma((n + 1) / 2)
        oracle = area * (2 * (n - 1) / (4 * math.pi)) ** (n / 2) * math.exp(-n / 2)
        assert limit_density("round", n) == pytest.approx(oracle, rel=1e-10)
    with pytest.raises(ParameterError):
        limit_density("torus", 3)


def test_density_limit_verdicts():
    d = gaussian_density_limit([1, 2], [1.0, 1.0], [3.0, 7.0], kind="flat", n=3)
    assert d.verdict == "inconclusive"
    d = gaussian_density_limit([1, 2, 3], [1.0, 1.0, 1.0], [3.0, 7.0, 15.0], kind="flat", n=3)
    assert d.verdict == "converged" and d.static_euclidean and abs(d.fatou_gap) < 1e-12
    d = gaussian_density_limit([1, 2, 3], [0.9, 0.85, 0.83], [3.0, 7.0, 15.0],
                               kind="round", n=3)
    assert d.verdict == "converged" and not d.static_euclidean


def test_blowdown_horizon(sphere_splice):
    with pytest.raises(HorizonError):
        blowdown(sphere_splice, 0.0, [31])
    with pytest.raises(HorizonError):
        blowdown(sphere_splice, 0.0, [-1])


def test_blowdown_stage_geometry(gaussian_splice, sphere_splice):
    st_ = blowdown(gaussian_splice, 1.0, [3])[0]
    # x_3 = 2^4 - 1 from p0 = 1; the unit ball of g_3(1) has coordinate radius sqrt(tau_3)
    assert st_.tau_i == 85.0 and st_.base == 15.0
    assert st_.window == pytest.approx((15 - math.sqrt(85), 15 + math.sqrt(85)), rel=1e-12)
    assert st_.curv_bound == 0.0 and st_.inj_proxy == math.inf and st_.window_covered
    sp = blowdown(sphere_splice, 0.0, [4])[0]
    assert sp.base == 0.0 and math.isfinite(sp.inj_proxy)


def test_flat_stage_residuals_vanish(gaussian_splice):
    stage = blowdown(gaussian_splice, 1.0, [3])[0]
    res = stage_residuals(stage, taus=[1.2, 1.8], nx=5)
    assert np.all(res.smooth)
    for name in ("soliton", "v", "v_evolution", "lll2"):
        assert res.max_abs(name) < 1e-9
    assert res.max_abs("lll1") < 1e-7
    w = local_bound_witness(stage, res, l_bound=1.0)
    assert w.passed


def test_doubled_distance_is_not_a_soliton(gaussian_splice):
    stage = blowdown(gaussian_splice, 1.0, [3])[0]
    res = stage_residuals(stage, taus=[1.2, 1.8], nx=5, l_scale=2.0)
    # Hess(2l) - g/(2 tau) = g/(2 tau) on flat space
    assert res.max_abs("soliton") == pytest.approx(math.sqrt(3) / 2.4, rel=1e-6)
    assert res.max_abs("lll1") > 1.0
