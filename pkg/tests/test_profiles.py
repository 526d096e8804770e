import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from foliation_forge import profiles as pr
from foliation_forge.profiles import ProfileConstraintError

t = sp.Symbol("t", real=True)


@pytest.fixture(scope="module")
def K():
    return pr.k_profile()


def test_smooth_step_is_c3():
    poly = pr.smooth_step(t).args[1][0]
    for k in range(4):
        dk = sp.diff(poly, t, k)
        assert dk.subs(t, 0) == 0
        assert dk.subs(t, 1) == (1 if k == 0 else 0)


def test_ramp_integral_differentiates_to_step():
    body = pr.ramp_integral(t).args[1][0]
    step = pr.smooth_step(t).args[1][0]
    assert sp.expand(sp.diff(body, t) - step) == 0
    assert body.subs(t, 1) == sp.Rational(1, 2)


def test_k_examples(K):
    assert float(K.value(2.0)) == pytest.approx(2.0, abs=1e-15)
    assert float(K.value(8.0)) == pytest.approx(0.0, abs=1e-12)
    assert float(K.value(9.5)) == 0.0
    assert all(row["ok"] for row in K.audit())


def test_k_times_k_prime_stays_below_safety_level(K):
    rho = np.linspace(4, 8, 20001)
    assert np.max(np.abs(K.value(rho) * K.derivative(rho))) < 2.2


def test_infeasible_k_is_rejected():
    with pytest.raises(ProfileConstraintError):
        pr.k_profile(ramps=((3, sp.Rational(3, 10), -1), (4, 1, -1), (6, 1, 1)))


def test_l_examples():
    L = pr.l_profile(2.5)
    assert float(L.value(1.5)) == 0.0
    assert float(L.value(3.0)) == pytest.approx(2.5)
    assert float(L.derivative(2.5)) > 0
    with pytest.raises(ProfileConstraintError):
        pr.l_profile(0.0)


def test_phi_examples():
    phi = pr.phi_profile()
    assert float(phi.value(0.0)) == pytest.approx(math.pi / 2, abs=1e-14)
    assert float(phi.value(-0.5)) == pytest.approx(math.pi / 4, abs=1e-14)
    assert float(phi.value(0.5)) == pytest.approx(3 * math.pi / 4, abs=1e-14)
    assert float(phi.value(1.5)) == pytest.approx(math.pi, abs=1e-14)


def test_phi_wrong_plateau_is_rejected():
    with pytest.raises(ProfileConstraintError):
        pr.phi_profile(0.3 * math.pi)
    loose = pr.phi_profile(0.3 * math.pi, audit=False)
    assert not all(row["ok"] for row in loose.audit())


def test_psi_flat_and_monotone():
    psi = pr.psi_profile()
    assert float(psi.value(0.3)) == 1.0
    assert float(psi.value(1.0)) == pytest.approx(0.0, abs=1e-15)
    for k in (1, 2, 3):
        assert float(sp.diff(psi.expr, pr.R_S, k).subs(pr.R_S, 1)) == pytest.approx(0.0, abs=1e-12)


def test_circular_k_support():
    K = pr.circular_k_profile()
    theta = np.linspace(0, 2 * math.pi, 4001)
    vals = K.value(theta)
    outside = (theta <= math.pi / 2) | (theta >= 1.5 * math.pi)
    assert np.all(vals[outside] == 0.0)
    assert float(K.value(math.pi)) == pytest.approx(1.0)


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_p_singular_part(ell):
    p = pr.p_profile(ell)
    tau = np.array([0.1, 0.25, 0.4])
    np.testing.assert_allclose(p.value(tau), tau ** (-ell), rtol=1e-14)
    assert float(p.value(1.8)) == 1.0
    assert float(p.value(-1.8)) == (-1) ** ell


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.floats(0.01, 1.99))
def test_p_parity(ell, tau):
    p = pr.p_profile(ell)
    assert float(p.value(-tau)) == pytest.approx((-1) ** ell * float(p.value(tau)), rel=1e-12)


@pytest.mark.parametrize("ell", [1, 2, 3])
def test_p_blend_is_c1(ell):
    p = pr.p_profile(ell)
    for knot in (0.5, 1.5):
        lo, hi = knot - 1e-7, knot + 1e-7
        assert float(p.value(lo)) == pytest.approx(float(p.value(hi)), abs=1e-5)
        assert float(p.derivative(lo)) == pytest.approx(float(p.derivative(hi)), abs=1e-4)


def test_constraint_reports_location():
    prof = pr.constant_profile("c", 1.0)
    con = pr.Constraint("c <= 0.5", 1, 2, "value", "le", 0.5)
    ok, slack, where = con.check(prof, 100)
    assert not ok and slack == pytest.approx(-0.5) and 1 <= where <= 2


def test_build_profile_dispatch():
    assert pr.build_profile("L", a=1.0).name == "L"
    assert pr.build_profile("P_ell", ell=2).params == {"ell": 2}
    with pytest.raises(ProfileConstraintError):
        pr.build_profile("nope")
