import math

import numpy as np
import pytest
import sympy as sp

from foliation_forge import link_model as lm
from foliation_forge import sl2z
from foliation_forge.exterior import coordinate_form
from foliation_forge.link_model import N_COORDS, U, V, X
from foliation_forge.report import Status

ELLIPTIC = [((3, 3, 3), 3), ((2, 4, 4), 2), ((2, 3, 6), 1)]
CUSPS = [(2, 3, 7), (4, 4, 4), (3, 4, 5)]


def _log_mu(triple):
    """Independent oracle: log of the expanding eigenvalue from numpy."""
    m = np.array(sl2z.monodromy_matrix(*triple).to_list(), dtype=float)
    return math.log(max(abs(np.linalg.eigvals(m))))


@pytest.fixture(scope="module")
def grid16():
    return lm.default_n_grid(16)


@pytest.mark.parametrize("triple,ell", ELLIPTIC)
def test_nil_models(triple, ell):
    m = lm.build_link_model(*triple)
    assert m.kind == "nil" and m.ell == ell
    assert m.monodromy == sl2z.Sl2Matrix(1, 0, ell, 1)
    assert m.original_monodromy.conjugate_by(m.chart_conjugator) == m.monodromy
    assert m.contact_ratio == pytest.approx(ell / (2 * math.pi), abs=1e-15)


@pytest.mark.parametrize("triple", CUSPS)
def test_solv_models(triple):
    m = lm.build_link_model(*triple)
    assert m.kind == "solv"
    assert m.contact_ratio == pytest.approx(_log_mu(triple) / math.pi, rel=1e-12)
    assert np.linalg.det(m.eigen_matrix) == pytest.approx(1.0, abs=1e-12)


def test_unsupported_triple():
    with pytest.raises(lm.UnsupportedSingularityError):
        lm.build_link_model(2, 3, 5)


@pytest.mark.parametrize("triple", [t for t, _ in ELLIPTIC] + CUSPS)
def test_model_checks_pass(triple, grid16):
    m = lm.build_link_model(*triple)
    contact = lm.check_contact(m, grid16)
    reeb = lm.check_reeb_tangent_to_fibers(m, grid16, tol=1e-10)
    div = lm.check_dx_divisibility(m, grid16, tol=1e-12)
    deck = lm.check_deck_invariance(m, tol=1e-10)
    fiber = lm.check_fiber_form(m, grid16)
    for res in (contact, reeb, div, deck, fiber):
        assert res.status is Status.PASS, (res.name, res.details)
        assert res.paper_ref
    assert contact.worst_margin > 0
    assert reeb.worst_residual <= 1e-10
    assert div.worst_residual <= 1e-12
    assert deck.worst_residual <= 1e-10


@pytest.mark.parametrize("triple", [(3, 3, 3), (2, 3, 7)])
def test_reeb_field_matches_closed_form(triple, grid16):
    m = lm.build_link_model(*triple)
    pts = lm.sample_points(200, seed=4)
    np.testing.assert_allclose(lm.reeb_field(m, pts), m.closed_form_reeb(pts), atol=1e-10)


@pytest.mark.parametrize("triple,ell", ELLIPTIC)
def test_nil_constants_closed_form(triple, ell, grid16):
    gc = lm.geometry_constants(lm.build_link_model(*triple), grid16)
    assert gc.a_min == pytest.approx(ell / (2 * math.pi), abs=1e-8)
    assert gc.a_max == pytest.approx(ell / (2 * math.pi), abs=1e-8)
    assert gc.c_max == pytest.approx(0.0, abs=1e-12)
    assert gc.m_min == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("triple", CUSPS)
def test_solv_constants_closed_form(triple, grid16):
    gc = lm.geometry_constants(lm.build_link_model(*triple), grid16)
    assert gc.a_min == pytest.approx(_log_mu(triple) / math.pi, abs=1e-8)
    assert gc.a_max == pytest.approx(gc.a_min, abs=1e-8)
    assert gc.c_max == pytest.approx(0.0, abs=1e-12)
    assert gc.m_min == pytest.approx(1.0, abs=1e-8)


def test_deck_maps_generate_monodromy():
    m = lm.build_link_model(2, 3, 7)
    tx = m.deck_maps()["T_x"]
    b = m.fiber_matrix
    assert tx[U] == b.a * U + b.b * V and tx[V] == b.c * U + b.d * V
    assert tx[X] == X + 2 * sp.pi


def test_non_contact_form_fails(grid16):
    m = lm.build_link_model(3, 3, 3).with_alpha(coordinate_form(N_COORDS, V))
    res = lm.check_contact(m, grid16)
    assert res.status is Status.FAIL
    assert set(res.witness) == {"x", "u", "v"}


def test_reeb_with_base_component_fails(grid16):
    k = 3 / (2 * math.pi)
    alpha = coordinate_form(N_COORDS, V, coeff=1 + sp.Rational(1, 5) * U) + coordinate_form(N_COORDS, U, coeff=k * X)
    m = lm.build_link_model(3, 3, 3).with_alpha(alpha)
    res = lm.check_reeb_tangent_to_fibers(m, grid16)
    assert res.status is Status.FAIL and res.worst_residual > 1e-3


def test_twisted_form_breaks_deck_invariance():
    m = lm.build_link_model(2, 3, 7)
    bad = m.with_alpha(m.alpha + coordinate_form(N_COORDS, U, coeff=sp.sin(X / 3)))
    assert lm.check_deck_invariance(bad).status is Status.FAIL


def test_geometry_constants_validation():
    with pytest.raises(ValueError):
        lm.GeometryConstants(a_min=1.0, a_max=0.5, c_max=0.0, m_min=1.0, grid={})
    with pytest.raises(ValueError):
        lm.GeometryConstants(a_min=0.5, a_max=1.0, c_max=0.0, m_min=-1.0, grid={})


def test_sample_points_deterministic():
    np.testing.assert_array_equal(lm.sample_points(10, 3), lm.sample_points(10, 3))
