import json

import jsonschema
import numpy as np
import pytest
import sympy as sp

from foliation_forge import exterior
from foliation_forge import verify_suite as vs
from foliation_forge.report import CheckResult, Status
from foliation_forge.schema import REPORT_SCHEMA
from foliation_forge.verify_suite import ConfigError, SuiteConfig

FAST = (
    "classification",
    "monodromy-matrix",
    "trace-identity",
    "conjugacy-normal-form",
    "conjugate-to-inverse",
    "topological-invariants",
    "deck-invariance",
    "contact",
    "reeb-tangency",
    "dx-divisibility",
    "fiber-form",
    "geometry-constants",
    "constant-bounds",
    "b-parity-gate",
    "double-gluing",
)


def _strip(report):
    d = report.to_dict()
    d.pop("environment")
    return d


@pytest.fixture(scope="module")
def fast_report():
    return vs.run_suite(SuiteConfig.with_grid(2, 3, 7, 8, checks=FAST))


def test_config_validation():
    with pytest.raises(ConfigError):
        SuiteConfig(1, 3, 7)
    with pytest.raises(ConfigError):
        SuiteConfig(2, 3, 7, n_grid=3)
    with pytest.raises(ConfigError):
        SuiteConfig(2, 3, 7, margin=0.0)
    with pytest.raises(ConfigError):
        SuiteConfig(2, 3, 7, fd_levels=2)
    with pytest.raises(ConfigError):
        SuiteConfig(2, 3, 7, checks=("contact", "bogus"))


def test_config_digest():
    a = SuiteConfig(2, 3, 7)
    assert a.digest() == SuiteConfig(2, 3, 7).digest()
    assert a.digest() != SuiteConfig(2, 3, 7, margin=1e-5).digest()
    assert len(a.digest()) == 64


def test_every_check_has_a_reference():
    assert set(vs.PAPER_REFS) == set(vs.CHECK_NAMES)
    assert all(vs.PAPER_REFS.values())


def test_fast_subset_passes(fast_report):
    assert fast_report.passed
    assert [c.name for c in fast_report.checks] == list(FAST)
    assert all(c.paper_ref for c in fast_report.checks)
    assert fast_report.check("constant-bounds").status is Status.VACUOUS


def test_report_matches_schema(fast_report):
    payload = json.loads(fast_report.to_json())
    jsonschema.validate(payload, REPORT_SCHEMA)
    assert payload["configHash"] == fast_report.config.digest()
    assert payload["triple"] == [2, 3, 7]


def test_rerun_is_identical(fast_report):
    again = vs.run_suite(SuiteConfig.with_grid(2, 3, 7, 8, checks=FAST), workers=1)
    assert _strip(again) == _strip(fast_report)


def test_double_gluing_skipped_for_nil():
    rep = vs.run_suite(SuiteConfig(3, 3, 3, checks=("double-gluing", "conjugate-to-inverse")))
    assert rep.check("double-gluing").status is Status.SKIPPED
    assert rep.check("double-gluing").details["gate"] is False
    assert rep.passed


def test_unsupported_triple_gives_single_failure():
    rep = vs.run_suite(SuiteConfig(2, 3, 5))
    assert not rep.passed
    assert [c.name for c in rep.checks] == ["classification"]


def test_crashing_check_is_isolated(monkeypatch):
    def boom(cfg):
        raise RuntimeError("synthetic failure")

    monkeypatch.setitem(vs.CHECKS, "contact", boom)
    rep = vs.run_suite(SuiteConfig(3, 3, 3, checks=("contact", "dx-divisibility")), workers=2)
    crashed = rep.check("contact")
    assert crashed.status is Status.FAIL
    assert "synthetic failure" in crashed.details["error"]
    assert crashed.paper_ref == vs.PAPER_REFS["contact"]
    assert rep.check("dx-divisibility").status is Status.PASS
    assert not rep.passed


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv(vs.THREADS_ENV, "3")
    assert vs.worker_count() == 3
    monkeypatch.setenv(vs.THREADS_ENV, "many")
    with pytest.raises(ConfigError):
        vs.worker_count()
    monkeypatch.setenv(vs.THREADS_ENV, "-1")
    with pytest.raises(ConfigError):
        vs.worker_count()


def test_check_result_serialisation():
    res = CheckResult("x", "ref", Status.PASS, worst_margin=float("inf"), details={"t": (1, 2)})
    d = res.to_dict()
    assert d["worstMargin"] == "inf" and d["details"]["t"] == [1, 2]
    assert "PASS" in res.summary_line()


@pytest.fixture(scope="module")
def convergence_rows():
    return vs.convergence_study(SuiteConfig(2, 3, 7), levels=3)


def test_convergence_study(convergence_rows):
    by_form = {r["form"]: r for r in convergence_rows}
    assert by_form["omega_E"]["status"] == "pass"
    assert by_form["omega_circular"]["status"] == "pass"
    assert by_form["omega_sigma"]["status"] == "vacuous"
    for name in ("omega_E", "omega_circular"):
        assert 1.9 <= by_form[name]["order"] <= 2.3
        assert by_form[name]["monotone"]
        assert len(by_form[name]["levels"]) == 3


def test_convergence_study_catches_first_order_stencil(monkeypatch):
    """Mutation: a forward difference must push the fitted order out of the window."""

    def forward(f, axis, ax):
        if ax.periodic:
            return (np.roll(f, -1, axis=axis) - f) / ax.h
        if ax.extendable:
            n = f.shape[axis]
            return (np.take(f, np.arange(2, n), axis=axis) - np.take(f, np.arange(1, n - 1), axis=axis)) / ax.h
        return np.gradient(f, ax.h, axis=axis, edge_order=1)

    monkeypatch.setattr(exterior, "_grid_derivative", forward)
    rows = {r["form"]: r for r in vs.convergence_study(SuiteConfig(3, 3, 3), levels=3)}
    assert rows["omega_E"]["status"] == "fail"
    assert rows["omega_circular"]["status"] == "fail"


def test_convergence_study_catches_wrong_derivative(monkeypatch):
    """Mutation: an analytic derivative off by a constant 3-form never converges."""
    real = exterior.d_analytic

    def shifted(a):
        out = real(a)
        return out + exterior.coordinate_form(a.coords, *a.coords[: out.degree], coeff=sp.Rational(1, 1000))

    monkeypatch.setattr(exterior, "d_analytic", shifted)
    rows = {r["form"]: r for r in vs.convergence_study(SuiteConfig(3, 3, 3), levels=3)}
    assert rows["omega_E"]["status"] == "fail"
    assert rows["omega_circular"]["status"] == "fail"


def test_convergence_levels_validated():
    with pytest.raises(ConfigError):
        vs.convergence_study(SuiteConfig(2, 3, 7), levels=2)
