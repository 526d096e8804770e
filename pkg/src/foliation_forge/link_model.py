"""Coordinate models of the link N as a torus bundle over the circle.

The chart is ``(x, u, v)`` with ``x`` the base circle coordinate and
``(u, v)`` lattice coordinates on the torus fibre. Deck transformations are

* ``T_u(x, u, v) = (x, u + 1, v)`` and ``T_v(x, u, v) = (x, u, v + 1)``,
* ``T_x(x, z) = (x + 2*pi, B z)`` with ``B = M^-1``,

where ``M`` is the monodromy: flowing along ``d/dx`` once around the circle
returns the fibre to itself by ``M``. With this convention the contact forms
below satisfy ``alpha ^ d alpha = c * dx ^ du ^ dv`` with ``c > 0``, the same
sign as ``dx ^ omega_sigma``; both orientations are recorded as ``+1``.

Nil model (monodromy ``[[1, 0], [l, 1]]``)::

    alpha = dv + (l x / 2 pi) du,          coframe {dx, du, alpha}

Solv model (hyperbolic monodromy, larger eigenvalue ``mu``): ``s``, ``t``
are eigen-coordinates, ``(s, t) = E (u, v)`` with ``det E = 1``, ``s``
contracted and ``t`` expanded by ``B``, ``lam = log(mu) / (2 pi)``::

    alpha = e^{lam x} ds + e^{-lam x} dt,  coframe {dx, e^{lam x} ds, e^{-lam x} dt}
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import sympy as sp

from . import sl2z
from .exterior import (
    Axis,
    FormField,
    Grid,
    coframe_matrix,
    coordinate_form,
    d_analytic,
    d_fd,
    pointwise_norm,
    pullback,
    wedge,
)
from .report import CheckResult, Status

X, U, V = sp.symbols("x u v", real=True)
N_COORDS = (X, U, V)
TWO_PI = 2 * sp.pi


class UnsupportedSingularityError(ValueError):
    pass


class DegenerateContactError(ValueError):
    pass


@dataclass(frozen=True)
class LinkModel:
    kind: str  # "nil" or "solv"
    triple: Optional[tuple[int, int, int]]
    monodromy: sl2z.Sl2Matrix  # matrix used in the chart
    original_monodromy: sl2z.Sl2Matrix
    chart_conjugator: sl2z.Sl2Matrix  # P with P A P^-1 = monodromy
    alpha: FormField
    omega_sigma: FormField
    coframe: tuple[FormField, FormField, FormField]
    dx: FormField
    ell: Optional[int] = None
    lambda_hat: Optional[float] = None
    eigen_matrix: Optional[np.ndarray] = None
    orientation_sign: int = 1
    notes: dict = field(default_factory=dict)

    @property
    def coords(self):
        return N_COORDS

    @property
    def fiber_matrix(self) -> sl2z.Sl2Matrix:
        """``B``: the fibre part of ``T_x``."""
        return self.monodromy.inverse()

    @property
    def contact_ratio(self) -> float:
        """Closed form of ``(alpha ^ d alpha) / (dx ^ omega_sigma)``."""
        if self.kind == "nil":
            return self.ell / (2 * math.pi)
        return 2 * self.lambda_hat

    def deck_maps(self) -> dict[str, dict]:
        b = self.fiber_matrix
        return {
            "T_u": {X: X, U: U + 1, V: V},
            "T_v": {X: X, U: U, V: V + 1},
            "T_x": {X: X + TWO_PI, U: b.a * U + b.b * V, V: b.c * U + b.d * V},
        }

    def closed_form_reeb(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(points)
        out = np.zeros_like(points, dtype=float)
        if self.kind == "nil":
            out[:, 2] = 1.0
            return out
        lam = self.lambda_hat
        x = points[:, 0]
        e_inv = np.linalg.inv(self.eigen_matrix)  # columns: d/ds, d/dt in (u, v)
        vs = 0.5 * np.exp(-lam * x)
        vt = 0.5 * np.exp(lam * x)
        out[:, 1:] = vs[:, None] * e_inv[:, 0] + vt[:, None] * e_inv[:, 1]
        return out

    def with_alpha(self, alpha: FormField) -> LinkModel:
        """Copy with a different 1-form (used for negative tests)."""
        return dataclasses.replace(self, alpha=alpha)


@dataclass(frozen=True)
class GeometryConstants:
    a_min: float
    a_max: float
    c_max: float
    m_min: float
    grid: dict

    def __post_init__(self):
        if not (0 <= self.a_min <= self.a_max) or self.m_min < 0 or self.c_max < 0:
            raise ValueError(f"invalid geometry constants {self}")


# ----------------------------------------------------------------------------
# construction


def _nil_forms(ell: int):
    alpha = coordinate_form(N_COORDS, V) + coordinate_form(N_COORDS, U, coeff=ell * X / TWO_PI)
    coframe = (coordinate_form(N_COORDS, X), coordinate_form(N_COORDS, U), alpha)
    return alpha, coframe


def _solv_eigen(m: sl2z.Sl2Matrix) -> tuple[float, np.ndarray]:
    t = m.trace
    mu = (t + math.sqrt(t * t - 4)) / 2
    a, c = m.a, m.c
    # rows are left eigenvectors of M: w M = mu w  and  w M = w / mu
    ws = np.array([c, mu - a], dtype=float)
    wt = np.array([c, 1 / mu - a], dtype=float)
    det = ws[0] * wt[1] - ws[1] * wt[0]
    if det < 0:
        wt = -wt
        det = -det
    e = np.stack([ws, wt]) / math.sqrt(det)
    return mu, e


def _solv_forms(lam: float, e: np.ndarray):
    lam_s = sp.Float(lam, 30)
    ds = coordinate_form(N_COORDS, U, coeff=sp.Float(e[0, 0], 30)) + coordinate_form(
        N_COORDS, V, coeff=sp.Float(e[0, 1], 30)
    )
    dt = coordinate_form(N_COORDS, U, coeff=sp.Float(e[1, 0], 30)) + coordinate_form(
        N_COORDS, V, coeff=sp.Float(e[1, 1], 30)
    )
    e1 = ds * sp.exp(lam_s * X)
    e2 = dt * sp.exp(-lam_s * X)
    alpha = e1 + e2
    coframe = (coordinate_form(N_COORDS, X), e1, e2)
    return alpha, coframe


def nil_model(ell: int, triple=None, original=None, conjugator=None) -> LinkModel:
    if ell < 1:
        raise ValueError("ell must be positive")
    mono = sl2z.Sl2Matrix(1, 0, ell, 1)
    alpha, coframe = _nil_forms(ell)
    return LinkModel(
        kind="nil",
        triple=triple,
        monodromy=mono,
        original_monodromy=original or mono,
        chart_conjugator=conjugator or sl2z.IDENTITY,
        alpha=alpha,
        omega_sigma=coordinate_form(N_COORDS, U, V),
        coframe=coframe,
        dx=coordinate_form(N_COORDS, X),
        ell=ell,
        notes={"orientation": "dx^du^dv positive; alpha^dalpha and dx^omega_sigma both positive"},
    )


def solv_model(m: sl2z.Sl2Matrix, triple=None) -> LinkModel:
    if m.trace < 3:
        raise ValueError("solv model needs trace >= 3")
    mu, e = _solv_eigen(m)
    lam = math.log(mu) / (2 * math.pi)
    alpha, coframe = _solv_forms(lam, e)
    return LinkModel(
        kind="solv",
        triple=triple,
        monodromy=m,
        original_monodromy=m,
        chart_conjugator=sl2z.IDENTITY,
        alpha=alpha,
        omega_sigma=coordinate_form(N_COORDS, U, V),
        coframe=coframe,
        dx=coordinate_form(N_COORDS, X),
        lambda_hat=lam,
        eigen_matrix=e,
        notes={
            "orientation": "dx^du^dv positive; ds^dt = du^dv",
            "eigenvalue": mu,
        },
    )


def build_link_model(p: int, q: int, r: int) -> LinkModel:
    cls = sl2z.classify_singularity(p, q, r)
    a = sl2z.monodromy_matrix(p, q, r)
    if cls.kind is sl2z.SingularityKind.SIMPLE_ELLIPTIC:
        ell = -sl2z.parabolic_invariant(a)
        target = sl2z.Sl2Matrix(1, 0, ell, 1)
        conj = sl2z.find_conjugator(a, target)
        return nil_model(ell, triple=(p, q, r), original=a, conjugator=conj)
    if cls.kind is sl2z.SingularityKind.CUSP:
        return solv_model(a, triple=(p, q, r))
    raise UnsupportedSingularityError(
        f"T_{p},{q},{r} is neither simple elliptic nor a cusp (1/p+1/q+1/r = {cls.reciprocal_sum})"
    )


# ----------------------------------------------------------------------------
# grids and helpers


def default_n_grid(n: int = 16) -> Grid:
    return Grid(
        (
            Axis("x", 0.0, 2 * math.pi, n, extendable=True),
            Axis("u", 0.0, 1.0, n, periodic=True),
            Axis("v", 0.0, 1.0, n, periodic=True),
        )
    )


def _top_coefficient(form: FormField, points: np.ndarray) -> np.ndarray:
    return form.evaluate(points)[:, 0]


def coframe_volume(model: LinkModel, points: np.ndarray) -> np.ndarray:
    """``det F``: the coframe volume in units of ``dx ^ du ^ dv``."""
    return np.linalg.det(coframe_matrix(model.coframe, points)) * model.orientation_sign


def _witness(grid: Grid, points: np.ndarray, k: int) -> dict:
    return {name: float(points[k, i]) for i, name in enumerate(grid.names)}


def sample_points(n: int = 1000, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    lo = np.array([0.0, 0.0, 0.0])
    hi = np.array([2 * math.pi, 1.0, 1.0])
    return lo + (hi - lo) * rng.random((n, 3))


# ----------------------------------------------------------------------------
# checks


def check_contact(model: LinkModel, grid: Grid, margin: float = 1e-6) -> CheckResult:
    pts = grid.points()
    a_da = wedge(model.alpha, d_analytic(model.alpha))
    ratio = _top_coefficient(a_da, pts) / coframe_volume(model, pts)
    k = int(np.argmin(ratio))
    same_sign = bool(np.all(ratio > 0) or np.all(ratio < 0))
    ok = same_sign and ratio[k] >= margin
    return CheckResult(
        name="contact",
        paper_ref="Thm 4.1 Step 1",
        status=Status.PASS if ok else Status.FAIL,
        worst_margin=float(ratio[k]),
        witness=_witness(grid, pts, k),
        grid=grid.describe(),
        details={"ratio_min": float(ratio.min()), "ratio_max": float(ratio.max())},
    )


def reeb_field(model: LinkModel, points: np.ndarray, cond_limit: float = 1e12) -> np.ndarray:
    """Solve ``alpha(R) = 1, d alpha(R, .) = 0`` pointwise.

    Uses the 3x3 normal equations ``(W^T W + a a^T) R = a`` where ``W`` is the
    matrix of ``d alpha``; the system is regular iff ``alpha`` is contact.
    """
    points = np.atleast_2d(points)
    a = model.alpha.evaluate(points)
    c = d_analytic(model.alpha).evaluate(points)  # (01, 02, 12)
    n = points.shape[0]
    w = np.zeros((n, 3, 3))
    w[:, 0, 1], w[:, 0, 2], w[:, 1, 2] = c[:, 0], c[:, 1], c[:, 2]
    w = w - np.swapaxes(w, 1, 2)
    sys_m = np.einsum("nki,nkj->nij", w, w) + np.einsum("ni,nj->nij", a, a)
    if np.any(np.linalg.cond(sys_m) > cond_limit):
        raise DegenerateContactError("Reeb system is singular: the 1-form is not contact")
    r = np.linalg.solve(sys_m, a[:, :, None])[:, :, 0]
    resid = np.max(np.abs(np.einsum("ni,ni->n", a, r) - 1)) + np.max(np.abs(np.einsum("nij,nj->ni", w, r)))
    if resid > 1e-8:
        raise DegenerateContactError(f"Reeb system inconsistent (residual {resid:.3g})")
    return r


def check_reeb_tangent_to_fibers(model: LinkModel, grid: Grid, tol: float = 1e-10) -> CheckResult:
    pts = grid.points()
    ref = "Thm 4.1(2)"
    try:
        r = reeb_field(model, pts)
    except DegenerateContactError as exc:
        return CheckResult("reeb-tangency", ref, Status.FAIL, grid=grid.describe(), details={"error": str(exc)})
    dxr = np.abs(r[:, 0])
    k = int(np.argmax(dxr))
    closed = np.max(np.abs(r - model.closed_form_reeb(pts)))
    return CheckResult(
        name="reeb-tangency",
        paper_ref=ref,
        status=Status.PASS if dxr[k] <= tol else Status.FAIL,
        worst_residual=float(dxr[k]),
        witness=_witness(grid, pts, k),
        grid=grid.describe(),
        details={"closed_form_deviation": float(closed)},
    )


def check_dx_divisibility(model: LinkModel, grid: Grid, tol: float = 1e-12) -> CheckResult:
    pts = grid.points()
    form = wedge(model.dx, d_analytic(model.alpha))
    vals = np.abs(_top_coefficient(form, pts)) if form.coeffs else np.zeros(len(pts))
    k = int(np.argmax(vals))
    return CheckResult(
        name="dx-divisibility",
        paper_ref="Thm 4.1 Step 3",
        status=Status.PASS if vals[k] <= tol else Status.FAIL,
        worst_residual=float(vals[k]),
        witness=_witness(grid, pts, k),
        grid=grid.describe(),
    )


def deck_residuals(model: LinkModel, points: np.ndarray) -> dict[str, float]:
    """Max |T^* form - form| over points, per (deck map, form) pair."""
    forms = {"alpha": model.alpha, "omega_sigma": model.omega_sigma}
    forms.update({f"coframe[{i}]": e for i, e in enumerate(model.coframe)})
    out = {}
    for dname, mapping in model.deck_maps().items():
        for fname, form in forms.items():
            pulled = pullback(form, N_COORDS, mapping)
            out[f"{dname}:{fname}"] = float(np.max(np.abs(pulled.evaluate(points) - form.evaluate(points))))
    return out


def check_deck_invariance(model: LinkModel, n_points: int = 1000, seed: int = 0, tol: float = 1e-10) -> CheckResult:
    pts = sample_points(n_points, seed)
    res = deck_residuals(model, pts)
    worst = max(res, key=res.get)
    return CheckResult(
        name="deck-invariance",
        paper_ref="Rem 3.4(ii)",
        status=Status.PASS if res[worst] <= tol else Status.FAIL,
        worst_residual=res[worst],
        grid={"random_points": n_points, "seed": seed},
        details={"worst": worst, "residuals": res},
    )


def check_fiber_form(model: LinkModel, grid: Grid, tol: float = 1e-6) -> CheckResult:
    """Closedness of omega_sigma (finite differences) and its fibre integral."""
    resid = float(np.max(np.abs(d_fd(model.omega_sigma, grid))))
    fib = Grid((Axis("x", 0.0, 1.0, 4), grid.axes[1], grid.axes[2]))
    pts = fib.points()
    pts = pts[pts[:, 0] == 0.0]
    coef = model.omega_sigma.evaluate(pts)[:, 2]  # du^dv component
    area = float(np.mean(coef)) * (grid.axes[1].hi - grid.axes[1].lo) * (grid.axes[2].hi - grid.axes[2].lo)
    positive = bool(np.all(coef > 0))
    ok = resid <= 1e-12 and abs(area - 1) <= tol and positive
    return CheckResult(
        name="fiber-form",
        paper_ref="Thm 4.1(1)",
        status=Status.PASS if ok else Status.FAIL,
        worst_residual=max(resid, abs(area - 1)),
        grid=grid.describe(),
        details={"d_fd_residual": resid, "fiber_area": area, "area_form_positive": positive},
    )


def geometry_constants(model: LinkModel, grid: Grid) -> GeometryConstants:
    pts = grid.points()
    a_da = pointwise_norm(wedge(model.alpha, d_analytic(model.alpha)), model.coframe, pts)
    a_om = pointwise_norm(wedge(model.alpha, model.omega_sigma), model.coframe, pts)
    dx_om = pointwise_norm(wedge(model.dx, model.omega_sigma), model.coframe, pts)
    return GeometryConstants(
        a_min=float(a_da.min()),
        a_max=float(a_da.max()),
        c_max=float(a_om.max()),
        m_min=float(dx_om.min()),
        grid=grid.describe(),
    )
