"""Assembly and verification of the 2-forms and 1-forms built from a link model.

Charts (all share the N coordinates ``x, u, v`` of :mod:`link_model`):

* end chart ``(rho, x, u, v)``, ``rho >= 1``
* circular chart ``(theta, x, u, v)``, ``theta`` periodic
* turbulization chart ``(r, theta, x, u, v)`` on ``N x D^2``
* b-chart ``(tau, x, u, v)``, ``tau`` in ``(-2, 2)``
* foliated-cylinder chart ``(tau, theta, x, u, v)``
"""

from __future__ import annotations

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
    coordinate_form,
    d_analytic,
    fd_convergence,
    fd_residual,
    pfaffian,
    pullback,
    restrict_to_frame,
    wedge,
)
from .link_model import N_COORDS, U, V, X, GeometryConstants, LinkModel, coframe_volume
from .profiles import R_S, RHO, TAU_S, THETA_S, Profile, constant_profile, smooth_step
from .report import CheckResult, Status

THETA = THETA_S
END_COORDS = (RHO, X, U, V)
CIRC_COORDS = (THETA, X, U, V)
TURB_COORDS = (R_S, THETA, X, U, V)
B_COORDS = (TAU_S, X, U, V)
FOL_COORDS = (TAU_S, THETA, X, U, V)

FD_ORDER_WINDOW = (1.9, 2.3)


class DegenerateGeometryError(ValueError):
    pass


class ParityError(ValueError):
    pass


class GluingUnavailableError(ValueError):
    pass


@dataclass(frozen=True)
class Constants:
    a: float
    b: float
    a_bound: float  # a must exceed this
    b_bound: float  # b must stay below this (inf when C = 0)

    @property
    def b_bound_vacuous(self) -> bool:
        return math.isinf(self.b_bound)

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "aBound": self.a_bound,
            "bBound": "+inf" if self.b_bound_vacuous else self.b_bound,
        }


@dataclass
class ConstructionBundle:
    kind: str
    coords: tuple
    forms: dict[str, FormField]
    model: LinkModel
    constants: Optional[Constants] = None
    profiles: dict[str, Profile] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> FormField:
        return self.forms[name]


def choose_constants(gc: GeometryConstants, a_factor: float = 1.1, b_factor: float = 0.5) -> Constants:
    if gc.m_min <= 0:
        raise DegenerateGeometryError("dx ^ omega_sigma vanishes somewhere (m = 0)")
    if gc.c_max > 0:
        b_bound = gc.a_min / gc.c_max
        b = min(1.0, b_factor * b_bound)
    else:
        b_bound = math.inf
        b = 1.0
    a_bound = (2 * gc.a_max + b * gc.c_max) / (b * gc.m_min)
    return Constants(a=a_factor * a_bound, b=b, a_bound=a_bound, b_bound=b_bound)


def _witness(names, points, k) -> dict:
    return {name: float(points[k, i]) for i, name in enumerate(names)}


def _top(form: FormField, points: np.ndarray) -> np.ndarray:
    if not form.coeffs:
        return np.zeros(len(points))
    return form.evaluate(points)[:, 0]


def _profile_in(p: Profile, var: sp.Symbol) -> sp.Expr:
    return p.expr.subs(p.var, var) if p.var != var else p.expr


def _order_ok(table) -> tuple[bool, str]:
    if table.at_floor:
        return True, "vacuous"
    lo, hi = FD_ORDER_WINDOW
    if not table.monotone:
        return False, "non-monotone residuals"
    ok = table.order is not None and lo <= table.order <= hi
    return ok, f"order {table.order:.3f}"


# ----------------------------------------------------------------------------
# end form on [1, inf) x N


def default_end_grid(n_rho: int = 64, n: int = 16, rho_range=(1.0, 8.0)) -> Grid:
    return Grid(
        (
            Axis("rho", rho_range[0], rho_range[1], n_rho, extendable=True),
            Axis("x", 0.0, 2 * math.pi, n, extendable=True),
            Axis("u", 0.0, 1.0, n, periodic=True),
            Axis("v", 0.0, 1.0, n, periodic=True),
        )
    )


def end_convergence_grid() -> Grid:
    """Base grid for the FD order study of the end form.

    Coefficients do not depend on (u, v), so only rho and x are refined.
    """
    return Grid(
        (
            Axis("rho", 1.0, 10.0, 289, extendable=True),
            Axis("x", 0.0, 2 * math.pi, 9, extendable=True),
            Axis("u", 0.0, 1.0, 4, periodic=True),
            Axis("v", 0.0, 1.0, 4, periodic=True),
        )
    )


def assemble_end_form(model: LinkModel, K: Profile, L: Profile, a: float, b: float) -> ConstructionBundle:
    alpha = model.alpha.lift(END_COORDS)
    k_alpha = alpha * _profile_in(K, RHO)
    d_k_alpha = d_analytic(k_alpha)
    omega_sigma = model.omega_sigma.lift(END_COORDS)
    dr_dx = coordinate_form(END_COORDS, RHO, X)
    omega = d_k_alpha + omega_sigma * b + dr_dx * _profile_in(L, RHO)
    cylinder = dr_dx * a + omega_sigma * b
    return ConstructionBundle(
        kind="end",
        coords=END_COORDS,
        forms={"omega_E": omega, "d_K_alpha": d_k_alpha, "cylinder": cylinder, "drho_dx": dr_dx},
        model=model,
        constants=Constants(a, b, float("nan"), float("nan")),
        profiles={"K": K, "L": L},
    )


def end_form_square_ratio(bundle: ConstructionBundle, points: np.ndarray) -> np.ndarray:
    """``omega_E^2`` divided by the unit volume ``drho ^ e1 ^ e2 ^ e3``."""
    sq = wedge(bundle["omega_E"], bundle["omega_E"])
    return _top(sq, points) / coframe_volume(bundle.model, points[:, 1:])


END_INTERVALS = ((1.0, 2.0), (2.0, 3.0), (3.0, 8.0), (4.0, 8.0))


def verify_end_form(
    bundle: ConstructionBundle,
    grid: Optional[Grid] = None,
    tol: float = 1e-12,
    margin: float = 1e-6,
    fd_levels: int = 3,
    fd_base: Optional[Grid] = None,
) -> CheckResult:
    grid = grid or default_end_grid()
    pts = grid.points()
    names = grid.names
    ref = "Thm 4.1 Step 3"

    ident = wedge(bundle["d_K_alpha"], bundle["drho_dx"])
    ident_res = float(np.max(np.abs(ident.evaluate(pts)))) if ident.coeffs else 0.0

    ratio = end_form_square_ratio(bundle, pts)
    rho = pts[:, 0]
    inside = rho <= 8.0
    k = int(np.flatnonzero(inside)[np.argmin(ratio[inside])])
    per_interval = {}
    for lo, hi in END_INTERVALS:
        sel = np.flatnonzero((rho >= lo) & (rho <= hi))
        if sel.size:
            j = sel[np.argmin(ratio[sel])]
            per_interval[f"[{lo:g},{hi:g}]"] = {"margin": float(ratio[j]), "witness": _witness(names, pts, j)}

    tail_grid = Grid((Axis("rho", 8.0, 10.0, 16),) + grid.axes[1:])
    tpts = tail_grid.points()
    tail_res = float(np.max(np.abs(bundle["omega_E"].evaluate(tpts) - bundle["cylinder"].evaluate(tpts))))

    details = {
        "identity_residual": ident_res,
        "intervals": per_interval,
        "tail_residual": tail_res,
        "constants": bundle.constants.to_dict(),
    }
    ok = ident_res <= tol and ratio[k] >= margin and tail_res <= tol
    if fd_levels:
        table = fd_convergence(bundle["omega_E"], fd_base or end_convergence_grid(), fd_levels, refine=("rho", "x"))
        fd_ok, note = _order_ok(table)
        details["fd"] = {"h": table.h, "residual": table.residual, "order": table.order, "note": note}
        ok = ok and fd_ok
    return CheckResult(
        name="end-form",
        paper_ref=ref,
        status=Status.PASS if ok else Status.FAIL,
        worst_margin=float(ratio[k]),
        worst_residual=max(ident_res, tail_res),
        witness=_witness(names, pts, k),
        grid=grid.describe(),
        details=details,
    )


# ----------------------------------------------------------------------------
# circular construction on S^1 x N


def default_circular_grid(n_theta: int = 64, n: int = 16) -> Grid:
    return Grid(
        (
            Axis("theta", 0.0, 2 * math.pi, n_theta, periodic=True),
            Axis("x", 0.0, 2 * math.pi, n, extendable=True),
            Axis("u", 0.0, 1.0, n, periodic=True),
            Axis("v", 0.0, 1.0, n, periodic=True),
        )
    )


@dataclass
class LambdaSamples:
    theta: np.ndarray
    values: np.ndarray
    witness: list  # N point attaining the minimum, per theta


def _n_ratios(model: LinkModel, n_points: np.ndarray, alpha_g: FormField):
    """(alpha ^ d alpha) / (alpha_G ^ omega) and (alpha ^ omega) / (alpha_G ^ omega) on N."""
    denom = _top(wedge(alpha_g, model.omega_sigma), n_points)
    if np.any(np.abs(denom) < 1e-14):
        raise DegenerateGeometryError("alpha_G ^ omega_sigma is not a volume form on the grid")
    a1 = _top(wedge(model.alpha, d_analytic(model.alpha)), n_points) / denom
    a2 = _top(wedge(model.alpha, model.omega_sigma), n_points) / denom
    return a1, a2


def lambda_profile(
    model: LinkModel,
    K: Profile,
    n_grid: Grid,
    theta: np.ndarray,
    alpha_g: Optional[FormField] = None,
) -> LambdaSamples:
    """Pointwise lower bound for L: -min over N of K'(K a1 + a2)."""
    alpha_g = alpha_g or model.dx
    pts = n_grid.points()
    a1, a2 = _n_ratios(model, pts, alpha_g)
    theta = np.asarray(theta, dtype=float)
    kv, kp = K.value(theta), K.derivative(theta)
    inner = kp[:, None] * (kv[:, None] * a1[None, :] + a2[None, :])
    j = np.argmin(inner, axis=1)
    vals = -inner[np.arange(len(theta)), j]
    return LambdaSamples(theta, vals, [_witness(n_grid.names, pts, k) for k in j])


def lambda_expr(model: LinkModel, K: Profile) -> sp.Expr:
    """Closed form of the lower bound when the contact ratio is constant and
    ``alpha ^ omega_sigma`` vanishes (both hold for nil and solv models)."""
    return -sp.Float(model.contact_ratio, 17) * _profile_in(K, THETA) * sp.diff(_profile_in(K, THETA), THETA)


def default_circular_l(model: LinkModel, K: Profile, offset: float = 1.0) -> Profile:
    expr = lambda_expr(model, K) + offset
    return Profile("L", THETA, expr, (0.0, 2 * math.pi), (), {"offset": offset}, periodic=True)


def violating_circular_l(model: LinkModel, K: Profile, dip: float = 0.1) -> Profile:
    """``lambda + 1`` except on a window where K decreases (lambda > 0),
    where it drops to ``lambda - dip``."""
    q = sp.pi / 16
    c = sp.Rational(11, 8) * sp.pi  # middle of the descent [5pi/4, 3pi/2]
    window = smooth_step((THETA - (c - 2 * q)) / q) - smooth_step((THETA - (c + q)) / q)
    expr = lambda_expr(model, K) + 1 - (1 + dip) * window
    return Profile("L", THETA, expr, (0.0, 2 * math.pi), (), {"dip": dip}, periodic=True)


def assemble_circular_form(
    model: LinkModel, K: Profile, L: Profile, alpha_g: Optional[FormField] = None
) -> ConstructionBundle:
    alpha_g = (alpha_g or model.dx).lift(CIRC_COORDS)
    alpha = model.alpha.lift(CIRC_COORDS)
    omega = (
        d_analytic(alpha * _profile_in(K, THETA))
        + model.omega_sigma.lift(CIRC_COORDS)
        + wedge(coordinate_form(CIRC_COORDS, THETA), alpha_g) * _profile_in(L, THETA)
    )
    return ConstructionBundle("circular", CIRC_COORDS, {"omega": omega}, model, profiles={"K": K, "L": L})


def circular_convergence_grid() -> Grid:
    return Grid(
        (
            Axis("theta", 0.0, 2 * math.pi, 64, periodic=True),
            Axis("x", 0.0, 2 * math.pi, 9, extendable=True),
            Axis("u", 0.0, 1.0, 4, periodic=True),
            Axis("v", 0.0, 1.0, 4, periodic=True),
        )
    )


def verify_circular(
    bundle: ConstructionBundle,
    grid: Optional[Grid] = None,
    margin: float = 1e-6,
    fd_levels: int = 3,
) -> CheckResult:
    grid = grid or default_circular_grid()
    pts = grid.points()
    model, K, L = bundle.model, bundle.profiles["K"], bundle.profiles["L"]
    theta = grid.axes[0].samples()
    n_grid = Grid(grid.axes[1:])
    lam = lambda_profile(model, K, n_grid, theta)
    gap = L.value(theta) - lam.values
    jg = int(np.argmin(gap))

    sq = wedge(bundle["omega"], bundle["omega"])
    ratio = _top(sq, pts) / coframe_volume(model, pts[:, 1:])
    k = int(np.argmin(ratio))
    fd = fd_residual(bundle["omega"], grid)
    integral = float(np.mean(L.value(theta)) * 2 * math.pi)
    ok = gap[jg] > 0 and ratio[k] >= margin
    details = {
        "lambda_gap_min": float(gap[jg]),
        "lambda_gap_theta": float(theta[jg]),
        "lambda_witness": lam.witness[jg],
        "d_fd_residual": fd,
        "L_integral": integral,
    }
    if fd_levels:
        table = fd_convergence(bundle["omega"], circular_convergence_grid(), fd_levels, refine=("theta", "x"))
        fd_ok, note = _order_ok(table)
        details["fd"] = {"h": table.h, "residual": table.residual, "order": table.order, "note": note}
        ok = ok and fd_ok
    return CheckResult(
        name="circular",
        paper_ref="Sec 4.2, Thm 4.3",
        status=Status.PASS if ok else Status.FAIL,
        worst_margin=float(min(ratio[k], gap[jg])),
        worst_residual=fd,
        witness=_witness(grid.names, pts, k),
        grid=grid.describe(),
        details=details,
    )


# ----------------------------------------------------------------------------
# turbulization near the binding


def default_turb_grid(n_r: int = 32, n: int = 8) -> Grid:
    return Grid(
        (
            Axis("r", 1.0 / n_r, 1.0, n_r),
            Axis("theta", 0.0, 2 * math.pi, n, periodic=True),
            Axis("x", 0.0, 2 * math.pi, n),
            Axis("u", 0.0, 1.0, 4, periodic=True),
            Axis("v", 0.0, 1.0, 4, periodic=True),
        )
    )


def assemble_tubular(model: LinkModel, psi: Profile, a: float, b: float) -> ConstructionBundle:
    p = _profile_in(psi, R_S)
    dr = coordinate_form(TURB_COORDS, R_S)
    dx = coordinate_form(TURB_COORDS, X)
    dth = coordinate_form(TURB_COORDS, THETA)
    alpha_u = dx * p + dr * (1 - p)
    omega_r = wedge(dth, dx * (1 - p) - dr * p)
    omega_u = omega_r * a + model.omega_sigma.lift(TURB_COORDS) * b
    return ConstructionBundle(
        "tubular",
        TURB_COORDS,
        {"alpha_U": alpha_u, "omega_R": omega_r, "omega_U": omega_u},
        model,
        constants=Constants(a, b, float("nan"), float("nan")),
        profiles={"psi": psi},
    )


def turb_leaf_frame(psi: Profile, points: np.ndarray) -> np.ndarray:
    """Frame {d/dtheta, (1-psi) d/dx - psi d/dr, d/du, d/dv} of ker alpha_U."""
    s = psi.value(points[:, 0])
    n = len(points)
    frame = np.zeros((n, 4, 5))
    frame[:, 0, 1] = 1.0
    frame[:, 1, 2] = 1 - s
    frame[:, 1, 0] = -s
    frame[:, 2, 3] = 1.0
    frame[:, 3, 4] = 1.0
    return frame


def verify_tubular(
    bundle: ConstructionBundle,
    grid: Optional[Grid] = None,
    tol: float = 1e-12,
    agree_tol: float = 1e-10,
    margin: float = 1e-6,
) -> CheckResult:
    grid = grid or default_turb_grid()
    pts = grid.points()
    a, b = bundle.constants.a, bundle.constants.b
    alpha_u = bundle["alpha_U"]
    integ = wedge(alpha_u, d_analytic(alpha_u))
    integ_res = float(np.max(np.abs(integ.evaluate(pts)))) if integ.coeffs else 0.0

    frame = turb_leaf_frame(bundle.profiles["psi"], pts)
    tangency = float(np.max(np.abs(restrict_to_frame(alpha_u, pts, frame))))
    _, pf = restrict_to_frame(bundle["omega_U"], pts, frame)
    k = int(np.argmin(pf))

    # boundary torus r = 1: compare with the cylindrical end a dtheta^dx + b omega
    bgrid = Grid((Axis("r", 1.0, 1.0 + 1e-9, 4),) + grid.axes[1:])
    bpts = bgrid.points()
    bpts = bpts[bpts[:, 0] == 1.0]
    bframe = np.zeros((4, 5))
    bframe[0, 1] = bframe[1, 2] = bframe[2, 3] = bframe[3, 4] = 1.0
    bmat, bpf = restrict_to_frame(bundle["omega_U"], bpts, bframe)
    cyl_end = coordinate_form(END_COORDS, RHO, X) * a + coordinate_form(END_COORDS, U, V) * b
    cyl = pullback(cyl_end, CIRC_COORDS, {RHO: THETA, X: X, U: U, V: V})
    cmat, _ = restrict_to_frame(cyl.lift(TURB_COORDS), bpts, bframe)
    end_match = float(np.max(np.abs(bmat - cmat)))
    boundary_pf = float(np.max(np.abs(bpf - a * b)))

    ok = integ_res <= tol and tangency <= tol and pf[k] >= margin and end_match <= agree_tol and boundary_pf <= agree_tol
    return CheckResult(
        name="tubular",
        paper_ref="Rem 3.1, Constr 3.4",
        status=Status.PASS if ok else Status.FAIL,
        worst_margin=float(pf[k]),
        worst_residual=max(integ_res, tangency, end_match, boundary_pf),
        witness=_witness(grid.names, pts, k),
        grid=grid.describe(),
        details={
            "integrability_residual": integ_res,
            "frame_tangency_residual": tangency,
            "boundary_pfaffian_minus_ab": boundary_pf,
            "boundary_vs_cylindrical_end": end_match,
            "flatness": "psi flat to third order at r = 1",
        },
    )


# ----------------------------------------------------------------------------
# b^ell-symplectic form on (-2, 2) x N

GLUING_MODES = ("double", "same-sign")


def check_parity(ell: int, mode: str) -> None:
    if mode not in GLUING_MODES:
        raise ValueError(f"unknown gluing mode {mode!r}")
    if mode == "double" and ell % 2 == 0:
        raise ParityError(f"double gluing needs odd ell, got {ell}")
    if mode == "same-sign" and ell % 2 == 1:
        raise ParityError(f"same-sign gluing needs even ell, got {ell}")


def assemble_bsymplectic(model: LinkModel, ell: int, p: Profile, mode: Optional[str] = None) -> ConstructionBundle:
    """``Omega_b = p(tau) dtau ^ beta + omega_sigma`` with the closed form ``beta = dx``."""
    mode = mode or ("double" if ell % 2 else "same-sign")
    check_parity(ell, mode)
    beta = model.dx.lift(B_COORDS)
    omega = wedge(coordinate_form(B_COORDS, TAU_S), beta) * _profile_in(p, TAU_S) + model.omega_sigma.lift(B_COORDS)
    return ConstructionBundle(
        "b-symplectic", B_COORDS, {"Omega_b": omega, "beta": beta}, model, profiles={"p": p}, extra={"ell": ell, "mode": mode}
    )


def _form_matrix(form: FormField, points: np.ndarray) -> np.ndarray:
    """Antisymmetric coefficient matrix of a 2-form in chart coordinates."""
    frame = np.eye(form.dim)
    mat, _ = restrict_to_frame(form, points, frame)
    return mat


def bivector_pfaffian(form: FormField, points: np.ndarray) -> np.ndarray:
    """Pfaffian of the Poisson bivector, the inverse of the form's matrix."""
    mat = _form_matrix(form, points)
    return pfaffian(np.linalg.inv(mat))


def degeneration_order(bundle: ConstructionBundle, js=range(3, 11)) -> float:
    """Log-log slope of |Pf(Omega_b^-1)| at tau = 2^-j."""
    taus = np.array([2.0**-j for j in js])
    pts = np.zeros((len(taus), 4))
    pts[:, 0] = taus
    pts[:, 1] = 0.3
    vals = np.abs(bivector_pfaffian(bundle["Omega_b"], pts))
    return float(np.polyfit(np.log(taus), np.log(vals), 1)[0])


def default_b_grid(n_tau: int = 64, n: int = 8) -> Grid:
    return Grid(
        (
            Axis("tau", -1.95, 1.95, n_tau),
            Axis("x", 0.0, 2 * math.pi, n),
            Axis("u", 0.0, 1.0, 4, periodic=True),
            Axis("v", 0.0, 1.0, 4, periodic=True),
        )
    )


def _end_pullbacks(bundle: ConstructionBundle) -> dict[str, FormField]:
    """Collar form ``dt ^ beta + omega`` of each copy, pulled back to the b-chart."""
    t = sp.Symbol("t", real=True)
    collar_coords = (t, X, U, V)
    collar = coordinate_form(collar_coords, t, X) + coordinate_form(collar_coords, U, V)
    x_sign = -1 if bundle.extra["mode"] == "same-sign" else 1
    return {
        "minus": pullback(collar, B_COORDS, {t: -TAU_S, X: x_sign * X, U: U, V: V}),
        "plus": pullback(collar, B_COORDS, {t: TAU_S, X: X, U: U, V: V}),
    }


def verify_bsymplectic(
    bundle: ConstructionBundle,
    grid: Optional[Grid] = None,
    tol: float = 1e-12,
    margin: float = 1e-6,
    order_tol: float = 0.05,
) -> CheckResult:
    grid = grid or default_b_grid()
    pts = grid.points()
    ell = bundle.extra["ell"]
    omega = bundle["Omega_b"]
    top = np.abs(_top(wedge(omega, omega), pts))
    off = np.abs(pts[:, 0]) > 0
    k = int(np.flatnonzero(off)[np.argmin(top[off])])

    order = degeneration_order(bundle)
    order_ok = abs(order - ell) <= order_tol

    ends = _end_pullbacks(bundle)
    end_res = {}
    for side, lo, hi in (("minus", -1.95, -1.55), ("plus", 1.55, 1.95)):
        egrid = Grid((Axis("tau", lo, hi, 8),) + grid.axes[1:])
        epts = egrid.points()
        end_res[side] = float(np.max(np.abs(omega.evaluate(epts) - ends[side].evaluate(epts))))
    worst_end = max(end_res.values())
    ok = top[k] >= margin and order_ok and worst_end <= tol
    return CheckResult(
        name="b-symplectic",
        paper_ref="Prop 6.2, Thm 6.1",
        status=Status.PASS if ok else Status.FAIL,
        worst_margin=float(top[k]),
        worst_residual=worst_end,
        witness=_witness(grid.names, pts, k),
        grid=grid.describe(),
        details={"ell": ell, "mode": bundle.extra["mode"], "order_fit": order, "end_residuals": end_res},
    )


# ----------------------------------------------------------------------------
# foliated cylinder (-2, 2) x S^1 x N

FOL_REGIONS = {"minus": (-2.0, -1.0 / 3), "zero": (-2.0 / 3, 2.0 / 3), "plus": (1.0 / 3, 2.0)}
FOL_OVERLAPS = {"minus/zero": (-2.0 / 3, -1.0 / 3), "zero/plus": (1.0 / 3, 2.0 / 3)}


def assemble_foliated_cylinder(model: LinkModel, phi: Profile) -> ConstructionBundle:
    f = _profile_in(phi, TAU_S)
    dtau = coordinate_form(FOL_COORDS, TAU_S)
    dth = coordinate_form(FOL_COORDS, THETA)
    beta = model.dx.lift(FOL_COORDS)
    om = model.omega_sigma.lift(FOL_COORDS)
    alpha = dth * sp.cos(f) - dtau * sp.sin(f)
    forms = {
        "alpha_prime": alpha,
        "minus": wedge(dtau, beta) + om,
        "zero": wedge(dth, beta) + om,
        "plus": -wedge(dtau, beta) + om,
    }
    return ConstructionBundle("foliated-cylinder", FOL_COORDS, forms, model, profiles={"phi": phi})


def foliated_leaf_frame(phi: Profile, points: np.ndarray) -> np.ndarray:
    """Frame (V, d/dx, d/du, d/dv) of ker alpha' with V = cos(phi) d/dtau + sin(phi) d/dtheta."""
    f = phi.value(points[:, 0])
    frame = np.zeros((len(points), 4, 5))
    frame[:, 0, 0] = np.cos(f)
    frame[:, 0, 1] = np.sin(f)
    frame[:, 1, 2] = frame[:, 2, 3] = frame[:, 3, 4] = 1.0
    return frame


def _fol_grid(lo: float, hi: float, n_tau: int, n: int, open_ends: bool) -> Grid:
    if open_ends:
        h = (hi - lo) / (n_tau + 1)
        lo, hi = lo + h, hi - h
    return Grid(
        (
            Axis("tau", lo, hi, n_tau),
            Axis("theta", 0.0, 2 * math.pi, 4, periodic=True),
            Axis("x", 0.0, 2 * math.pi, n),
            Axis("u", 0.0, 1.0, 4, periodic=True),
            Axis("v", 0.0, 1.0, 4, periodic=True),
        )
    )


def verify_foliated(
    bundle: ConstructionBundle,
    n_tau: int = 64,
    n: int = 4,
    tol: float = 1e-12,
    agree_tol: float = 1e-10,
    margin: float = 1e-6,
) -> CheckResult:
    phi = bundle.profiles["phi"]
    alpha = bundle["alpha_prime"]
    full = _fol_grid(-1.95, 1.95, n_tau, n, False)
    fpts = full.points()
    integ = wedge(alpha, d_analytic(alpha))
    integ_res = float(np.max(np.abs(integ.evaluate(fpts)))) if integ.coeffs else 0.0
    tangency = float(np.max(np.abs(restrict_to_frame(alpha, fpts, foliated_leaf_frame(phi, fpts)))))

    overlaps = {}
    worst_overlap, overlap_witness = 0.0, None
    for name, (lo, hi) in FOL_OVERLAPS.items():
        g = _fol_grid(lo, hi, n_tau, n, True)
        pts = g.points()
        frame = foliated_leaf_frame(phi, pts)
        first, second = name.split("/")
        m1, _ = restrict_to_frame(bundle[first], pts, frame)
        m2, _ = restrict_to_frame(bundle[second], pts, frame)
        diff = np.max(np.abs(m1 - m2), axis=(1, 2))
        j = int(np.argmax(diff))
        overlaps[name] = float(diff[j])
        if diff[j] >= worst_overlap:
            worst_overlap, overlap_witness = float(diff[j]), _witness(g.names, pts, j)

    pfs = {}
    worst_pf, pf_witness = math.inf, None
    for name, (lo, hi) in FOL_REGIONS.items():
        g = _fol_grid(max(lo, -1.95), min(hi, 1.95), n_tau, n, True)
        pts = g.points()
        _, pf = restrict_to_frame(bundle[name], pts, foliated_leaf_frame(phi, pts))
        j = int(np.argmin(pf))
        pfs[name] = float(pf[j])
        if pf[j] < worst_pf:
            worst_pf, pf_witness = float(pf[j]), _witness(g.names, pts, j)

    ok = integ_res <= tol and tangency <= tol and worst_overlap <= agree_tol and worst_pf >= margin
    return CheckResult(
        name="foliated-cylinder",
        paper_ref="Constr 6.3, Thm 6.4",
        status=Status.PASS if ok else Status.FAIL,
        worst_margin=worst_pf,
        worst_residual=max(integ_res, tangency, worst_overlap),
        witness=overlap_witness if worst_overlap > agree_tol else pf_witness,
        grid=full.describe(),
        details={
            "integrability_residual": integ_res,
            "frame_tangency_residual": tangency,
            "overlap_disagreement": overlaps,
            "leaf_pfaffian_min": pfs,
        },
    )


# ----------------------------------------------------------------------------
# double gluing of two end copies


def gluing_map(model: LinkModel) -> sl2z.Sl2Matrix:
    """Fibre part P of the identification, with P A^-1 P^-1 = A in the chart."""
    a = model.monodromy
    if not sl2z.conjugate_to_inverse(a):
        raise GluingUnavailableError(f"monodromy {a} is not conjugate to its inverse in SL(2,Z)")
    return sl2z.find_conjugator(a.inverse(), a)


def default_seam_grid(n: int = 8) -> Grid:
    return Grid(
        (
            Axis("rho", 8.0, 12.0, 16),
            Axis("x", 0.0, 2 * math.pi, n),
            Axis("u", 0.0, 1.0, n, periodic=True),
            Axis("v", 0.0, 1.0, n, periodic=True),
        )
    )


def verify_double_gluing(
    model: LinkModel,
    grid: Optional[Grid] = None,
    tol: float = 1e-12,
    a: float = 1.0,
    b: float = 1.0,
) -> CheckResult:
    grid = grid or default_seam_grid()
    pts = grid.points()
    p = gluing_map(model)
    mono = model.monodromy
    deck_ok = p @ mono.inverse() == mono @ p

    mapping = {RHO: 20 - RHO, X: -X, U: p.a * U + p.b * V, V: p.c * U + p.d * V}
    collar = coordinate_form(END_COORDS, RHO, X) * a + coordinate_form(END_COORDS, U, V) * b
    pulled = pullback(collar, END_COORDS, mapping)
    seam_res = float(np.max(np.abs(pulled.evaluate(pts) - collar.evaluate(pts))))

    dx_pull = pullback(coordinate_form(END_COORDS, X), END_COORDS, mapping)
    base_rev = float(np.max(np.abs(dx_pull.evaluate(pts) + coordinate_form(END_COORDS, X).evaluate(pts))))
    om = coordinate_form(END_COORDS, U, V)
    fiber_pres = float(np.max(np.abs(pullback(om, END_COORDS, mapping).evaluate(pts) - om.evaluate(pts))))
    drdx = coordinate_form(END_COORDS, RHO, X)
    sign_book = float(np.max(np.abs(pullback(drdx, END_COORDS, mapping).evaluate(pts) - drdx.evaluate(pts))))

    worst = max(seam_res, base_rev, fiber_pres, sign_book)
    ok = deck_ok and worst <= tol
    return CheckResult(
        name="double-gluing",
        paper_ref="Constr 5.2, Prop 5.1",
        status=Status.PASS if ok else Status.FAIL,
        worst_residual=worst,
        grid=grid.describe(),
        details={
            "fiber_map": p.to_list(),
            "deck_compatible": deck_ok,
            "seam_residual": seam_res,
            "base_reversal_residual": base_rev,
            "fiber_orientation_residual": fiber_pres,
            "drho_dx_sign_residual": sign_book,
        },
    )
