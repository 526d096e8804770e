"""Single-variable profile functions with a built-in constraint audit.

Every transition is built from the septic smooth step
``S(t) = 35 t^4 - 84 t^5 + 70 t^6 - 20 t^7`` which is C^3 and monotone, with
vanishing first to third derivatives at both ends. Continuity of the third
derivative keeps central-difference errors cleanly proportional to h^2. Plateaus are exact, so equalities
such as ``K = 0`` for large arguments hold with no rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import sympy as sp

from .exterior import evaluate_expr


class ProfileConstraintError(ValueError):
    pass


RHO, THETA_S, R_S, TAU_S = sp.symbols("rho theta r tau", real=True)

Target = Union[float, Callable[[np.ndarray], np.ndarray]]


def smooth_step(t: sp.Expr) -> sp.Expr:
    """Septic step, 0 for t <= 0 and 1 for t >= 1."""
    poly = t**4 * (35 - 84 * t + 70 * t**2 - 20 * t**3)
    return sp.Piecewise((0, t <= 0), (poly, t < 1), (1, True))


def ramp_integral(t: sp.Expr) -> sp.Expr:
    """Antiderivative of ``smooth_step`` vanishing for t <= 0."""
    poly = 7 * t**5 - 14 * t**6 + 10 * t**7 - sp.Rational(5, 2) * t**8
    return sp.Piecewise((0, t <= 0), (poly, t < 1), (t - sp.Rational(1, 2), True))


@dataclass(frozen=True)
class Constraint:
    label: str
    lo: float
    hi: float
    quantity: str  # "value" or "derivative"
    relation: str  # "eq", "ge", "le", "gt", "lt"
    target: Target = 0.0
    open_ends: bool = False
    tol: float = 1e-12

    def check(self, prof: Profile, n: int) -> tuple[bool, float, float]:
        """Return (ok, worst slack, location). Slack < 0 means violated."""
        if self.open_ends:
            t = np.linspace(self.lo, self.hi, n + 2)[1:-1]
        else:
            t = np.linspace(self.lo, self.hi, n)
        y = prof.value(t) if self.quantity == "value" else prof.derivative(t)
        tgt = self.target(t) if callable(self.target) else np.full_like(t, float(self.target))
        if self.relation == "eq":
            scale = np.maximum(1.0, np.abs(tgt))
            slack = self.tol * scale - np.abs(y - tgt)
        elif self.relation in ("ge", "gt"):
            slack = y - tgt + (self.tol if self.relation == "ge" else 0.0)
        else:
            slack = tgt - y + (self.tol if self.relation == "le" else 0.0)
        k = int(np.argmin(slack))
        strict = self.relation in ("gt", "lt")
        ok = bool(slack[k] > 0) if strict else bool(slack[k] >= 0)
        return ok, float(slack[k]), float(t[k])


@dataclass(frozen=True)
class Profile:
    name: str
    var: sp.Symbol
    expr: sp.Expr
    domain: tuple[float, float]
    constraints: tuple[Constraint, ...] = ()
    params: dict = field(default_factory=dict)
    periodic: bool = False

    @property
    def dexpr(self) -> sp.Expr:
        return sp.diff(self.expr, self.var)

    def value(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return evaluate_expr(self.expr, (self.var,), t.reshape(-1, 1)).reshape(t.shape)

    def derivative(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return evaluate_expr(self.dexpr, (self.var,), t.reshape(-1, 1)).reshape(t.shape)

    def subs(self, symbol: sp.Symbol) -> sp.Expr:
        """The profile expression in another variable."""
        return self.expr.subs(self.var, symbol)

    def audit(self, n: int = 10_000) -> list[dict]:
        out = []
        for c in self.constraints:
            ok, slack, where = c.check(self, n)
            out.append({"constraint": c.label, "ok": ok, "slack": slack, "at": where})
        return out

    def require(self, n: int = 10_000) -> Profile:
        bad = [r for r in self.audit(n) if not r["ok"]]
        if bad:
            raise ProfileConstraintError(f"profile {self.name} violates {bad}")
        return self


# ----------------------------------------------------------------------------
# end profiles on [1, infinity)

# Default ramps for K': (start, width, change). K' = 1 up to rho = 3, drops to
# 0 by 3.3, stays 0 until 4, descends to -1 and climbs back to 0 at 8. The
# start of the third ramp is solved so that K(8) = 0 exactly.
_K_RAMPS = (
    (3, sp.Rational(3, 10), -1),
    (4, sp.Rational(2, 5), sp.Rational(-33, 50)),
    (None, 1, sp.Rational(-17, 50)),
    (sp.Rational(38, 5), sp.Rational(2, 5), 1),
)


def _ramp_sum(var, ramps):
    expr = var
    for s, w, delta in ramps:
        expr = expr + delta * w * ramp_integral((var - s) / w)
    return expr


def _solve_k_ramps():
    s2 = sp.Symbol("s2")
    ramps = [(s, w, dl) if s is not None else (s2, w, dl) for s, w, dl in _K_RAMPS]
    # every ramp is complete by rho = 8, so K(8) is affine in s2
    k8 = 8 + sum(dl * w * ((8 - s) / w - sp.Rational(1, 2)) for s, w, dl in ramps)
    sol = sp.solve(sp.Eq(k8, 0), s2)[0]
    return tuple((s if s is not None else sol, w, dl) for s, w, dl in _K_RAMPS)


def k_constraints() -> tuple[Constraint, ...]:
    return (
        Constraint("(K-1) K = rho on [1,3]", 1, 3, "value", "eq", lambda t: t),
        Constraint("(K-2) K' >= 0 on [3,4)", 3, 4, "derivative", "ge", 0.0),
        Constraint("(K-2) K' <= 1 on [3,4)", 3, 4, "derivative", "le", 1.0),
        Constraint("(K-3) K' >= -1 on (4,8]", 4, 8, "derivative", "ge", -1.0),
        Constraint("(K-3) K' <= 0 on (4,8]", 4, 8, "derivative", "le", 0.0),
        Constraint("(K-4) K = 0 on [8,12]", 8, 12, "value", "eq", 0.0),
        Constraint("K >= 0", 1, 12, "value", "ge", 0.0),
    )


def k_profile(ramps=None) -> Profile:
    ramps = ramps or _solve_k_ramps()
    body = _ramp_sum(RHO, ramps)
    expr = sp.Piecewise((RHO, RHO <= 3), (body, RHO < 8), (0, True))
    k8 = float(body.subs(RHO, 8))
    if abs(k8) > 1e-12:
        raise ProfileConstraintError(f"K(8) = {k8} must vanish")
    prof = Profile("K", RHO, expr, (1.0, math.inf), k_constraints(), {"ramps": [tuple(map(float, r)) for r in ramps]})
    return prof.require()


def l_constraints(a: float) -> tuple[Constraint, ...]:
    return (
        Constraint("(L-1) L = 0 on [1,2]", 1, 2, "value", "eq", 0.0),
        Constraint("(L-2) L' > 0 on (2,3)", 2, 3, "derivative", "gt", 0.0, open_ends=True),
        Constraint("(L-3) L = a on [3,12]", 3, 12, "value", "eq", a),
    )


def l_profile(a: float) -> Profile:
    if a <= 0:
        raise ProfileConstraintError("L needs a > 0")
    expr = sp.Float(a, 17) * smooth_step(RHO - 2)
    return Profile("L", RHO, expr, (1.0, math.inf), l_constraints(a), {"a": a}).require()


def constant_profile(name: str, value: float, var: sp.Symbol = RHO, domain=(1.0, math.inf)) -> Profile:
    """Unconstrained constant, used by negative tests and trivial cases."""
    return Profile(name, var, sp.Float(value, 17) if value else sp.Integer(0), domain, (), {"value": value})


# ----------------------------------------------------------------------------
# turbulization, circular, and foliated-cylinder profiles


def psi_profile(eps: float = 1.0) -> Profile:
    e = sp.nsimplify(eps)
    expr = 1 - smooth_step((R_S - e / 2) / (e / 2))
    cons = (
        Constraint("psi = 1 on [0, eps/2]", 0, eps / 2, "value", "eq", 1.0),
        Constraint("psi' < 0 on (eps/2, eps)", eps / 2, eps, "derivative", "lt", 0.0, open_ends=True),
        Constraint("psi(eps) = 0", eps, eps, "value", "eq", 0.0),
        Constraint("psi flat at eps (to third order)", eps, eps, "derivative", "eq", 0.0),
    )
    return Profile("PsiTurb", R_S, expr, (0.0, eps), cons, {"eps": eps}).require()


def circular_k_profile(height: float = 1.0) -> Profile:
    """Bump in theta: zero on [0, pi/2] and [3pi/2, 2pi], plateau on [3pi/4, 5pi/4]."""
    q = sp.pi / 4
    expr = sp.Float(height, 17) * (smooth_step((THETA_S - 2 * q) / q) - smooth_step((THETA_S - 5 * q) / q))
    cons = (
        Constraint("K = 0 on [0, pi/2]", 0, math.pi / 2, "value", "eq", 0.0),
        Constraint("K = 0 on [3pi/2, 2pi]", 1.5 * math.pi, 2 * math.pi, "value", "eq", 0.0),
        Constraint("K >= 0", 0, 2 * math.pi, "value", "ge", 0.0),
    )
    return Profile("K", THETA_S, expr, (0.0, 2 * math.pi), cons, {"height": height}, periodic=True).require()


def phi_profile(plateau_minus: float = math.pi / 4, plateau_plus: float = 3 * math.pi / 4, audit: bool = True) -> Profile:
    t = TAU_S
    third = sp.Rational(1, 3)
    pm, pp = sp.Float(plateau_minus, 17), sp.Float(plateau_plus, 17)
    expr = (
        pm * smooth_step((t + 1) / third)
        + (pp - pm) * smooth_step((t + third) / (2 * third))
        + (sp.pi - pp) * smooth_step((t - 2 * third) / third)
    )
    cons = (
        Constraint("(i) phi = 0 for tau <= -1", -2, -1, "value", "eq", 0.0),
        Constraint("(ii) phi = pi for tau >= 1", 1, 2, "value", "eq", math.pi),
        Constraint("(iii) phi(0) = pi/2", 0, 0, "value", "eq", math.pi / 2),
        Constraint("(iv) phi' >= 0 on (-1,1)", -1, 1, "derivative", "ge", 0.0),
        Constraint("(v) phi = pi/4 on (-2/3,-1/3)", -2 / 3, -1 / 3, "value", "eq", math.pi / 4, open_ends=True),
        Constraint("(vi) phi = 3pi/4 on (1/3,2/3)", 1 / 3, 2 / 3, "value", "eq", 3 * math.pi / 4, open_ends=True),
    )
    prof = Profile("Phi", t, expr, (-2.0, 2.0), cons, {"plateaus": (plateau_minus, plateau_plus)})
    return prof.require() if audit else prof


def _p_positive_side(ell: int) -> sp.Expr:
    """p on tau > 0: tau^-ell near 0, 1 beyond 3/2, monotone Hermite blend in u = tau^-ell."""
    t = TAU_S
    if ell == 0:
        return sp.Integer(1)
    u = t ** (-ell)
    u0 = sp.Integer(2) ** ell  # u at tau = 1/2
    u1 = sp.Rational(2, 3) ** ell  # u at tau = 3/2
    h = u0 - u1
    s = (u - u1) / h
    # cubic Hermite: F(u1) = 1, F'(u1) = 0, F(u0) = u0, F'(u0) = 1
    h00, h01, h11 = 2 * s**3 - 3 * s**2 + 1, -2 * s**3 + 3 * s**2, s**3 - s**2
    blend = h00 * 1 + h01 * u0 + h11 * h * 1
    return sp.Piecewise((u, t <= sp.Rational(1, 2)), (blend, t < sp.Rational(3, 2)), (1, True))


def p_profile(ell: int) -> Profile:
    """Coefficient of ``dtau ^ beta`` in the b^ell form on (-2, 2)."""
    if ell < 0:
        raise ProfileConstraintError("ell must be non-negative")
    t = TAU_S
    pos = _p_positive_side(ell)
    neg = (-1) ** ell * pos.subs(t, -t)
    expr = sp.Piecewise((neg, t < 0), (pos, True))
    end_minus = float((-1) ** ell)
    cons = [
        Constraint("p = 1 near tau = 2", 1.5, 2, "value", "eq", 1.0),
        Constraint("p = (-1)^ell near tau = -2", -2, -1.5, "value", "eq", end_minus),
    ]
    if ell:
        cons += [
            Constraint("p = tau^-ell on (0, 1/2)", 0, 0.5, "value", "eq", lambda x: x ** (-ell), open_ends=True),
            Constraint("p' < 0 on (1/2, 3/2)", 0.5, 1.5, "derivative", "lt", 0.0, open_ends=True),
        ]
        if ell % 2:
            cons.append(Constraint("p' < 0 on (-3/2, -1/2)", -1.5, -0.5, "derivative", "lt", 0.0, open_ends=True))
        else:
            cons.append(Constraint("p' > 0 on (-3/2, -1/2)", -1.5, -0.5, "derivative", "gt", 0.0, open_ends=True))
    return Profile(f"P_ell({ell})", t, expr, (-2.0, 2.0), tuple(cons), {"ell": ell}).require()


def build_profile(name: str, **params) -> Profile:
    builders = {
        "K": k_profile,
        "L": l_profile,
        "PsiTurb": psi_profile,
        "Phi": phi_profile,
        "P_ell": p_profile,
        "K_circular": circular_k_profile,
    }
    if name not in builders:
        raise ProfileConstraintError(f"unknown profile {name!r}")
    return builders[name](**params)
