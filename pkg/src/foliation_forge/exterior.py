"""Differential forms on product charts.

A :class:`FormField` stores one sympy expression per strictly increasing
multi-index, so antisymmetry is structural and forms of degree above the
chart dimension cannot be built. The analytic exterior derivative is exact
symbolic differentiation; :func:`d_fd` is an independent central-difference
oracle working only on sampled coefficient values.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import sympy as sp

Index = tuple[int, ...]


class ChartMismatchError(ValueError):
    pass


class MissingDerivativeError(ValueError):
    pass


class GridTooCoarseError(ValueError):
    pass


def _perm_sign(seq: Sequence[int]) -> int:
    sign = 1
    seq = list(seq)
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def _wedge_index(i: Index, j: Index) -> tuple[int, Optional[Index]]:
    if set(i) & set(j):
        return 0, None
    cat = i + j
    return _perm_sign(cat), tuple(sorted(cat))


@lru_cache(maxsize=4096)
def _compile(expr: sp.Expr, coords: tuple[sp.Symbol, ...]) -> Callable:
    return sp.lambdify(coords, expr, modules="numpy", cse=True)


def evaluate_expr(expr, coords: Sequence[sp.Symbol], points: np.ndarray) -> np.ndarray:
    """Evaluate a scalar sympy expression at ``points`` of shape ``(n, dim)``."""
    points = np.asarray(points, dtype=float)
    expr = sp.sympify(expr)
    if not expr.free_symbols:
        return np.full(points.shape[0], float(expr))
    fn = _compile(expr, tuple(coords))
    with np.errstate(all="ignore"):
        out = fn(*[points[:, k] for k in range(points.shape[1])])
    return np.broadcast_to(np.asarray(out, dtype=float), (points.shape[0],)).copy()


class FormField:
    """A degree-k form ``sum_I c_I dy_I`` on the chart ``coords``.

    Either ``coeffs`` (symbolic, supports ``d``) or ``evaluator`` (a numeric
    callable ``points -> (n, n_components)``, no analytic derivative) is given.
    """

    def __init__(
        self,
        coords: Sequence[sp.Symbol],
        degree: int,
        coeffs: Optional[Mapping[Index, sp.Expr]] = None,
        evaluator: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    ):
        self.coords = tuple(coords)
        dim = len(self.coords)
        if not 0 <= degree <= dim:
            raise ValueError(f"degree {degree} impossible on a {dim}-dimensional chart")
        self.degree = degree
        self.evaluator = evaluator
        self.coeffs: Optional[dict[Index, sp.Expr]] = None
        if coeffs is not None:
            clean = {}
            for idx, c in coeffs.items():
                idx = tuple(int(k) for k in idx)
                if len(idx) != degree or list(idx) != sorted(set(idx)) or (idx and idx[-1] >= dim):
                    raise ValueError(f"bad multi-index {idx} for degree {degree}")
                c = sp.sympify(c)
                if c != 0:
                    clean[idx] = c
            self.coeffs = clean
        elif evaluator is None:
            self.coeffs = {}

    # -- bookkeeping ---------------------------------------------------------
    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def components(self) -> list[Index]:
        return list(itertools.combinations(range(self.dim), self.degree))

    @property
    def symbolic(self) -> bool:
        return self.coeffs is not None

    def coefficient(self, idx: Index) -> sp.Expr:
        return self.coeffs.get(tuple(idx), sp.S.Zero)

    def __repr__(self) -> str:
        if not self.symbolic:
            return f"FormField(degree={self.degree}, numeric)"
        names = [str(s) for s in self.coords]
        terms = [f"({c})*" + "^".join("d" + names[k] for k in idx) for idx, c in self.coeffs.items()]
        return " + ".join(terms) or "0"

    def _check_same_chart(self, other: FormField) -> None:
        if self.coords != other.coords:
            raise ChartMismatchError(f"charts differ: {self.coords} vs {other.coords}")

    # -- algebra -------------------------------------------------------------
    def __add__(self, other: FormField) -> FormField:
        self._check_same_chart(other)
        if other.degree != self.degree:
            raise ValueError("cannot add forms of different degree")
        out = dict(self.coeffs)
        for idx, c in other.coeffs.items():
            out[idx] = out.get(idx, 0) + c
        return FormField(self.coords, self.degree, out)

    def __neg__(self) -> FormField:
        return FormField(self.coords, self.degree, {i: -c for i, c in self.coeffs.items()})

    def __sub__(self, other: FormField) -> FormField:
        return self + (-other)

    def __mul__(self, scalar) -> FormField:
        scalar = sp.sympify(scalar)
        return FormField(self.coords, self.degree, {i: scalar * c for i, c in self.coeffs.items()})

    __rmul__ = __mul__

    def __xor__(self, other: FormField) -> FormField:
        return wedge(self, other)

    def d(self) -> FormField:
        return d_analytic(self)

    # -- evaluation ----------------------------------------------------------
    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Dense coefficients, shape ``(n, len(components))``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if not self.symbolic:
            return np.asarray(self.evaluator(points), dtype=float)
        comps = self.components
        out = np.zeros((points.shape[0], len(comps)))
        for k, idx in enumerate(comps):
            if idx in self.coeffs:
                out[:, k] = evaluate_expr(self.coeffs[idx], self.coords, points)
        return out

    def lift(self, coords: Sequence[sp.Symbol]) -> FormField:
        """Same form on a larger chart containing all of ``self.coords``."""
        coords = tuple(coords)
        try:
            pos = [coords.index(s) for s in self.coords]
        except ValueError as exc:
            raise ChartMismatchError(f"{self.coords} is not contained in {coords}") from exc
        out = {}
        for idx, c in self.coeffs.items():
            new = [pos[k] for k in idx]
            out[tuple(sorted(new))] = _perm_sign(new) * c
        return FormField(coords, self.degree, out)

    def max_abs(self, points: np.ndarray) -> float:
        vals = self.evaluate(points)
        return float(np.max(np.abs(vals))) if vals.size else 0.0


def coordinate_form(coords: Sequence[sp.Symbol], *names: sp.Symbol, coeff=1) -> FormField:
    """``coeff * dy_{i1} ^ ... ^ dy_{ik}`` for the listed coordinate symbols."""
    coords = tuple(coords)
    idx = [coords.index(s) for s in names]
    if len(set(idx)) < len(idx):
        return FormField(coords, len(idx), {})
    return FormField(coords, len(idx), {tuple(sorted(idx)): _perm_sign(idx) * sp.sympify(coeff)})


def scalar_field(coords: Sequence[sp.Symbol], expr) -> FormField:
    return FormField(coords, 0, {(): expr})


def wedge(a: FormField, b: FormField) -> FormField:
    a._check_same_chart(b)
    if a.degree + b.degree > a.dim:
        raise ValueError(f"degree {a.degree + b.degree} exceeds chart dimension {a.dim}")
    if not (a.symbolic and b.symbolic):
        return _numeric_wedge(a, b)
    out: dict[Index, sp.Expr] = {}
    for i, ci in a.coeffs.items():
        for j, cj in b.coeffs.items():
            sign, k = _wedge_index(i, j)
            if sign:
                out[k] = out.get(k, 0) + sign * ci * cj
    return FormField(a.coords, a.degree + b.degree, out)


def _numeric_wedge(a: FormField, b: FormField) -> FormField:
    ca, cb = a.components, b.components
    out_comps = list(itertools.combinations(range(a.dim), a.degree + b.degree))
    pos = {k: n for n, k in enumerate(out_comps)}
    table = []
    for p, i in enumerate(ca):
        for q, j in enumerate(cb):
            sign, k = _wedge_index(i, j)
            if sign:
                table.append((p, q, pos[k], sign))

    def ev(points):
        va, vb = a.evaluate(points), b.evaluate(points)
        out = np.zeros((va.shape[0], len(out_comps)))
        for p, q, k, sign in table:
            out[:, k] += sign * va[:, p] * vb[:, q]
        return out

    return FormField(a.coords, a.degree + b.degree, evaluator=ev)


def d_analytic(a: FormField) -> FormField:
    """Exterior derivative from exact coefficient derivatives."""
    if not a.symbolic:
        raise MissingDerivativeError("form has no analytic coefficients to differentiate")
    if a.degree == a.dim:
        raise ValueError("derivative of a top-degree form")
    out: dict[Index, sp.Expr] = {}
    for idx, c in a.coeffs.items():
        for k, sym in enumerate(a.coords):
            if k in idx:
                continue
            dc = sp.diff(c, sym)
            if dc == 0:
                continue
            sign = (-1) ** sum(1 for m in idx if m < k)
            new = tuple(sorted(idx + (k,)))
            out[new] = out.get(new, 0) + sign * dc
    return FormField(a.coords, a.degree + 1, out)


def pullback(a: FormField, source_coords: Sequence[sp.Symbol], mapping: Mapping[sp.Symbol, sp.Expr]) -> FormField:
    """Pull ``a`` back along ``target_coord = mapping[target_coord](source)``.

    Every coordinate of ``a``'s chart must have an entry in ``mapping``.
    """
    source_coords = tuple(source_coords)
    missing = [s for s in a.coords if s not in mapping]
    if missing:
        raise ChartMismatchError(f"mapping lacks target coordinates {missing}")
    exprs = [sp.sympify(mapping[s]) for s in a.coords]
    jac = sp.Matrix([[sp.diff(e, x) for x in source_coords] for e in exprs])
    subs = dict(zip(a.coords, exprs))
    out: dict[Index, sp.Expr] = {}
    for idx, c in a.coeffs.items():
        c2 = c.xreplace(subs) if subs else c
        for jdx in itertools.combinations(range(len(source_coords)), a.degree):
            minor = jac.extract(list(idx), list(jdx)).det() if idx else sp.S.One
            if minor != 0:
                out[jdx] = out.get(jdx, 0) + c2 * minor
    return FormField(source_coords, a.degree, out)


# ----------------------------------------------------------------------------
# Grids and finite differences


@dataclass(frozen=True)
class Axis:
    name: str
    lo: float
    hi: float
    n: int
    periodic: bool = False
    # the form is defined past the ends, so d_fd may sample one ghost point
    # on each side and use central differences up to the boundary
    extendable: bool = False

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / (self.n if self.periodic else self.n - 1)

    def samples(self) -> np.ndarray:
        if self.periodic:
            return self.lo + self.h * np.arange(self.n)
        return np.linspace(self.lo, self.hi, self.n)

    def refined(self) -> Axis:
        n = 2 * self.n if self.periodic else 2 * self.n - 1
        return Axis(self.name, self.lo, self.hi, n, self.periodic, self.extendable)

    def padded(self) -> Axis:
        return Axis(self.name, self.lo - self.h, self.hi + self.h, self.n + 2)


@dataclass(frozen=True)
class Grid:
    axes: tuple[Axis, ...]

    def __post_init__(self):
        for ax in self.axes:
            if ax.n < 4:
                raise GridTooCoarseError(f"axis {ax.name} has {ax.n} < 4 samples")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.n for ax in self.axes)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(ax.name for ax in self.axes)

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*[ax.samples() for ax in self.axes], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def refined(self, names: Optional[Sequence[str]] = None) -> Grid:
        """Halve the spacing on the named axes (all axes by default)."""
        return Grid(tuple(ax.refined() if names is None or ax.name in names else ax for ax in self.axes))

    def describe(self) -> dict:
        return {
            ax.name: {"lo": ax.lo, "hi": ax.hi, "n": ax.n, "periodic": ax.periodic} for ax in self.axes
        }


def _grid_derivative(f: np.ndarray, axis: int, ax: Axis) -> np.ndarray:
    if ax.periodic:
        return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2 * ax.h)
    if ax.extendable:  # f carries one ghost sample on each side of this axis
        n = f.shape[axis]
        hi = np.take(f, np.arange(2, n), axis=axis)
        lo = np.take(f, np.arange(0, n - 2), axis=axis)
        return (hi - lo) / (2 * ax.h)
    return np.gradient(f, ax.h, axis=axis, edge_order=2)


def d_fd(a: FormField, grid: Grid) -> np.ndarray:
    """Second-order finite-difference exterior derivative on ``grid``.

    Grid axes must list the chart coordinates in order. Returns the dense
    coefficient array of ``d a``, shape ``grid.shape + (n_components,)``.
    Periodic axes wrap; extendable axes get one ghost sample past each end;
    the others use one-sided second-order stencils at their ends.
    """
    if len(grid.axes) != a.dim:
        raise ChartMismatchError("grid dimension does not match the chart")
    if a.degree == a.dim:
        raise ValueError("derivative of a top-degree form")
    sample = Grid(tuple(ax.padded() if ax.extendable and not ax.periodic else ax for ax in grid.axes))
    vals = a.evaluate(sample.points()).reshape(sample.shape + (-1,))
    in_comps = a.components
    out_comps = list(itertools.combinations(range(a.dim), a.degree + 1))
    pos = {k: n for n, k in enumerate(out_comps)}
    out = np.zeros(grid.shape + (len(out_comps),))
    for p, idx in enumerate(in_comps):
        c = vals[..., p]
        if not np.any(c):
            continue
        for k, ax in enumerate(grid.axes):
            if k in idx:
                continue
            sign = (-1) ** sum(1 for m in idx if m < k)
            crop = tuple(
                slice(1, -1) if (j != k and other.extendable and not other.periodic) else slice(None)
                for j, other in enumerate(grid.axes)
            )
            out[..., pos[tuple(sorted(idx + (k,)))]] += sign * _grid_derivative(c, k, ax)[crop]
    return out


# ----------------------------------------------------------------------------
# Norms, frames, Pfaffians


def coframe_matrix(coframe: Sequence[FormField], points: np.ndarray) -> np.ndarray:
    """``F[n, i, j]`` with ``e_i = sum_j F[n, i, j] dy_j`` at each point."""
    return np.stack([e.evaluate(points) for e in coframe], axis=1)


def coframe_coefficients(a: FormField, coframe: Sequence[FormField], points: np.ndarray) -> np.ndarray:
    """Coefficients of ``a`` in the basis ``e_J`` induced by the coframe."""
    points = np.atleast_2d(points)
    vals = a.evaluate(points)
    if a.degree == 0:
        return vals
    G = np.linalg.inv(coframe_matrix(coframe, points))  # dy_j = sum_i G[j, i] e_i
    comps = a.components
    out = np.zeros_like(vals)
    for q, jdx in enumerate(comps):
        for p, idx in enumerate(comps):
            if not np.any(vals[:, p]):
                continue
            minor = np.linalg.det(G[:, list(idx)][:, :, list(jdx)])
            out[:, q] += vals[:, p] * minor
    return out


def pointwise_norm(a: FormField, coframe: Sequence[FormField], points: np.ndarray) -> np.ndarray:
    """l2 norm of the coefficients in the orthonormal coframe basis."""
    return np.linalg.norm(coframe_coefficients(a, coframe, points), axis=1)


def pfaffian(m: np.ndarray) -> np.ndarray:
    """Pfaffian of stacked antisymmetric 2x2 or 4x4 matrices."""
    size = m.shape[-1]
    if size == 2:
        return m[..., 0, 1]
    if size == 4:
        return m[..., 0, 1] * m[..., 2, 3] - m[..., 0, 2] * m[..., 1, 3] + m[..., 0, 3] * m[..., 1, 2]
    raise ValueError(f"Pfaffian implemented for sizes 2 and 4, got {size}")


def restrict_to_frame(a: FormField, points: np.ndarray, frame: np.ndarray):
    """Evaluate ``a`` on tangent vectors.

    ``frame`` has shape ``(n, m, dim)`` (or ``(m, dim)``, shared by all
    points). A 1-form gives ``(n, m)``; a 2-form gives the antisymmetric
    ``(n, m, m)`` matrix ``a(f_i, f_j)`` together with its Pfaffian when
    ``m`` is 2 or 4.
    """
    points = np.atleast_2d(points)
    frame = np.asarray(frame, dtype=float)
    if frame.ndim == 2:
        frame = np.broadcast_to(frame, (points.shape[0],) + frame.shape)
    m = frame.shape[1]
    if frame.shape[2] != a.dim:
        raise ChartMismatchError("frame vectors do not live on this chart")
    vals = a.evaluate(points)
    if a.degree == 1:
        return np.einsum("nk,nmk->nm", vals, frame)
    if a.degree != 2:
        raise ValueError("restriction implemented for degrees 1 and 2")
    if m < 2 or m % 2:
        raise ValueError(f"a 2-form needs an even frame of size >= 2, got {m}")
    mat = np.zeros((points.shape[0], m, m))
    for p, (i, j) in enumerate(a.components):
        if not np.any(vals[:, p]):
            continue
        blk = np.einsum("na,nb->nab", frame[:, :, i], frame[:, :, j])
        mat += vals[:, p, None, None] * (blk - np.swapaxes(blk, 1, 2))
    pf = pfaffian(mat) if m in (2, 4) else None
    return mat, pf


# ----------------------------------------------------------------------------
# Convergence of the finite-difference derivative


@dataclass
class ConvergenceTable:
    h: list[float]
    residual: list[float]
    order: Optional[float]
    monotone: bool
    at_floor: bool

    def rows(self) -> list[tuple[float, float, Optional[float]]]:
        """(h, residual, order between this level and the previous one)."""
        out = []
        for k, (h, r) in enumerate(zip(self.h, self.residual)):
            loc = None
            if k and r > 0 and self.residual[k - 1] > 0:
                loc = math.log(self.residual[k - 1] / r) / math.log(self.h[k - 1] / h)
            out.append((h, r, loc))
        return out


def fd_residual(a: FormField, grid: Grid, analytic: Optional[FormField] = None) -> float:
    """max |d_fd(a) - d(a)| over the grid; ``analytic`` overrides ``d(a)``."""
    fd = d_fd(a, grid)
    exact = analytic if analytic is not None else d_analytic(a)
    ref = exact.evaluate(grid.points()).reshape(fd.shape)
    return float(np.max(np.abs(fd - ref)))


def fd_convergence(
    a: FormField,
    base: Grid,
    levels: int,
    analytic: Optional[FormField] = None,
    floor: float = 1e-11,
    refine: Optional[Sequence[str]] = None,
) -> ConvergenceTable:
    """Refine ``base`` ``levels - 1`` times (halving h) and fit the order.

    ``refine`` restricts refinement to the named axes; the first axis must be
    among them since its spacing is reported as h. Residuals below ``floor``
    on every level mean the derivative is exact up to rounding; the order is
    then left undetermined.
    """
    if levels < 3:
        raise ValueError("a convergence study needs at least 3 levels")
    hs, res = [], []
    grid = base
    for _ in range(levels):
        hs.append(grid.axes[0].h)
        res.append(fd_residual(a, grid, analytic))
        grid = grid.refined(refine)
    at_floor = max(res) <= floor
    monotone = all(r1 < r0 for r0, r1 in zip(res, res[1:]))
    order = None
    if not at_floor and min(res) > 0:
        order = float(np.polyfit(np.log(hs), np.log(res), 1)[0])
    return ConvergenceTable(hs, res, order, monotone, at_floor)
