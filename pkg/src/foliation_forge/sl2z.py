"""Exact SL(2, Z) algebra for torus-bundle monodromies.

Everything here works on Python integers. Matrices whose entries leave the
signed 64-bit range raise :class:`OverflowError` instead of growing silently,
so that downstream numerics (which do use int64/float64) never see a value
they cannot represent.

Conjugacy is decided through a normal form:

* hyperbolic (``|tr| > 2``): a positive conjugate is found by Gauss reduction
  of the binary quadratic form ``c z^2 + (d - a) z - b`` whose roots are the
  fixed points; its factorisation into ``R = [[1,1],[0,1]]`` and
  ``L = [[1,0],[1,1]]`` is a cyclic word, and the lexicographically least
  rotation is the normal form;
* parabolic (``|tr| = 2``): ``M - I = k v w^T`` gives the invariant ``k``;
* elliptic (``|tr| < 2``): Lagrange reduction of the definite form.

Negative-trace matrices are handled through ``-M`` since ``-I`` is central.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple, Optional

import numpy as np

INT64_MAX = 2**63 - 1


@dataclass(frozen=True)
class Sl2Matrix:
    """Integer matrix ``[[a, b], [c, d]]`` with determinant one."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        for name in "abcd":
            val = getattr(self, name)
            if isinstance(val, (bool, np.bool_)) or not isinstance(val, (int, np.integer)):
                raise TypeError(f"entry {name}={val!r} is not an integer")
            val = int(val)
            object.__setattr__(self, name, val)
            if abs(val) > INT64_MAX:
                raise OverflowError(f"entry {name} exceeds the int64 range")
        if self.a * self.d - self.b * self.c != 1:
            raise ValueError(f"determinant of {self.to_list()} is not 1")

    @classmethod
    def from_list(cls, rows) -> Sl2Matrix:
        (a, b), (c, d) = rows
        return cls(int(a), int(b), int(c), int(d))

    def to_list(self) -> list[list[int]]:
        return [[self.a, self.b], [self.c, self.d]]

    def __matmul__(self, other: Sl2Matrix) -> Sl2Matrix:
        if not isinstance(other, Sl2Matrix):
            return NotImplemented
        return Sl2Matrix(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def __neg__(self) -> Sl2Matrix:
        return Sl2Matrix(-self.a, -self.b, -self.c, -self.d)

    def inverse(self) -> Sl2Matrix:
        return Sl2Matrix(self.d, -self.b, -self.c, self.a)

    def conjugate_by(self, p: Sl2Matrix) -> Sl2Matrix:
        """Return ``p @ self @ p^-1``."""
        return p @ self @ p.inverse()

    @property
    def trace(self) -> int:
        return self.a + self.d

    def is_identity(self) -> bool:
        return self == IDENTITY

    def __str__(self) -> str:
        return f"[[{self.a},{self.b}],[{self.c},{self.d}]]"


IDENTITY = Sl2Matrix(1, 0, 0, 1)
R = Sl2Matrix(1, 1, 0, 1)
L = Sl2Matrix(1, 0, 1, 1)
_LETTERS = {"R": R, "L": L}


def word_matrix(word: str) -> Sl2Matrix:
    out = IDENTITY
    for ch in word:
        out = out @ _LETTERS[ch]
    return out


# ----------------------------------------------------------------------------
# Monodromy of the T_{p,q,r} links


def _check_triple(p: int, q: int, r: int) -> None:
    for name, val in (("p", p), ("q", q), ("r", r)):
        if not isinstance(val, (int, np.integer)) or isinstance(val, bool):
            raise TypeError(f"{name} must be an integer")
        if val < 2:
            raise ValueError(f"{name}={val} must be >= 2")


def _factor(n: int) -> Sl2Matrix:
    return Sl2Matrix(n - 1, -1, 1, 0)


def monodromy_matrix(p: int, q: int, r: int) -> Sl2Matrix:
    """``A_{p,q,r}``: the r-factor times the q-factor times the p-factor."""
    _check_triple(p, q, r)
    return _factor(r) @ _factor(q) @ _factor(p)


class TraceCheck(NamedTuple):
    trace_computed: int
    trace_formula: Fraction
    equal: bool


def trace_identity_check(p: int, q: int, r: int) -> TraceCheck:
    """Compare the matrix trace with ``2 + pqr(1 - 1/p - 1/q - 1/r)``."""
    tr = monodromy_matrix(p, q, r).trace
    formula = 2 + p * q * r * (1 - Fraction(1, p) - Fraction(1, q) - Fraction(1, r))
    return TraceCheck(tr, formula, Fraction(tr) == formula)


class SingularityKind(enum.Enum):
    SIMPLE_ELLIPTIC = "simple-elliptic"
    CUSP = "cusp"
    OTHER = "other"


@dataclass(frozen=True)
class SingularityClass:
    kind: SingularityKind
    triple: tuple[int, int, int]
    reciprocal_sum: Fraction


def classify_singularity(p: int, q: int, r: int) -> SingularityClass:
    _check_triple(p, q, r)
    s = Fraction(1, p) + Fraction(1, q) + Fraction(1, r)
    if s == 1:
        kind = SingularityKind.SIMPLE_ELLIPTIC
    elif s < 1:
        kind = SingularityKind.CUSP
    else:
        kind = SingularityKind.OTHER
    return SingularityClass(kind, (p, q, r), s)


class ConjugacyKind(enum.Enum):
    HYPERBOLIC = "hyperbolic"
    UNIPOTENT = "unipotent"
    FINITE_ORDER = "finite-order"
    NEGATIVE_TRACE = "negative-trace"


@dataclass(frozen=True)
class ConjugacyType:
    kind: ConjugacyKind
    trace: int


def conjugacy_type(m: Sl2Matrix) -> ConjugacyType:
    t = m.trace
    if abs(t) > 2:
        kind = ConjugacyKind.HYPERBOLIC
    elif t == 2 and not m.is_identity():
        kind = ConjugacyKind.UNIPOTENT
    elif t == -2 and not (-m).is_identity():
        kind = ConjugacyKind.NEGATIVE_TRACE
    else:
        kind = ConjugacyKind.FINITE_ORDER
    return ConjugacyType(kind, t)


# ----------------------------------------------------------------------------
# Normal forms


def _translate(n: int) -> Sl2Matrix:
    return Sl2Matrix(1, n, 0, 1)


def _gauss_step(s: int) -> Sl2Matrix:
    # conjugation by this matrix sends the fixed points z to s - 1/z
    return Sl2Matrix(s, -1, 1, 0)


_S = _gauss_step(0)


def _positive_conjugate(m: Sl2Matrix) -> tuple[Sl2Matrix, Sl2Matrix]:
    """Return ``(P, P m P^-1)`` with the second matrix entrywise positive.

    Requires ``tr m >= 3``. Each step is one Gauss reduction move on the form
    ``(A, B, C) = (c, d - a, -b)``; reduced indefinite forms have ``AC < 0``,
    i.e. ``bc > 0``, which together with a positive trace forces all entries
    positive.
    """
    if m.trace < 3:
        raise ValueError("positive conjugate needs trace >= 3")
    disc = m.trace**2 - 4
    root = math.isqrt(disc)  # disc is never a square for trace >= 3
    p = IDENTITY
    cur = m
    for _ in range(10_000):
        if cur.b * cur.c > 0:
            if cur.b < 0:
                p = _S @ p
                cur = cur.conjugate_by(_S)
            return p, cur
        big_b = cur.d - cur.a
        big_c = -cur.b
        mod = 2 * abs(big_c)
        target = root - ((root + big_b) % mod)
        s = (-big_b - target) // (2 * big_c)
        step = _gauss_step(s)
        p = step @ p
        cur = cur.conjugate_by(step)
    raise RuntimeError(f"Gauss reduction did not terminate for {m}")


def _factor_positive(m: Sl2Matrix) -> str:
    """Unique factorisation of a nonnegative SL(2,Z) matrix into R and L."""
    word = []
    a, b, c, d = m.a, m.b, m.c, m.d
    while (a, b, c, d) != (1, 0, 0, 1):
        if a >= c and b >= d:
            word.append("R")
            a, b = a - c, b - d
        elif c >= a and d >= b:
            word.append("L")
            c, d = c - a, d - b
        else:
            raise ValueError(f"{m} is not a nonnegative matrix")
    return "".join(word)


def _least_rotation(word: str) -> int:
    rotations = [word[i:] + word[:i] for i in range(len(word))]
    return min(range(len(word)), key=lambda i: (rotations[i], i))


def rl_word(m: Sl2Matrix) -> str:
    """Cyclic R/L word of a hyperbolic matrix, as its least rotation.

    Negative-trace input is negated first. Two hyperbolic matrices of the
    same trace sign are conjugate iff their words agree.
    """
    if abs(m.trace) <= 2:
        raise ValueError(f"{m} is not hyperbolic")
    if m.trace < 0:
        m = -m
    _, pos = _positive_conjugate(m)
    word = _factor_positive(pos)
    i = _least_rotation(word)
    return word[i:] + word[:i]


def _hyperbolic_normal_form(m: Sl2Matrix) -> tuple[Sl2Matrix, Sl2Matrix]:
    p, pos = _positive_conjugate(m)
    word = _factor_positive(pos)
    i = _least_rotation(word)
    # pos = X Y with X the first i letters, and Y X = X^-1 pos X
    x = word_matrix(word[:i])
    q = x.inverse() @ p
    return word_matrix(word[i:] + word[:i]), q


def _ext_gcd(x: int, y: int) -> tuple[int, int, int]:
    if y == 0:
        return (abs(x), 1 if x >= 0 else -1, 0)
    g, s, t = _ext_gcd(y, x % y)
    return g, t, s - (x // y) * t


def parabolic_invariant(m: Sl2Matrix) -> int:
    """The ``k`` with ``m`` conjugate to ``[[1, k], [0, 1]]`` (trace 2, m != I)."""
    if m.trace != 2 or m.is_identity():
        raise ValueError(f"{m} is not unipotent")
    g = math.gcd(math.gcd(m.a - 1, m.b), m.c)
    sign = (1 if m.b > 0 else -1) if m.b != 0 else (-1 if m.c > 0 else 1)
    return sign * g


def _parabolic_normal_form(m: Sl2Matrix) -> tuple[Sl2Matrix, Sl2Matrix]:
    k = parabolic_invariant(m)
    # m - I = k [[-xy, x^2], [-y^2, xy]] with gcd(x, y) = 1
    x = math.isqrt(m.b // k)
    y = math.isqrt(-m.c // k)
    if x == 0:
        y = 1
    elif y != 0 and -(m.a - 1) // k < 0:
        y = -y
    g, s, t = _ext_gcd(x, y)
    assert g == 1
    # columns (x, y) and (-t, s): det = x s + y t = 1
    p = Sl2Matrix(x, -t, y, s)
    canonical = Sl2Matrix(1, k, 0, 1)
    q = p.inverse()
    assert m.conjugate_by(q) == canonical
    return canonical, q


def _elliptic_normal_form(m: Sl2Matrix) -> tuple[Sl2Matrix, Sl2Matrix]:
    q = IDENTITY
    cur = m
    for _ in range(10_000):
        big_a, big_b, big_c = cur.c, cur.d - cur.a, -cur.b
        if abs(big_b) > abs(big_a) or big_b == -abs(big_a):
            n0 = big_b // (2 * big_a)
            for n in (n0 - 1, n0, n0 + 1):
                nb = big_b - 2 * big_a * n
                if -abs(big_a) < nb <= abs(big_a):
                    break
            step = _translate(n)
        elif abs(big_a) > abs(big_c) or (abs(big_a) == abs(big_c) and big_b < 0):
            step = _S
        else:
            return cur, q
        q = step @ q
        cur = cur.conjugate_by(step)
    raise RuntimeError(f"Lagrange reduction did not terminate for {m}")


def normal_form(m: Sl2Matrix) -> tuple[Sl2Matrix, Sl2Matrix]:
    """Return ``(canonical, Q)`` with ``Q m Q^-1 == canonical``.

    Two matrices are conjugate in SL(2,Z) iff their canonical forms agree.
    """
    if m.trace < 0 and not (-m).is_identity():
        canon, q = normal_form(-m)
        return -canon, q
    t = m.trace
    if m.is_identity() or (-m).is_identity():
        return m, IDENTITY
    if t > 2:
        return _hyperbolic_normal_form(m)
    if t == 2:
        return _parabolic_normal_form(m)
    return _elliptic_normal_form(m)


def find_conjugator(m1: Sl2Matrix, m2: Sl2Matrix) -> Optional[Sl2Matrix]:
    """Some ``P`` with ``P m1 P^-1 == m2``, or ``None`` if they are not conjugate."""
    if m1.trace != m2.trace:
        return None
    c1, q1 = normal_form(m1)
    c2, q2 = normal_form(m2)
    if c1 != c2:
        return None
    p = q2.inverse() @ q1
    assert m1.conjugate_by(p) == m2
    return p


def are_conjugate(m1: Sl2Matrix, m2: Sl2Matrix) -> bool:
    return find_conjugator(m1, m2) is not None


def conjugate_to_inverse(m: Sl2Matrix) -> bool:
    return are_conjugate(m, m.inverse())


def brute_force_conjugator(m1: Sl2Matrix, m2: Sl2Matrix, bound: int) -> Optional[Sl2Matrix]:
    """Exhaustive search for ``P`` with entries in ``[-bound, bound]``.

    Independent of :func:`normal_form`; meant as a test oracle. Candidates are
    scanned in lexicographic order of ``(p, q, r, s)`` so the witness is
    deterministic.
    """
    if bound < 1:
        raise ValueError("bound must be >= 1")
    rng = np.arange(-bound, bound + 1, dtype=np.int64)
    p, q, r = np.meshgrid(rng, rng, rng, indexing="ij")
    p, q, r = p.ravel(), q.ravel(), r.ravel()
    cands = []
    # p != 0: s is forced by the determinant
    nz = p != 0
    num = 1 + q[nz] * r[nz]
    ok = num % p[nz] == 0
    pp, qq, rr = p[nz][ok], q[nz][ok], r[nz][ok]
    ss = num[ok] // pp
    keep = np.abs(ss) <= bound
    cands.append(np.stack([pp[keep], qq[keep], rr[keep], ss[keep]], axis=1))
    # p == 0: q r = -1 and s is free
    for qv, rv in ((-1, 1), (1, -1)):
        ss = rng
        cands.append(np.stack([np.zeros_like(ss), np.full_like(ss, qv), np.full_like(ss, rv), ss], axis=1))
    allc = np.concatenate(cands, axis=0)
    order = np.lexsort((allc[:, 3], allc[:, 2], allc[:, 1], allc[:, 0]))
    allc = allc[order]
    P = allc.reshape(-1, 2, 2)
    A1 = np.array(m1.to_list(), dtype=np.int64)
    A2 = np.array(m2.to_list(), dtype=np.int64)
    hit = np.all(P @ A1 == A2 @ P, axis=(1, 2))
    idx = np.flatnonzero(hit)
    if idx.size == 0:
        return None
    return Sl2Matrix(*(int(v) for v in allc[idx[0]]))


# ----------------------------------------------------------------------------
# Topological invariants


@dataclass(frozen=True)
class TopologicalInvariants:
    mu: int
    chi_fiber: int
    chi_glued: int
    euler_number: Optional[int]


def topological_invariants(p: int, q: int, r: int) -> TopologicalInvariants:
    """Milnor number, Euler characteristics, and the nil Euler number.

    The link is a closed 3-manifold (Euler characteristic 0), so gluing two
    fibers along it doubles the fiber's Euler characteristic.
    """
    cls = classify_singularity(p, q, r)
    mu = p + q + r - 1
    chi_fiber = 1 + mu
    euler = None
    if cls.kind is SingularityKind.SIMPLE_ELLIPTIC:
        euler = parabolic_invariant(monodromy_matrix(p, q, r))
    return TopologicalInvariants(mu, chi_fiber, 2 * chi_fiber, euler)
