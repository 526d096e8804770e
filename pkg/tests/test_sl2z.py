from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foliation_forge import sl2z
from foliation_forge.sl2z import IDENTITY, L, R, Sl2Matrix


def _numpy_monodromy(p, q, r):
    """Independent oracle: plain int64 product of the three factors."""
    f = lambda n: np.array([[n - 1, -1], [1, 0]], dtype=np.int64)
    return (f(r) @ f(q) @ f(p)).tolist()


words = st.text(alphabet="RL", min_size=1, max_size=10)
small_sl2 = st.lists(st.sampled_from("RLrl"), min_size=0, max_size=8).map(
    lambda seq: sl2z.word_matrix("".join(c.upper() for c in seq if c.isupper()))
    @ _inv_word("".join(c.upper() for c in seq if c.islower()))
)


def _inv_word(word):
    return sl2z.word_matrix(word).inverse()


# --- known values -----------------------------------------------------------


def test_monodromy_known_values():
    assert sl2z.monodromy_matrix(2, 3, 7).to_list() == [[5, -11], [1, -2]]
    assert sl2z.monodromy_matrix(4, 4, 4).to_list() == [[21, -8], [8, -3]]


@pytest.mark.parametrize("triple", [(2, 3, 7), (3, 3, 3), (2, 4, 4), (2, 3, 6), (5, 6, 9), (4, 4, 4)])
def test_monodromy_matches_numpy_product(triple):
    assert sl2z.monodromy_matrix(*triple).to_list() == _numpy_monodromy(*triple)


def test_trace_identity_on_all_small_triples():
    for p in range(2, 13):
        for q in range(p, 13):
            for r in range(q, 13):
                tc = sl2z.trace_identity_check(p, q, r)
                assert tc.equal, (p, q, r)
                assert tc.trace_computed == int(np.trace(_numpy_monodromy(p, q, r)))


@pytest.mark.parametrize(
    "triple,kind",
    [
        ((3, 3, 3), "simple-elliptic"),
        ((2, 4, 4), "simple-elliptic"),
        ((2, 3, 6), "simple-elliptic"),
        ((2, 3, 7), "cusp"),
        ((4, 4, 4), "cusp"),
        ((2, 3, 5), "other"),
        ((2, 2, 9), "other"),
    ],
)
def test_classification(triple, kind):
    cls = sl2z.classify_singularity(*triple)
    assert cls.kind.value == kind
    assert cls.reciprocal_sum == sum(Fraction(1, n) for n in triple)


@pytest.mark.parametrize("triple,ell", [((3, 3, 3), 3), ((2, 4, 4), 2), ((2, 3, 6), 1)])
def test_elliptic_triples_conjugate_to_unipotent(triple, ell):
    m = sl2z.monodromy_matrix(*triple)
    target = Sl2Matrix(1, 0, ell, 1)
    p = sl2z.find_conjugator(m, target)
    assert p is not None and m.conjugate_by(p) == target
    assert sl2z.brute_force_conjugator(m, target, 10) is not None


@pytest.mark.parametrize("triple", [(2, 3, 7), (4, 4, 4)])
def test_conjugate_to_inverse_cross_checked(triple):
    m = sl2z.monodromy_matrix(*triple)
    assert sl2z.conjugate_to_inverse(m)
    word = sl2z.rl_word(m)
    assert word[::-1] in {word[i:] + word[:i] for i in range(len(word))}
    p = sl2z.brute_force_conjugator(m, m.inverse(), 60)
    assert p is not None and m.conjugate_by(p) == m.inverse()


def test_rl_words_of_cusps_237_444():
    assert sl2z.rl_word(sl2z.monodromy_matrix(2, 3, 7)) == "LR"
    assert sl2z.rl_word(sl2z.monodromy_matrix(4, 4, 4)) == "LRLRLR"


def test_cusp_not_conjugate_to_inverse():
    m = sl2z.monodromy_matrix(2, 3, 8)
    assert not sl2z.conjugate_to_inverse(m)
    assert sl2z.brute_force_conjugator(m, m.inverse(), 30) is None


@pytest.mark.parametrize("triple", [(2, 3, 7), (4, 4, 4)])
def test_topological_invariants_known_values(triple):
    inv = sl2z.topological_invariants(*triple)
    assert (inv.mu, inv.chi_fiber, inv.chi_glued) == (11, 12, 24)
    assert inv.euler_number is None


def test_nil_euler_number_is_minus_ell():
    assert sl2z.topological_invariants(3, 3, 3).euler_number == -3


# --- structural / error behaviour ---------------------------------------------


def test_bad_determinant_and_types():
    with pytest.raises(ValueError):
        Sl2Matrix(2, 0, 0, 1)
    with pytest.raises(TypeError):
        Sl2Matrix(1.0, 0, 0, 1)
    with pytest.raises(OverflowError):
        Sl2Matrix(2**63, 0, 0, 1)


def test_product_overflow_is_reported():
    big = sl2z.word_matrix("R" * 40)
    with pytest.raises(OverflowError):
        big @ Sl2Matrix(1, 0, 2**60, 1) @ big


@pytest.mark.parametrize("bad", [(1, 3, 7), (2, 0, 5), (-2, 3, 7)])
def test_triple_validation(bad):
    with pytest.raises(ValueError):
        sl2z.monodromy_matrix(*bad)


def test_parabolic_invariant_rejects_non_unipotent():
    with pytest.raises(ValueError):
        sl2z.parabolic_invariant(sl2z.monodromy_matrix(2, 3, 7))
    with pytest.raises(ValueError):
        sl2z.parabolic_invariant(IDENTITY)


def test_brute_force_bound_validation():
    with pytest.raises(ValueError):
        sl2z.brute_force_conjugator(R, R, 0)


def test_rl_word_rejects_elliptic():
    with pytest.raises(ValueError):
        sl2z.rl_word(Sl2Matrix(0, -1, 1, 0))


def test_finite_order_classes():
    s = Sl2Matrix(0, -1, 1, 0)
    assert sl2z.conjugacy_type(s).kind is sl2z.ConjugacyKind.FINITE_ORDER
    # order-4 elements: S and S^-1 are not conjugate in SL(2,Z)
    assert not sl2z.are_conjugate(s, s.inverse())
    u = Sl2Matrix(0, -1, 1, 1)  # order 6
    assert sl2z.are_conjugate(u, u.conjugate_by(sl2z.word_matrix("RRL")))
    assert sl2z.brute_force_conjugator(u, u.conjugate_by(sl2z.word_matrix("RRL")), 5) is not None


# --- properties ---------------------------------------------------------------


@settings(max_examples=60, deadline=None)
@given(words, small_sl2)
def test_hyperbolic_conjugation_recovered(word, p):
    m = sl2z.word_matrix(word + "RL")  # contains both letters, hence hyperbolic
    target = m.conjugate_by(p)
    found = sl2z.find_conjugator(m, target)
    assert found is not None
    assert m.conjugate_by(found) == target
    assert sl2z.normal_form(m)[0] == sl2z.normal_form(target)[0]
    assert sl2z.rl_word(m) == sl2z.rl_word(target)


@settings(max_examples=60, deadline=None)
@given(st.integers(-12, 12).filter(lambda k: k != 0), small_sl2)
def test_unipotent_invariant_is_conjugation_invariant(k, p):
    m = Sl2Matrix(1, k, 0, 1).conjugate_by(p)
    assert sl2z.parabolic_invariant(m) == k
    canon, q = sl2z.normal_form(m)
    assert canon == Sl2Matrix(1, k, 0, 1)
    assert m.conjugate_by(q) == canon


@settings(max_examples=40, deadline=None)
@given(words, words)
def test_rl_word_separates_classes(w1, w2):
    m1, m2 = sl2z.word_matrix(w1 + "RL"), sl2z.word_matrix(w2 + "RL")
    rotations = {sl2z.rl_word(m1)[i:] + sl2z.rl_word(m1)[:i] for i in range(len(sl2z.rl_word(m1)))}
    assert sl2z.are_conjugate(m1, m2) == (sl2z.rl_word(m2) in rotations)


@settings(max_examples=30, deadline=None)
@given(small_sl2, small_sl2)
def test_find_conjugator_agrees_with_brute_force(m, p):
    if sl2z.conjugacy_type(m).kind is not sl2z.ConjugacyKind.HYPERBOLIC:
        m = m @ R @ L
    target = m.conjugate_by(p)
    if max(abs(v) for row in target.to_list() for v in row) > 40:
        return
    brute = sl2z.brute_force_conjugator(m, target, 8)
    fast = sl2z.find_conjugator(m, target)
    assert fast is not None
    if brute is not None:
        assert m.conjugate_by(brute) == target


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 30), st.integers(2, 30), st.integers(2, 30))
def test_trace_identity_property(p, q, r):
    assert sl2z.trace_identity_check(p, q, r).equal
