import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import special_ortho_group

from gbverify.forms import ChartDomain, ChartForm, FormError, evaluate_form, random_points, scale, wedge
from gbverify.pfaffian import SkewFormMatrix, block_diag, conjugation_check, pfaffian
from gbverify.suites import pfaffian_suite, random_form


def skew(rng, n):
    a = rng.normal(size=(n, n))
    return a - a.T


def pf_matchings(a):
    """Oracle: signed sum over perfect matchings."""
    n = len(a)

    def rec(idx):
        if not idx:
            return 1.0
        i = idx[0]
        total = 0.0
        for k in range(1, len(idx)):
            j = idx[k]
            rest = idx[1:k] + idx[k + 1 :]
            total += (-1) ** (k - 1) * a[i][j] * rec(rest)
        return total

    return rec(tuple(range(n)))


def test_scalar_examples():
    assert pfaffian([[0, 5], [-5, 0]]) == 5
    bd = block_diag([[0, 2], [-2, 0]], [[0, 3], [-3, 0]])
    assert pfaffian(bd) == 6
    assert pfaffian(np.zeros((4, 4))) == 0


def test_four_by_four_closed_form():
    a = skew(np.random.default_rng(0), 4)
    expected = a[0, 1] * a[2, 3] - a[0, 2] * a[1, 3] + a[0, 3] * a[1, 2]
    assert pfaffian(a) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("n", [2, 4, 6, 8])
def test_against_matching_oracle(n):
    a = skew(np.random.default_rng(n), n)
    assert pfaffian(a) == pytest.approx(pf_matchings(a), rel=1e-12)


@pytest.mark.parametrize("n", [2, 4, 6, 8])
def test_square_is_determinant(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(5):
        a = skew(rng, n)
        det = np.linalg.det(a)
        assert abs(pfaffian(a) ** 2 - det) <= 1e-8 * abs(det)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_expansion_row_does_not_matter(q, seed):
    a = skew(np.random.default_rng(seed), 2 * q)
    ref = pfaffian(a)
    for row in range(2 * q):
        assert pfaffian(a, row=row) == pytest.approx(ref, rel=1e-10, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_conjugation_invariance(q, seed):
    rng = np.random.default_rng(seed)
    a = skew(rng, 2 * q)
    r = special_ortho_group.rvs(2 * q, random_state=rng) if q > 1 else _rot(rng.uniform(0, 2 * math.pi))
    assert conjugation_check(a, r) < 1e-8


def _rot(t):
    return np.array([[math.cos(t), math.sin(t)], [-math.sin(t), math.cos(t)]])


def test_conjugation_examples():
    a = skew(np.random.default_rng(1), 6)
    assert conjugation_check(a, np.eye(6)) == 0.0
    lam = 2.5
    for t in (0.0, 0.7, 3.0):
        assert conjugation_check([[0, lam], [-lam, 0]], _rot(t)) < 1e-15


def test_conjugation_rejects_non_special_orthogonal():
    a = skew(np.random.default_rng(1), 2)
    with pytest.raises(ValueError):
        conjugation_check(a, np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        conjugation_check(a, 2 * np.eye(2))


def test_orientation_reversal_flips_sign():
    a = skew(np.random.default_rng(2), 4)
    p = np.eye(4)[[1, 0, 2, 3]]
    assert pfaffian(p @ a @ p.T) == pytest.approx(-pfaffian(a), rel=1e-12)


def test_block_multiplicativity_scalar():
    rng = np.random.default_rng(5)
    for s1, s2 in itertools.product((2, 4), (2, 4, 6)):
        a, b = skew(rng, s1), skew(rng, s2)
        assert pfaffian(block_diag(a, b)) == pytest.approx(pfaffian(a) * pfaffian(b), rel=1e-12)


def test_real_errors():
    with pytest.raises(ValueError):
        pfaffian(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        pfaffian([[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        pfaffian(np.zeros((2, 3)))


@pytest.fixture
def r4():
    return ChartDomain("R4", ("x1", "x2", "x3", "x4"), [(0.2, 1.2)] * 4, True)


def _random_skew_forms(chart, rng):
    ent = [[ChartForm.zero(chart, 2) for _ in range(4)] for _ in range(4)]
    for i in range(4):
        for j in range(i + 1, 4):
            f = random_form(chart, 2, rng, depth=2)
            ent[i][j], ent[j][i] = f, scale(f, -1.0)
    return SkewFormMatrix(ent)


def test_form_matrix_validation(r4):
    f = ChartForm.differential(r4, "x1") ^ ChartForm.differential(r4, "x2")
    z = ChartForm.zero(r4, 2)
    with pytest.raises(FormError):
        SkewFormMatrix([[z, f], [f, z]])
    with pytest.raises(FormError):
        SkewFormMatrix([[z, f], [scale(f, -1.0), ChartForm.zero(r4, 4)]])
    one = ChartForm.differential(r4, "x1")
    with pytest.raises(FormError):
        SkewFormMatrix([[ChartForm.zero(r4, 1), one], [scale(one, -1.0), ChartForm.zero(r4, 1)]])
    with pytest.raises(FormError):
        pfaffian(SkewFormMatrix([[z]]))


def test_form_pfaffian_matches_pointwise_scalar(r4):
    # oracle: Pf = a12^a34 - a13^a24 + a14^a23 with the component formula
    # for the wedge of two 2-forms in four dimensions written out by hand
    rng = np.random.default_rng(9)
    m = _random_skew_forms(r4, rng)
    pf = pfaffian(m)
    assert pf.degree == 4
    pts = random_points(r4, 16, rng)
    vals = [[evaluate_form(m[i, j], pts) for j in range(4)] for i in range(4)]
    def w(a, b):
        return a[:, 0] * b[:, 5] - a[:, 1] * b[:, 4] + a[:, 2] * b[:, 3] + a[:, 3] * b[:, 2] - a[:, 4] * b[:, 1] + a[:, 5] * b[:, 0]

    expected = w(vals[0][1], vals[2][3]) - w(vals[0][2], vals[1][3]) + w(vals[0][3], vals[1][2])
    np.testing.assert_allclose(evaluate_form(pf, pts)[:, 0], expected, rtol=1e-10, atol=1e-12)


def test_form_expansion_order_and_blocks(r4):
    rng = np.random.default_rng(4)
    pts = random_points(r4, 32, rng)
    for _ in range(3):
        m = _random_skew_forms(r4, rng)
        a = evaluate_form(pfaffian(m), pts)
        for row in (1, 2, 3):
            np.testing.assert_allclose(evaluate_form(pfaffian(m, row=row), pts), a, rtol=1e-10, atol=1e-10)
        b1, b2 = m.minor((2, 3)), m.minor((0, 1))
        blk = pfaffian(block_diag(b1, b2))
        np.testing.assert_allclose(evaluate_form(blk, pts), evaluate_form(wedge(b1[0, 1], b2[0, 1]), pts), atol=1e-10)


def test_zero_form_matrix_pfaffian(r4):
    z = ChartForm.zero(r4, 2)
    pf = pfaffian(SkewFormMatrix([[z] * 4 for _ in range(4)]))
    assert pf.degree == 4 and pf.is_zero()


def test_pfaffian_suite_passes():
    checks = pfaffian_suite(seed=3, trials=5)
    assert all(c.passed for c in checks), [c for c in checks if not c.passed]
