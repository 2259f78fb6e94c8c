import math

import mpmath as mp
import pytest
from hypothesis import given, settings, strategies as st

from cirbubble import specfun
from cirbubble.exceptions import DomainError, EvaluationError

mp.mp.dps = 40

GRID = [(a, b, x) for a in (0.1, 0.5, 1.0, 2.0) for b in (1.0, 1.5, 4.5, 20.0) for x in (0.01, 1.0, 7.5, 40.0)]


@pytest.mark.parametrize("a,b,x", GRID)
def test_kummer_m_matches_mpmath(a, b, x):
    assert specfun.kummer_m(a, b, x) == pytest.approx(float(mp.hyp1f1(a, b, x)), rel=1e-13)


@pytest.mark.parametrize("a,b,x", GRID)
def test_tricomi_u_matches_mpmath(a, b, x):
    assert specfun.tricomi_u(a, b, x) == pytest.approx(float(mp.hyperu(a, b, x)), rel=1e-11)


@pytest.mark.parametrize("a,b,x", [(0.1, 1.0, 0.5), (1.0, 4.5, 12.0), (0.5, 80.0, 60.0)])
def test_derivatives_match_mpmath(a, b, x):
    assert specfun.kummer_m_prime(a, b, x) == pytest.approx(float(mp.diff(lambda t: mp.hyp1f1(a, b, t), x)), rel=1e-11)
    assert specfun.kummer_m_second(a, b, x) == pytest.approx(float(mp.diff(lambda t: mp.hyp1f1(a, b, t), x, 2)), rel=1e-10)
    assert specfun.tricomi_u_prime(a, b, x) == pytest.approx(float(mp.diff(lambda t: mp.hyperu(a, b, t), x)), rel=1e-10)
    assert specfun.tricomi_u_second(a, b, x) == pytest.approx(float(mp.diff(lambda t: mp.hyperu(a, b, t), x, 2)), rel=1e-9)


def test_integer_b_for_u():
    # integer b is where series-based U implementations break down
    for b in (1.0, 2.0, 3.0):
        assert specfun.tricomi_u(0.5, b, 2.0) == pytest.approx(float(mp.hyperu(0.5, b, 2.0)), rel=1e-11)


def test_m_at_zero_is_one():
    assert specfun.kummer_m(0.3, 2.0, 0.0) == 1.0


def test_identities():
    for a in (0.2, 1.0, 3.5):
        for x in (0.1, 2.0, 30.0):
            assert specfun.kummer_m(max(a, 1.0), max(a, 1.0), x) == pytest.approx(math.exp(x), rel=1e-12)
            assert specfun.tricomi_u(a, a + 1, x) == pytest.approx(x ** -a, rel=1e-12)


@pytest.mark.parametrize("a,b,x", [(0.1, 1.5, 0.5), (1.0, 4.5, 3.0), (0.1, 40.0, 60.0), (2.0, 2.0, 25.0)])
def test_continued_fraction_ratio(a, b, x):
    expected = specfun.kummer_m(a, b, x) / specfun.kummer_m(a + 1, b + 1, x)
    assert specfun.m_ratio_cf(a, b, x) == pytest.approx(expected, rel=1e-10)


def test_continued_fraction_depth_exhausted():
    with pytest.raises(EvaluationError):
        specfun.m_ratio_cf(1.0, 2.0, 50.0, depth=3)


@pytest.mark.parametrize("args", [(0.0, 1.0, 1.0), (-1.0, 1.0, 1.0), (1.0, 0.5, 1.0), (1.0, 1.0, -0.1),
                                  (math.nan, 1.0, 1.0), (1.0, math.inf, 1.0)])
def test_domain_errors(args):
    with pytest.raises(DomainError):
        specfun.kummer_m(*args)
    with pytest.raises(DomainError):
        specfun.tricomi_u(*args)


def test_u_at_zero_diverges():
    with pytest.raises(DomainError):
        specfun.tricomi_u(1.0, 2.0, 0.0)


def test_m_overflow_raises():
    with pytest.raises(EvaluationError):
        specfun.kummer_m(1.0, 1.0, 800.0)


def test_u_overflow_raises():
    with pytest.raises(EvaluationError):
        specfun.tricomi_u(5.0, 200.0, 0.1)


def test_hypergeom_args_validates():
    assert specfun.HypergeomArgs(1.0, 2.0, 3.0).x == 3.0
    with pytest.raises(DomainError):
        specfun.HypergeomArgs(1.0, 0.0, 3.0)


def test_residual_kind_checked():
    with pytest.raises(ValueError):
        specfun.kummer_residual("Q", 1.0, 2.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(0.05, 3.0), b=st.floats(1.0, 50.0), x=st.floats(0.01, 60.0), kind=st.sampled_from("MU"))
def test_kummer_equation_property(a, b, x, kind):
    fns = {"M": (specfun.kummer_m, specfun.kummer_m_prime, specfun.kummer_m_second),
           "U": (specfun.tricomi_u, specfun.tricomi_u_prime, specfun.tricomi_u_second)}[kind]
    f, f1, f2 = (g(a, b, x) for g in fns)
    scale = abs(x * f2) + abs((b - x) * f1) + abs(a * f)
    assert abs(specfun.kummer_residual(kind, a, b, x)) <= 1e-10 * scale


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.05, 3.0), b=st.floats(1.0, 30.0), x=st.floats(0.01, 40.0))
def test_m_ratio_property(a, b, x):
    expected = specfun.kummer_m(a, b, x) / specfun.kummer_m(a + 1, b + 1, x)
    assert specfun.m_ratio_cf(a, b, x) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("a,b,x", [(0.5, 1.0, 200.0), (1.0, 4.5, 1000.0), (0.1, 20.0, 60.0)])
def test_continued_fraction_far_beyond_b(a, b, x):
    # x >> b: a naive forward evaluation settles on the wrong limit here
    expected = mp.hyp1f1(a, b, x) / mp.hyp1f1(a + 1, b + 1, x)
    assert specfun.m_ratio_cf(a, b, x) == pytest.approx(float(expected), rel=1e-12)


def test_continued_fraction_zero_denominator():
    # b + 1 - x vanishes at the only partial fraction
    with pytest.raises(EvaluationError):
        specfun.m_ratio_cf(1.0, 1.0, 2.0, depth=1)


def test_continued_fraction_at_zero():
    assert specfun.m_ratio_cf(1.0, 1.0, 0.0) == 1.0


def test_spec_examples():
    assert specfun.kummer_m(1.0, 1.0, 2.0) == pytest.approx(math.exp(2.0), rel=1e-14)
    assert specfun.tricomi_u(2.0, 3.0, 5.0) == pytest.approx(0.04, rel=1e-13)
    assert specfun.tricomi_u_prime(2.0, 3.0, 5.0) == pytest.approx(-0.016, rel=1e-13)
    assert specfun.tricomi_u_prime(1.0, 2.0, 10.0) == pytest.approx(-0.01, rel=1e-13)
    assert specfun.kummer_m_prime(1.0, 1.0, 0.0) == 1.0
    assert specfun.kummer_m_prime(0.1, 1.5, 0.0) == pytest.approx(0.1 / 1.5)
    assert specfun.tricomi_u(0.2, 2.0, 100.0) == pytest.approx(100.0 ** -0.2, rel=1e-2)
    h = 1e-6
    fd = (specfun.kummer_m(0.1, 1.5, 2 + h) - specfun.kummer_m(0.1, 1.5, 2 - h)) / (2 * h)
    assert specfun.kummer_m_prime(0.1, 1.5, 2.0) == pytest.approx(fd, rel=1e-6)
    fd = (specfun.tricomi_u(0.1, 1.5, 1 + h) - specfun.tricomi_u(0.1, 1.5, 1 - h)) / (2 * h)
    assert specfun.tricomi_u_prime(0.1, 1.5, 1.0) == pytest.approx(fd, rel=1e-6)


def test_m_series_against_partial_sums():
    with mp.workdps(50):
        a, b, x = mp.mpf("0.1"), mp.mpf(15), mp.mpf(10)
        total, term, n = mp.mpf(1), mp.mpf(1), 0
        while abs(term) > mp.mpf(10) ** -45 * total:
            term *= (a + n) * x / ((b + n) * (n + 1))
            total += term
            n += 1
    assert specfun.kummer_m(0.1, 15.0, 10.0) == pytest.approx(float(total), rel=1e-13)


def test_u_against_quadrature_oracle():
    with mp.workdps(30):
        a, b, x = mp.mpf("0.1"), mp.mpf("1.5"), mp.mpf("0.5")
        # t = s**(1/a) removes the t**(a-1) singularity at the origin
        g = lambda s: mp.e ** (-x * s ** (1 / a)) * (1 + s ** (1 / a)) ** (b - a - 1)
        val = mp.quad(g, [0, 1, mp.inf]) / (a * mp.gamma(a))
    assert specfun.tricomi_u(0.1, 1.5, 0.5) == pytest.approx(float(val), rel=1e-11)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.05, 3.0), b=st.floats(1.0, 30.0), frac=st.floats(0.0, 1.0))
def test_cf_lower_bound_below_b(a, b, frac):
    x = frac * b
    assert specfun.m_ratio_cf(a, b, x) >= (b - x) / b * (1 - 1e-14)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.05, 2.0), b=st.floats(1.0, 20.0), x=st.floats(0.1, 30.0), dx=st.floats(0.01, 2.0))
def test_monotone_and_convex(a, b, x, dx):
    assert specfun.kummer_m(a, b, x + dx) > specfun.kummer_m(a, b, x)
    assert specfun.tricomi_u(a, b, x + dx) < specfun.tricomi_u(a, b, x)
    assert specfun.kummer_m_second(a, b, x) > 0
    assert specfun.tricomi_u_second(a, b, x) > 0
