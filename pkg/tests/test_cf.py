import math
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from circletrails.cf import (RotationNumber, cf_from_real, cf_value, convergents, gauss_measure,
                             gauss_shift, is_even_type, mu_In, parse_cf, return_times)
from circletrails.errors import DigitsExhausted

SQRT2M1 = math.sqrt(2) - 1
GOLDEN = (math.sqrt(5) - 1) / 2

digit_lists = st.lists(st.integers(1, 20), min_size=3, max_size=30)


def exact_value(ds):
    v = Fraction(0)
    for d in reversed(ds):
        v = 1 / (d + v)
    return v


def test_parse_named_and_rules():
    assert parse_cf("golden").digits(12) == [1] * 12
    assert parse_cf("rule:4n-2").digits(5) == [2, 6, 10, 14, 18]
    assert parse_cf("[2;(2)]").digits(10) == [2] * 10
    assert parse_cf("[3,1,2]").digits(3) == [3, 1, 2]
    assert parse_cf("[(2,10)]").digits(5) == [2, 10, 2, 10, 2]
    assert parse_cf("[8;(1)]").digits(4) == [8, 1, 1, 1]


@pytest.mark.parametrize("text", ["", "[0,1]", "[1,-2]", "nonsense", "[;()]"])
def test_parse_rejects(text):
    with pytest.raises(ValueError):
        parse_cf(text)


def test_finite_stream_exhausts():
    rho = parse_cf("[3,1,2]")
    assert rho.available() == 3
    with pytest.raises(DigitsExhausted):
        rho.digit(3)


def test_gauss_shift_examples():
    assert gauss_shift(parse_cf("golden")).digits(6) == [1] * 6
    assert gauss_shift(parse_cf("rule:4n-2")).digits(3) == [6, 10, 14]
    assert gauss_shift(parse_cf("[3,1,2]")).digits(2) == [1, 2]


@given(digit_lists, st.integers(0, 2))
def test_shift_is_exact(ds, k):
    rho = RotationNumber.from_digits(ds)
    assert gauss_shift(rho, k).digits(len(ds) - k) == ds[k:]
    assert gauss_shift(rho, k).prepend(*ds[:k]).digits(len(ds)) == ds


def test_return_times():
    assert return_times(parse_cf("golden"), 4) == [1, 1, 2, 3, 5]
    assert return_times(parse_cf("[2;(2)]"), 3) == [1, 2, 5, 12]
    assert convergents(parse_cf("[7,3]"), 1)[1] == (1, 7)


def test_values():
    g = cf_value(parse_cf("golden"), depth=20)
    assert abs(float(g.value) - GOLDEN) < 1e-8 and g.error < 1e-8
    s = cf_value(parse_cf("[2;(2)]"), depth=20)
    assert abs(float(s.value) - SQRT2M1) < 1e-8 and s.error < 1e-8
    one = cf_value(parse_cf("[5;(3)]"), depth=1)
    assert float(one.value) == 0.2
    assert abs(float(one.error) - 1 / (5 * 16)) < 1e-12
    e = cf_value(parse_cf("golden"), prec=200)
    with mpmath.workprec(260):
        assert e.contains(mpmath.sqrt(5) / 2 - mpmath.mpf(1) / 2)


@given(digit_lists)
def test_convergents_alternate_and_bound(ds):
    rho = RotationNumber.from_digits(ds)
    v = exact_value(ds)
    cv = convergents(rho, len(ds) - 1)
    for n in range(1, len(cv) - 1):
        p, q = cv[n]
        q_next = cv[n + 1][1]
        d = v - Fraction(p, q)
        assert (d > 0) == (n % 2 == 0)
        assert abs(d) < Fraction(1, q * q_next)


@given(digit_lists)
def test_value_enclosure(ds):
    e = cf_value(RotationNumber.from_digits(ds), prec=100)
    with mpmath.workprec(200):
        v = exact_value(ds)
        assert e.contains(mpmath.mpf(v.numerator) / v.denominator)


def test_cf_from_real():
    half = cf_from_real(0.5, 1e-12)
    assert half.digits == (2,) and half.breakpoint
    g = cf_from_real(0.6180339887, 1e-9)
    assert len(g) >= 7 and set(g.digits[:7]) == {1}
    s = cf_from_real(0.4142135624, 1e-9)
    assert len(s) >= 7 and set(s.digits[:7]) == {2}


@given(digit_lists, st.integers(2, 20))
def test_cf_from_real_recovers_digits(ds, last):
    # a final digit >= 2 makes the expansion of the rational unique
    ds = ds + [last]
    assert list(cf_from_real(exact_value(ds), Fraction(0)).digits) == ds


def test_mu_In_examples():
    g = parse_cf("golden")
    assert abs(float(mu_In(g, 2).value) - GOLDEN ** 3) < 1e-15
    assert float(mu_In(g, 0).value) == pytest.approx(GOLDEN, abs=1e-15)
    assert abs(float(mu_In(parse_cf("[2;(2)]"), 1).value) - SQRT2M1 ** 2) < 1e-15
    assert abs(SQRT2M1 ** 2 - 0.1715729) < 1e-7


@given(digit_lists)
@settings(max_examples=50)
def test_mu_In_recursion_and_distance(ds):
    rho = RotationNumber.from_digits(ds + [1] * 4)
    cv = convergents(rho, len(ds))
    v = exact_value(ds + [1] * 4)
    with mpmath.workprec(160):
        for n in range(len(ds) - 2):
            a, b = mu_In(rho, n), mu_In(rho, n + 1)
            g = cf_value(gauss_shift(rho, n + 1))
            assert abs(b.value - g.value * a.value) <= b.error + a.error + g.error
            p, q = cv[n]
            dist = abs(q * v - p)
            assert abs(a.value - mpmath.mpf(dist.numerator) / dist.denominator) <= a.error


def test_gauss_measure():
    assert gauss_measure(0, 1) == pytest.approx(1.0, abs=1e-15)
    assert gauss_measure(0, 0.5) == pytest.approx(0.5849625007, abs=1e-9)
    assert gauss_measure(0.5, 1) == pytest.approx(1 - math.log(1.5) / math.log(2), abs=1e-15)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_gauss_measure_additive(a, b, c):
    a, b, c = sorted((a, b, c))
    assert gauss_measure(a, b) + gauss_measure(b, c) == pytest.approx(gauss_measure(a, c), abs=1e-14)


def test_even_type():
    v = is_even_type(parse_cf("rule:4n-2"), 50)
    assert v.even and v.grows
    g = is_even_type(parse_cf("golden"), 5)
    assert not g.even and g.first_odd_index == 0
    s = is_even_type(parse_cf("[2;(2)]"), 50)
    assert s.even and not s.grows
