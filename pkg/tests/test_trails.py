from fractions import Fraction

import numpy as np
import pytest

from circletrails.cf import RotationNumber, gauss_shift, parse_cf
from circletrails.lifts import Rotation
from circletrails.skew import even_trail_closed_form
from circletrails.trails import (addresses, ancestors, trail_direct, trail_equivalence_report,
                                 trail_via_skew)

GOLDEN = parse_cf("golden")


def random_rotation_pairs(count, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        ds = [int(d) for d in rng.integers(1, 21, 40)]
        yield RotationNumber.from_digits(ds), float(rng.random())


def test_golden_half_initial_value():
    tr = trail_direct(Rotation(GOLDEN), 0.0, 0.5, 15)
    assert tr.entries[0].alpha == 0.5
    assert len(tr) == 16 and not tr.truncated


def test_rho_component_is_gauss_shift():
    rho = parse_cf("[(3,1,4,1,5)]")
    tr = trail_direct(Rotation(rho), 0.0, 0.3, 10)
    for m, e in enumerate(tr.entries):
        assert abs(float(e.rho) - float(gauss_shift(rho, m))) < 1e-15


def test_orbit_point_trail_becomes_zero():
    tr = trail_direct(Rotation(GOLDEN), 0.0, orbit_index=1, n=10)
    alphas = [float(a) for a in tr.alphas()]
    assert alphas[-5:] == [0.0] * 5


def test_first_level_ancestor_is_the_point():
    # y inside I_1 = [f(x), x] needs no pullback at level 0
    anc = ancestors(Rotation(GOLDEN), 0.0, 0.8, 4)
    assert anc[0]["pullback"] == 0 and anc[0]["point"] == pytest.approx(0.8)


@pytest.mark.parametrize("y", [0.13, 0.5, 0.77, 0.9])
def test_rotation_ancestors_pull_back_by_rotation(y):
    theta = float(GOLDEN)
    f = Rotation(GOLDEN)
    for a in ancestors(f, 0.0, y, 12):
        expect = (y - a["pullback"] * theta) % 1.0
        d = (float(a["point"]) - expect + 0.5) % 1 - 0.5
        assert abs(d) < 1e-10
        assert abs((float(f.inverse_iterate(y, a["pullback"])) - float(a["point"]) + 0.5) % 1 - 0.5) < 1e-10


def test_ancestors_on_arnold(arnold_golden):
    f = arnold_golden
    for a in ancestors(f, 0.0, 0.41, 6):
        y = f.orbit(float(a["point"]), a["pullback"]).lift(a["pullback"])
        assert abs((y - 0.41 + 0.5) % 1 - 0.5) < 1e-10


def test_sign_convention_and_short_step():
    for rho, y in random_rotation_pairs(30, 5):
        tr = trail_direct(Rotation(rho), 0.0, y, 12)
        es = tr.entries
        for a, b in zip(es, es[1:]):
            assert (float(b.alpha) < 0) == (a.location == "short")
            if float(a.alpha) < 0:
                assert abs(float(b.alpha) + float(a.alpha)) < 1e-20


def test_addresses_match_trail_locations():
    rho, y = next(random_rotation_pairs(1, 9))
    tr = trail_direct(Rotation(rho), 0.0, y, 8)
    ad = addresses(Rotation(rho), 0.0, y, 8)
    for e, a in zip(tr.entries, ad):
        assert e.location == a.side and e.pullback == a.pullback
        if a.side == "long" and a.domain is not None and a.domain >= 0:
            assert a.domain < rho.digit(a.level + 1)


def test_float_rotation_is_exact_rational_arithmetic():
    tr = trail_direct(Rotation(0.6180339887), 0.0, 0.5, 6)
    assert isinstance(tr.entries[1].alpha, Fraction)


def test_skew_trail_examples():
    tr = trail_via_skew(GOLDEN, 0.0, 5)
    assert all(a == 0 for a in tr.alphas())
    start = trail_via_skew(parse_cf("[(3,7)]"), 0.42, 3)
    assert start.entries[0].alpha == 0.42
    ev = parse_cf("rule:4n-2")
    tr = trail_via_skew(ev, Fraction(1, 2), 20, prec=256)
    for n, a in enumerate(tr.alphas()):
        assert abs(float(a) - float(even_trail_closed_form(ev, n, 256))) < 1e-9


def test_oracle_equivalence_random_rotations():
    worst = 0.0
    for rho, y in random_rotation_pairs(40, 1):
        rep = trail_equivalence_report(Rotation(rho), 0.0, y, 15)
        assert rep.passed and rep.levels_compared == 16
        worst = max(worst, rep.max_deviation)
    assert worst < 1e-9


@pytest.mark.parametrize("text,y", [("golden", 0.5), ("[2;(2)]", 1 / 3)])
def test_oracle_named_cases(text, y):
    rep = trail_equivalence_report(Rotation(parse_cf(text)), 0.0, y, 15)
    assert rep.passed and rep.max_deviation < 1e-9


def test_oracle_float_rotation():
    rep = trail_equivalence_report(Rotation(0.6180339887), 0.0, 0.5, 15)
    assert rep.passed


def test_oracle_arnold_golden(arnold_golden):
    rep = trail_equivalence_report(arnold_golden, 0.0, 0.5, 6)
    assert rep.passed and rep.levels_compared >= 5
    # the Birkhoff estimate carries a real error bar
    assert all(r["direct_error"] > 0 for r in rep.rows)


def test_trail_to_dict():
    d = trail_direct(Rotation(GOLDEN), 0.0, 0.5, 4).to_dict()
    assert d["source"] == "direct" and len(d["levels"]) == 5
    assert {"level", "rho", "alpha", "atom", "location", "pullback"} <= set(d["levels"][0])


def test_bad_arguments():
    with pytest.raises(ValueError):
        trail_direct(Rotation(GOLDEN), 0.0, 0.5, 4, orbit_index=2)
    with pytest.raises(ValueError):
        trail_direct(Rotation(GOLDEN), 0.0, None, 4)
