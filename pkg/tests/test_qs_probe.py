import math

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from circletrails.cf import convergents, parse_cf
from circletrails.dynamics import tune_to_cylinder
from circletrails.errors import RotationMismatch
from circletrails.lifts import Arnold, Rotation, make_arnold, square_map
from circletrails.qs_probe import (CrossRatioFrame, alternating_rho, critical_spots, crd,
                                   cross_ratio, cross_ratio_of_lengths, mobius, qs_blowup_scan,
                                   scenario_b, yoccoz_check, yoccoz_profile)

GOLDEN = parse_cf("golden")


def test_cross_ratio_examples():
    assert cross_ratio_of_lengths(1, 1, 1) == 3
    assert cross_ratio(CrossRatioFrame.from_lengths(1, 1, 1, start=0.4)) == pytest.approx(3)
    small = [cross_ratio_of_lengths(1, m, 1) for m in (1e-2, 1e-4, 1e-6)]
    assert small[0] > small[1] > small[2] and small[2] < 1e-5
    with pytest.raises(ValueError):
        cross_ratio_of_lengths(1, 0, 1)
    with pytest.raises(ValueError):
        CrossRatioFrame(0, 0.5, 0.4, 1)


def test_mobius_invariance():
    rng = np.random.default_rng(0)
    for _ in range(100):
        L, M, R = rng.uniform(0.01, 1, 3)
        fr = CrossRatioFrame.from_lengths(L, M, R, start=float(rng.uniform(0, 1)))
        # pole kept to the left of the frame so the map is increasing on it
        a, b, c = rng.uniform(0.5, 2), rng.uniform(-1, 1), rng.uniform(0, 0.3)
        F = mobius(a, b, c, 1 + c * 3 + a * 0)
        if a * (1 + 3 * c) - b * c <= 0:
            continue
        assert cross_ratio(fr.mapped(F)) == pytest.approx(cross_ratio(fr), rel=1e-10)
    with pytest.raises(ValueError):
        mobius(1, 0, 0, -1)


@pytest.mark.parametrize("K", [0.5, 0.9])
def test_chain_rule(K):
    f = Arnold(0.6180339887, K)
    rho = parse_cf("golden")
    cv = convergents(rho, 8)
    for n in range(1, 7):
        j = cv[n + 1][1]
        fr = CrossRatioFrame.from_lengths(0.01, 0.005, 0.02, start=0.1 * n)
        r = crd(f, fr, j)
        assert len(r.factors) == j
        assert r.direct == pytest.approx(r.factorwise, rel=1e-9)


def test_rotation_preserves_cross_ratio():
    fr = CrossRatioFrame.from_lengths(0.1, 0.2, 0.3, start=0.05)
    assert crd(Rotation(GOLDEN), fr, 13).direct == pytest.approx(1, abs=1e-12)


@given(st.floats(0.01, 0.3), st.floats(0.01, 0.3), st.floats(0.01, 0.3), st.floats(0, 1),
       st.integers(1, 5))
@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.filter_too_much])
def test_negative_schwarzian_expands_cross_ratio(L, M, R, s, j):
    # the critical sine map has Sf <= 0 everywhere; for K < 1 it turns positive near cos = 1.
    # Expansion needs f^j to be a diffeomorphism on T, so T and its images avoid the critical point.
    f = Arnold(0.3, 1.0)
    fr = CrossRatioFrame.from_lengths(L, M, R, start=s)
    pts = fr.points()
    for _ in range(j):
        assume(np.floor(pts[0]) == np.floor(pts[-1]) and pts[0] % 1.0 > 1e-3)
        pts = np.asarray(f(pts))
    assert crd(f, fr, j).direct >= 1 - 1e-9


def test_no_critical_spots_for_rotations():
    assert critical_spots(Rotation(GOLDEN), 0.0, 4) == []


def test_no_critical_spot_at_the_base_point(arnold_golden):
    # the only critical point sits at x itself
    assert critical_spots(arnold_golden, 0.0, 4, GOLDEN) == []


def test_critical_spots_regular_point(arnold_golden):
    found = []
    for n in range(2, 7):
        found += critical_spots(arnold_golden, 0.3, n, GOLDEN)
    assert found
    for s in found:
        assert s.critical_point == 0.0 and 0.02 < s.ratio < 1


def test_bicritical_spots():
    rho = parse_cf("[(3,2)]")
    fam = lambda t: square_map(make_arnold(t, 1.0))
    res = tune_to_cylinder(fam, rho, 10, 0.0, 0.5, x0=0.0)
    g = fam(res.param)
    for n in range(1, 6):
        spots = critical_spots(g, 0.37, n, rho)
        assert len(spots) <= 2
        assert all(0 < s.ratio < 1 for s in spots)


def test_yoccoz_rotation_profile_is_flat():
    rho = parse_cf("[(3,20)]")
    p = yoccoz_profile(Rotation(rho), 0.0, 0, rho)
    assert p.length == 20
    assert np.allclose(p.lengths, p.lengths[0], rtol=1e-9)


def test_yoccoz_check_parabolic():
    rho = parse_cf("[(3,20)]")
    # level n reads orbit order up to q_{n+2}, hence depth n + 4
    res = tune_to_cylinder(lambda t: make_arnold(t, 1.0), rho, 8, 0.0, 1.0, x0=0.0)
    f = make_arnold(res.param, 1.0)
    chk = yoccoz_check(f, 0.0, [2, 4], rho)
    assert chk.passed and chk.stability <= 4
    for p in chk.profiles:
        assert p.length == 20
        # the middle domains are smaller than both end ones
        assert p.lengths[7] < min(p.lengths[0], p.lengths[-1]) / 3
    assert chk.to_dict()["passed"]


def test_yoccoz_rejects_wrong_combinatorics():
    with pytest.raises(RotationMismatch):
        yoccoz_profile(Rotation(GOLDEN), 0.0, 1, parse_cf("[(3,20)]"))


@pytest.fixture(scope="module")
def scenario_small():
    return scenario_b(alternating_rho(10), 8)


def test_scan_identical_maps(scenario_small):
    f, rho = scenario_small.f, scenario_small.rho
    scan = qs_blowup_scan(f, 0.0, f, 0.0, [0, 1, 2, 3, 4], y=0.37, rho=rho)
    assert scan.rows
    assert all(r.crd == pytest.approx(1, abs=1e-12) for r in scan.rows)


def test_scan_rotations():
    rho = alternating_rho(6)
    f = Rotation(rho)
    scan = qs_blowup_scan(f, 0.0, f, 0.25, [0, 1, 2, 3], y=0.61, rho=rho)
    assert all(r.crd == pytest.approx(1, abs=1e-9) for r in scan.rows)
    assert scan.row(99) is None
    with pytest.raises(ValueError):
        qs_blowup_scan(f, 0.0, f, 0.0, [0], rho=rho)


def test_scenario_b_setup(scenario_small):
    sb = scenario_small
    assert sb.f.critical_points == [0.0] or list(sb.f.critical_points) == [0.0]
    assert abs(float(sb.g.base(sb.w)) % 1.0) < 1e-12 or abs(float(sb.g.base(sb.w)) % 1.0 - 1) < 1e-12
    assert sb.describe()["rho"] == str(sb.rho)


def test_scenario_b_scan_blows_up(scenario_small):
    sb = scenario_small
    scan = qs_blowup_scan(sb.f, sb.x, sb.g, sb.z, [0, 1, 2, 3, 4], w=sb.w, rho=sb.rho)
    rows = scan.counted()
    assert len(rows) >= 2
    for r in rows:
        assert r.a_next == 10 and r.crd > 2
        # crd grows like a_{n+1}^2, so the normalized value stays in a narrow band
        assert 0.005 < r.normalized < 0.1
    assert set(scan.to_dict()) == {"config", "rows", "skipped"}
