"""Renormalization trails of a marked point, computed two ways.

The direct route follows the ancestors of ``y`` through the nested dynamical
partitions of ``x``.  ``I_n`` lies counterclockwise of ``x`` for even ``n``
and clockwise for odd ``n``; it splits into ``I_{n+2}`` and the fundamental
domains ``f^{q_n + j q_{n+1}}(I_{n+1})``, ``0 <= j < a_{n+1}``.  The ancestor
either stays put or is pulled back into ``I_{n+1}``.  The descent starts at a
virtual level ``-1`` whose long interval is the whole circle (``q_{-1} = 0``),
which reproduces the level-0 initialization.

Instead of pulling ``y`` back, the descent pushes the partition forward: with
``y_n = f^{-c}(y)`` every comparison happens between ``y`` and forward orbit
points ``f^{c + m}(x)``, and arc measures are invariant under ``f^c``.

The second route iterates the skew product from ``(rho, alpha_0)``.
"""
from __future__ import annotations

import math
from contextlib import nullcontext
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath
import numpy as np

from .cf import RotationNumber, _to_fraction, cf_from_real, cf_value, convergents, gauss
from .dynamics import _extend_digits, deepest_return, rotation_number
from .errors import DigitsExhausted, EndpointAmbiguity
from .lifts import Lift, Rotation
from .skew import SkewPoint, atom_of, skew_orbit


@dataclass
class TrailEntry:
    level: int
    rho: object
    rho_error: object
    alpha: object
    alpha_error: object
    location: str | None = None
    pullback: int | None = None
    ancestor: object = None


@dataclass
class Trail:
    entries: list[TrailEntry]
    source: str
    truncated: bool = False
    reason: str | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def alphas(self) -> list:
        return [e.alpha for e in self.entries]

    def rhos(self) -> list:
        return [e.rho for e in self.entries]

    def to_dict(self) -> dict:
        levels = []
        for e in self.entries:
            levels.append({
                "level": e.level,
                "rho": float(e.rho),
                "rho_error": float(e.rho_error),
                "alpha": float(e.alpha),
                "alpha_error": float(e.alpha_error),
                "atom": _atom_label(e.rho, e.alpha, e.alpha_error),
                "location": e.location,
                "pullback": e.pullback,
                "ancestor": None if e.ancestor is None else float(e.ancestor),
            })
        return {"source": self.source, "truncated": self.truncated, "reason": self.reason,
                "levels": levels}


def _atom_label(rho, alpha, err):
    try:
        return str(atom_of(SkewPoint(float(rho), float(alpha), float(err))))
    except Exception:
        return None


def _mod1(v):
    if isinstance(v, mpmath.mpf):
        return v - mpmath.floor(v)
    return v - math.floor(v)


class _RotationGeometry:
    """Orbit geometry of a rotation in Fraction or mpf arithmetic; measure is length."""

    exact_measure = True

    def __init__(self, theta, x, y, k):
        self.theta, self.x, self.y, self.k = theta, x, y, k

    def dist(self, sign: int, i: int, j):
        # distance along sign from f^i(x) to f^j(x); j=None means y
        if j is None:
            if self.k is not None:
                return _mod1(sign * (self.k - i) * self.theta)
            return _mod1(sign * (self.y - i * self.theta))
        return _mod1(sign * (j - i) * self.theta)

    def measure(self, sign: int, i: int, d):
        return d

    def ancestor(self, c: int):
        if self.k is not None:
            return _mod1(self.x + (self.k - c) * self.theta)
        return _mod1(self.x + self.y - c * self.theta)


class _OrbitGeometry:
    """Orbit geometry from a float orbit; measures are Birkhoff counts over ``q`` iterates."""

    exact_measure = False

    def __init__(self, f: Lift, x: float, y, k, length: int, q: int):
        self.f, self.x, self.k, self.q = f, x, k, q
        orb = f.orbit(x, max(length, q))
        self.frac = orb.disp(np.arange(len(orb))) % 1.0
        self.y = None if y is None else (y - x) % 1.0

    def _u(self, j):
        if j is None:
            return self.frac[self.k] if self.k is not None else self.y
        return self.frac[j]

    def dist(self, sign: int, i: int, j):
        return float((sign * (self._u(j) - self.frac[i])) % 1.0)

    def measure(self, sign: int, i: int, d):
        u = (sign * (self.frac[: self.q] - self.frac[i])) % 1.0
        return np.count_nonzero((u > 0) & (u < d)) / self.q

    def ancestor(self, c: int):
        if c > 4096:
            return None
        y = self.x + self._u(None)
        return float(self.f.inverse_iterate(y, c) % 1.0)


def _direction(level: int) -> int:
    return 1 if level % 2 == 0 else -1


class _Descent:
    def __init__(self, geo, rho: RotationNumber, n: int, tol):
        self.geo, self.rho, self.tol = geo, rho, tol
        self.q = {-1: 0}
        self.p = {-1: 1}
        for m, (pm, qm) in enumerate(convergents(rho, n + 1)):
            self.p[m], self.q[m] = pm, qm

    def offset(self, sign: int, c: int):
        if self.geo.k is not None and self.geo.k == c:
            return 0
        return self.geo.dist(sign, c, None)

    def _cmp(self, sign, c, idx, d, lev):
        # sign of d minus the distance from f^c(x) to f^idx(x)
        if lev == -1 and idx == c:
            return -1
        if self.geo.k is not None and idx == self.geo.k:
            return 0
        diff = d - self.geo.dist(sign, c, idx)
        if abs(diff) <= self.tol:
            raise EndpointAmbiguity(
                f"ancestor within {float(self.tol):.2e} of a partition point at level {lev + 1}")
        return 1 if diff > 0 else -1

    def step(self, lev: int, side: str, c: int):
        """Side and pullback count at level ``lev + 1``."""
        if side == "short":
            return "long", c
        sign = _direction(lev)
        qa, qb, a = self.q[lev], self.q[lev + 1], self.rho.digit(lev + 1)
        d = self.offset(sign, c)
        even = lev % 2 == 0
        prev = self._cmp(sign, c, c + qa + a * qb, d, lev)
        if (even and prev <= 0) or (not even and prev < 0):
            return "short", c
        for ell in range(a - 1, -1, -1):
            cur = self._cmp(sign, c, c + qa + ell * qb, d, lev)
            inside = (prev > 0 and cur <= 0) if even else (prev >= 0 and cur < 0)
            if inside:
                return "long", c + qa + ell * qb
            prev = cur
        raise EndpointAmbiguity(f"ancestor not located at level {lev + 1}")

    def raw_alpha(self, lev: int, side: str, c: int):
        # unnormalized |alpha_{lev+1}| and the level whose interval normalizes it
        ref = lev if side == "long" else lev + 1
        sign = _direction(ref)
        return self.geo.measure(sign, c, self.offset(sign, c)), ref


def _rotation_setup(f: Rotation, x, y, n: int, prec: int | None):
    if f.exact is not None:
        rho = f.exact
        bits = convergents(rho, n + 2)[-1][1].bit_length()
        prec = prec or 96 + 2 * bits
        with mpmath.workprec(prec):
            theta = cf_value(rho, prec=prec).value
            xx = mpmath.mpf(x)
            yy = None if y is None else mpmath.mpf(y) - xx
        tol = mpmath.mpf(2) ** (-prec + 2 * bits + 16)
        return rho, theta, xx, yy, prec, tol
    theta = _to_fraction(f.theta)
    rho = RotationNumber.from_digits(cf_from_real(theta, 0).digits)
    xx = _to_fraction(x)
    yy = None if y is None else _to_fraction(y) - xx
    return rho, theta, xx, yy, None, Fraction(0)


def trail_direct(f: Lift, x: float, y=None, n: int = 10, orbit_index: int | None = None,
                 prec: int | None = None, budget: int = 10 ** 7) -> Trail:
    """Trail ``(rho_m, alpha_m)``, ``m = 0..n``, of the point ``y`` relative to ``x``.

    ``y`` may instead be given as ``f^k(x)`` through ``orbit_index=k``; ties
    with partition points are then resolved by the half-open convention.
    Rotations are computed exactly; other maps use Birkhoff estimates of the
    invariant measure, and the trail stops at the first level where the
    Denjoy-Koksma error exceeds a tenth of ``mu(I_n)``.
    """
    if (y is None) == (orbit_index is None):
        raise ValueError("give exactly one of y and orbit_index")
    if isinstance(f, Rotation):
        rho, theta, xx, yy, prec, tol = _rotation_setup(f, x, y, n, prec)
        avail = rho.available()
        if avail is not None and avail < n + 2:
            raise DigitsExhausted(f"rotation angle has only {avail} digits; depth {n} needs {n + 2}")
        geo = _RotationGeometry(theta, xx, yy, orbit_index)
        mu = lambda q, p: abs(q * theta - p)
        if prec is None:
            return _descend(geo, rho, n, tol, mu, theta, 0)
        with mpmath.workprec(prec):
            return _descend(geo, rho, n, tol, mu, theta, tol)
    est = rotation_number(f, 1e-12, budget=budget)
    r_val, r_err = float(est.value) % 1.0, float(est.error)
    rho = _extend_digits(f, est.digits(), budget)
    _, big_q = deepest_return(rho, budget)
    depth = min(n, rho.available() - 2)
    cv = convergents(rho, depth + 1)
    need = cv[-1][1] + cv[-2][1]
    if orbit_index is not None:
        need = max(need, orbit_index)
    geo = _OrbitGeometry(f, x, y, orbit_index, need + 1, big_q)
    trail = _descend(geo, rho, depth, 1e-13, lambda q, p: abs(q * r_val - p), r_val, r_err,
                     dk=2.0 / big_q)
    if depth < n and not trail.truncated:
        trail.truncated = True
        trail.reason = f"rotation number digits certified only to depth {depth}"
    return trail


@dataclass(frozen=True)
class Address:
    """Where the ancestor ``y_m = f^{-c}(y)`` sits at level ``m``.

    ``domain`` is ``k`` when ``y_m`` lies in ``f^{q_m + k q_{m+1}}(I_{m+1})``,
    ``-1`` when it lies in ``I_{m+2}`` and ``None`` when ``y_m`` is short.
    """

    level: int
    side: str
    pullback: int
    domain: int | None


def addresses(f: Lift, x: float, y=None, n: int = 10, orbit_index: int | None = None,
              rho: RotationNumber | None = None) -> list[Address]:
    """Combinatorial location of the ancestors of ``y`` for levels ``0..n``.

    Only the cyclic order of orbit points is used, so ``rho`` may be any
    number sharing the first ``n + 2`` digits with the rotation number of ``f``.
    """
    if (y is None) == (orbit_index is None):
        raise ValueError("give exactly one of y and orbit_index")
    if isinstance(f, Rotation):
        rho_f, theta, xx, yy, prec, tol = _rotation_setup(f, x, y, n + 1, None)
        rho = rho or rho_f
        geo = _RotationGeometry(theta, xx, yy, orbit_index)
    else:
        from .dynamics import combinatorics
        rho = rho or combinatorics(f, n + 3)
        cv = convergents(rho, n + 2)
        need = cv[-1][1] + cv[-2][1]
        if orbit_index is not None:
            need = max(need, orbit_index)
        geo = _OrbitGeometry(f, x, y, orbit_index, need + 1, 1)
        tol, prec = 1e-13, None
    desc = _Descent(geo, rho, n + 1, tol)
    states = []
    side, c = "long", 0
    ctx = mpmath.workprec(prec) if prec else nullcontext()
    with ctx:
        for lev in range(-1, n + 1):
            side, c = desc.step(lev, side, c)
            states.append((side, c))
    out = []
    for m in range(n + 1):
        side, c = states[m]
        dom = None
        if side == "long":
            nside, nc = states[m + 1]
            dom = -1 if nside == "short" else (nc - c - desc.q[m]) // desc.q[m + 1]
        out.append(Address(m, side, c, dom))
    return out


def _descend(geo, rho: RotationNumber, n: int, tol, mu, rho0, rho0_err, dk=0.0) -> Trail:
    desc = _Descent(geo, rho, n, tol)

    def mu_level(m):
        return 1 if m == -1 else mu(desc.q[m], desc.p[m])

    entries: list[TrailEntry] = []
    side, c, lev = "long", 0, -1
    rho_m, rho_e = rho0, rho0_err
    for m in range(n + 1):
        raw, ref = desc.raw_alpha(lev, side, c)
        norm = mu_level(ref)
        if dk > 0.1 * float(norm):
            return Trail(entries, "direct", True,
                         f"Denjoy-Koksma error exceeds a tenth of mu(I_{ref}) at level {m}")
        alpha = raw / norm if side == "long" else -raw / norm
        if geo.exact_measure:
            err = 4 * tol / norm if tol else 0
        else:
            norm_err = desc.q[ref] * rho0_err if ref >= 0 else 0.0
            err = (dk + abs(float(alpha)) * norm_err) / float(norm)
        try:
            nxt = desc.step(lev, side, c)
        except EndpointAmbiguity:
            if m < n:
                raise
            nxt = None
        entry = TrailEntry(m, rho_m, rho_e, alpha, err)
        entries.append(entry)
        if nxt is None:
            break
        entry.location, entry.pullback = nxt
        entry.ancestor = geo.ancestor(nxt[1])
        side, c = nxt
        lev += 1
        rho_m, rho_e = _next_rho(rho_m, rho_e)
    return Trail(entries, "direct")


def _next_rho(prev, err):
    if isinstance(prev, Fraction):
        inv = 1 / prev
        return inv - math.floor(inv), 0
    return gauss(prev), err / prev ** 2 if err else err


def ancestors(f: Lift, x: float, y: float, n: int, **kw) -> list[dict]:
    """Ancestors ``y_m`` for ``m = 0..n`` with their side and pullback count ``c``.

    ``f^c(y_m) = y``; ``y_m`` lies in ``I_m`` (long) or ``I_{m+1}`` (short).
    """
    tr = trail_direct(f, x, y, n, **kw)
    return [{"level": e.level, "point": e.ancestor, "location": e.location, "pullback": e.pullback}
            for e in tr.entries if e.location is not None]


def trail_via_skew(rho, alpha0, n: int, alpha_error=0.0, prec: int | None = None,
                   ceiling: float = 1e-6) -> Trail:
    """The skew-product orbit of ``(rho, alpha0)`` dressed as a trail."""
    orb = skew_orbit(SkewPoint(rho, alpha0, alpha_error), n, ceiling=ceiling, prec=prec)
    entries = []
    for m, p in enumerate(orb.points):
        if isinstance(p.rho, RotationNumber):
            e = cf_value(p.rho, prec=orb.prec)
            r, re = e.value, e.error
        else:
            r, re = p.rho, p.rho_error
        entries.append(TrailEntry(m, r, re, p.alpha, p.alpha_error))
    return Trail(entries, "skew", orb.truncated, orb.reason)


@dataclass
class EquivalenceReport:
    rows: list[dict] = field(default_factory=list)
    passed: bool = True
    max_deviation: float = 0.0
    levels_compared: int = 0
    note: str | None = None

    def to_dict(self) -> dict:
        return {"passed": self.passed, "max_deviation": self.max_deviation,
                "levels_compared": self.levels_compared, "note": self.note, "rows": self.rows}


def trail_equivalence_report(f: Lift, x: float, y=None, n: int = 10, orbit_index: int | None = None,
                             prec: int | None = None, budget: int = 10 ** 7) -> EquivalenceReport:
    """Compare the direct trail with the skew-product orbit of its first entry.

    A level passes when the deviation is within the sum of both error bounds.
    """
    direct = trail_direct(f, x, y, n, orbit_index=orbit_index, prec=prec, budget=budget)
    first = direct.entries[0]
    depth = len(direct.entries) - 1
    if isinstance(f, Rotation) and f.exact is not None:
        rho, alpha0, p = f.exact, first.alpha, prec
    else:
        p = prec or 160 + 8 * depth
        rho, alpha0 = _as_mpf(first.rho, p), _as_mpf(first.alpha, p)
    skew = trail_via_skew(rho, alpha0, depth, first.alpha_error, prec=p, ceiling=2.0)
    rep = EquivalenceReport()
    for d, s in zip(direct.entries, skew.entries):
        with mpmath.workprec(256):
            dev = float(abs(_as_mpf(d.alpha, 256) - _as_mpf(s.alpha, 256)))
        bound = float(d.alpha_error) + float(s.alpha_error) + 1e-12
        ok = dev <= bound
        rep.rows.append({"level": d.level, "direct": float(d.alpha), "direct_error": float(d.alpha_error),
                         "skew": float(s.alpha), "skew_error": float(s.alpha_error),
                         "deviation": dev, "bound": bound, "ok": ok})
        rep.passed = rep.passed and ok
        rep.max_deviation = max(rep.max_deviation, dev)
    rep.levels_compared = len(rep.rows)
    if len(skew.entries) < len(direct.entries):
        rep.passed = False
    if direct.truncated or skew.truncated:
        rep.note = direct.reason or skew.reason
    return rep


def _as_mpf(v, prec):
    with mpmath.workprec(prec):
        if isinstance(v, Fraction):
            return mpmath.mpf(v.numerator) / v.denominator
        return +mpmath.mpf(v)
