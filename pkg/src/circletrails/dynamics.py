"""Rotation numbers, tuning, dynamical partitions and invariant-measure estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .cf import RotationNumber, _to_fraction, cf_from_real, convergents
from .errors import BudgetExhausted, EndpointAmbiguity, MonotonicityError, RotationMismatch
from .lifts import Lift, Rotation

DEFAULT_BUDGET = 10 ** 8


def base_point(f: Lift) -> float:
    return f.critical_points[0] if f.critical_points else 0.0


@dataclass(frozen=True)
class RotationEstimate:
    """Rotation number of the lift bracketed by ``lo <= rho <= hi``."""

    lo: Fraction
    hi: Fraction
    iterations: int
    locked: bool = False

    @property
    def value(self) -> float:
        return float((self.lo + self.hi) / 2)

    @property
    def error(self) -> float:
        return float((self.hi - self.lo) / 2)

    def digits(self) -> RotationNumber:
        """Continued fraction digits of ``rho mod 1`` valid on the whole bracket."""
        shift = math.floor(self.lo)
        mid, half = (self.lo + self.hi) / 2 - shift, (self.hi - self.lo) / 2
        prefix = cf_from_real(mid, half)
        ds = prefix.digits[:-1] if prefix.breakpoint else prefix.digits
        if not ds:
            raise RotationMismatch("bracket too wide to certify a single digit")
        return RotationNumber.from_digits(ds)


LOCK_REPEATS = 3


def _bracket(f: Lift, x0: float, n: int) -> RotationEstimate:
    """Bracket from ``n`` iterates.

    Returns from within rounding of an integer are skipped; when they recur
    ``LOCK_REPEATS`` times with one fraction ``p/q`` inside the bracket the
    orbit sits on a periodic orbit and ``rho = p/q`` is reported as locked.
    """
    lo_p, lo_q, hi_p, hi_q, lk_p, lk_q, lk_n = f.bracket(x0, n)
    if (lo_q == 0 or hi_q == 0) and lk_n >= LOCK_REPEATS:
        r = Fraction(lk_p, lk_q)
        return RotationEstimate(r, r, n, True)
    if lo_q == 0 or hi_q == 0:
        raise BudgetExhausted("no usable iterate for the bracket")
    lo, hi = Fraction(lo_p, lo_q), Fraction(hi_p, hi_q)
    if lk_n >= LOCK_REPEATS and lo <= Fraction(lk_p, lk_q) <= hi:
        r = Fraction(lk_p, lk_q)
        return RotationEstimate(r, r, n, True)
    return RotationEstimate(lo, hi, n)


def rotation_number(f: Lift, tol: float = 1e-9, budget: int = DEFAULT_BUDGET,
                    x0: float | None = None) -> RotationEstimate:
    """Certified bracket for the lift rotation number with half-width below ``tol``.

    ``F^k(x0) - x0 >= p`` forces ``rho >= p/k`` and ``< p + 1`` forces
    ``rho <= (p+1)/k``; the best bounds come from the closest returns.
    """
    if isinstance(f, Rotation):
        th = _to_fraction(f.theta)
        return RotationEstimate(th, th, 0)
    x0 = base_point(f) if x0 is None else x0
    n = 1024
    while True:
        est = _bracket(f, x0, n)
        if est.error < tol:
            return est
        if n >= budget:
            raise BudgetExhausted(f"rotation number not within {tol} after {n} iterates", est)
        n = min(budget, 4 * n)


def combinatorics(f: Lift, digits: int, budget: int = DEFAULT_BUDGET) -> RotationNumber:
    """At least ``digits`` certified continued fraction digits of ``rho(f)``."""
    if isinstance(f, Rotation) and f.exact is not None:
        return f.exact
    if isinstance(f, Rotation):
        ds = cf_from_real(f.theta, 0).digits
        return RotationNumber.from_digits(ds)
    tol = 1e-3
    while True:
        est = rotation_number(f, tol, budget)
        try:
            rn = est.digits()
            if rn.available() >= digits:
                return rn
        except RotationMismatch:
            pass
        if tol < 1e-15:
            raise BudgetExhausted(f"cannot certify {digits} digits")
        tol /= 100


# Parameter tuning

@dataclass(frozen=True)
class TuneResult:
    param: float
    rho: RotationEstimate | None
    steps: int


def _compare(f: Lift, target: Fraction, tol: float, budget: int, x0: float):
    if isinstance(f, Rotation):
        est = rotation_number(f)
        if abs(est.lo - target) < tol:
            return 0, est
        return (est.lo > target) - (est.hi < target), est
    n = 1024
    while True:
        est = _bracket(f, x0, n)
        if est.hi < target:
            return -1, est
        if est.lo > target:
            return 1, est
        if est.hi - est.lo < tol:
            return 0, est
        if n >= budget:
            raise BudgetExhausted("tuning evaluation ran out of iterates", est)
        n = min(budget, 4 * n)


def tune_parameter(family: Callable[[float], Lift], target, tol: float, lo: float, hi: float,
                   budget: int = DEFAULT_BUDGET, max_steps: int = 200,
                   x0: float | None = None) -> TuneResult:
    """Bisection on a parameter until ``|rho - target| < tol``.

    The family must have rotation number non-decreasing in the parameter.
    """
    tgt = _to_fraction(float(target) if isinstance(target, RotationNumber) else target)

    def side(p):
        f = family(p)
        return _compare(f, tgt, tol, budget, base_point(f) if x0 is None else x0)

    s_lo, e_lo = side(lo)
    if s_lo == 0:
        return TuneResult(lo, e_lo, 0)
    s_hi, e_hi = side(hi)
    if s_hi == 0:
        return TuneResult(hi, e_hi, 0)
    if not (s_lo < 0 < s_hi):
        raise MonotonicityError(f"parameters {lo}, {hi} do not bracket the target")
    for step in range(1, max_steps + 1):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        s, est = side(mid)
        if s == 0:
            return TuneResult(mid, est, step)
        if s < 0:
            lo = mid
        else:
            hi = mid
    raise BudgetExhausted("parameter interval collapsed before the tolerance was met")


def tune_to_cylinder(family: Callable[[float], Lift], rho: RotationNumber, depth: int,
                     lo: float, hi: float, max_steps: int = 200,
                     x0: float | None = None) -> TuneResult:
    """Bisection until ``rho(f)`` lies on the correct side of the convergents ``p_m/q_m``, ``m <= depth``.

    Then ``rho(f)`` shares the digits of ``rho`` that fix the cyclic order of
    the first ``q_depth`` orbit points.
    """
    cv = convergents(rho, depth)[1:]
    times = [q for _, q in cv]
    want = [(-1) ** m for m in range(1, depth + 1)]  # sign of rho - p_m/q_m

    def side(p):
        f = family(p)
        vals = f.return_values(base_point(f) if x0 is None else x0, times)
        for (pm, _), v, w in zip(cv, vals, want):
            got = 1 if v - pm >= 0 else -1
            if got != w:
                return got
        return 0

    for step in range(max_steps):
        mid = 0.5 * (lo + hi)
        s = side(mid)
        if s == 0:
            return TuneResult(mid, None, step)
        if s > 0:
            hi = mid
        else:
            lo = mid
    raise BudgetExhausted("cylinder tuning did not converge")


# Dynamical partitions

@dataclass
class DynamicalPartition:
    """Atoms of ``P_n(x)`` in counterclockwise order.

    Atom ``r`` runs from orbit point ``left_index[r]`` to ``right_index[r]``;
    ``start`` is its counterclockwise offset from ``x``.  Atoms are half-open
    ``(left, right]``.
    """

    level: int
    x: float
    q_n: int
    q_next: int
    left_index: np.ndarray
    right_index: np.ndarray
    is_long: np.ndarray
    atom_index: np.ndarray
    start: np.ndarray
    length: np.ndarray

    @property
    def long_length(self) -> float:
        return float(self.length[np.flatnonzero(self.is_long & (self.atom_index == 0))[0]])

    @property
    def short_length(self) -> float:
        return float(self.length[np.flatnonzero(~self.is_long & (self.atom_index == 0))[0]])

    def endpoint_mismatch(self) -> float:
        nxt = np.roll(np.arange(len(self.start)), -1)
        if np.any(self.right_index != self.left_index[nxt]):
            return math.inf
        end = (self.start + self.length) % 1.0
        gap = np.abs(end - self.start[nxt])
        return float(np.minimum(gap, 1 - gap).max())

    def locate(self, y: float, tol: float = 1e-14) -> int:
        """Index of the atom containing ``y``; raises near an endpoint."""
        u = (y - self.x) % 1.0
        r = int(np.searchsorted(self.start, u, side="left")) - 1
        cand = [(r + d) % len(self.start) for d in (0, 1)]
        for c in cand:
            d = abs(u - self.start[c])
            if min(d, 1 - d) < tol:
                raise EndpointAmbiguity(f"y={y} is within {tol} of an atom endpoint")
        return r % len(self.start)

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "x": self.x,
            "q_n": self.q_n,
            "q_next": self.q_next,
            "convention": "atoms are half-open (left, right] in counterclockwise order",
            "atoms": [
                {
                    "type": "long" if bool(l) else "short",
                    "index": int(i),
                    "left_orbit_index": int(a),
                    "right_orbit_index": int(b),
                    "start": float((self.x + s) % 1.0),
                    "length": float(ln),
                }
                for l, i, a, b, s, ln in zip(self.is_long, self.atom_index, self.left_index,
                                             self.right_index, self.start, self.length)
            ],
        }


def dynamical_partition(f: Lift, x: float, n: int, rho: RotationNumber | None = None,
                        budget: int = DEFAULT_BUDGET) -> DynamicalPartition:
    rho = rho or combinatorics(f, n + 1, budget)
    cv = convergents(rho, n + 1)
    q_n, q_next = cv[n][1], cv[n + 1][1]
    total = q_n + q_next
    if total > budget:
        raise BudgetExhausted(f"partition needs {total} iterates")
    orb = f.orbit(x, total)
    u = orb.disp(np.arange(total)) % 1.0
    m = np.arange(total)
    if n % 2 == 0:
        is_long = m < q_next
        right = np.where(is_long, m + q_n, m - q_next)
        idx = np.where(is_long, m, m - q_next)
    else:
        is_long = m >= q_n
        right = np.where(is_long, m - q_n, m + q_next)
        idx = np.where(is_long, m - q_n, m)
    length = (orb.disp(right) - orb.disp(m)) % 1.0
    order = np.argsort(u, kind="stable")
    return DynamicalPartition(n, float(x), q_n, q_next, m[order], right[order], is_long[order],
                              idx[order], u[order], length[order])


def real_bounds_report(f: Lift, c: float, n_range, rho: RotationNumber | None = None) -> list[dict]:
    """Largest ratio of adjacent atom lengths per level."""
    rows = []
    rho = rho or combinatorics(f, max(n_range) + 2)
    for n in n_range:
        P = dynamical_partition(f, c, n, rho)
        L = P.length
        R = np.roll(L, -1)
        ratio = np.maximum(L / R, R / L)
        rows.append({"level": n, "q_n": P.q_n, "q_next": P.q_next, "max_ratio": float(ratio.max())})
    return rows


# Invariant measure of arcs

@dataclass(frozen=True)
class ArcMeasureEstimate:
    value: float
    error: float
    qn_used: int


def birkhoff_arc_estimate(f: Lift, arc: tuple[float, float], q: int, x: float = 0.0) -> float:
    """``(1/q) #{0 <= j < q : f^j(x) in arc}`` for the open counterclockwise arc ``(a, b)``."""
    a, b = arc
    L = b - a
    orb = f.orbit(x, q - 1)
    u = (orb.lift(np.arange(q)) - a) % 1.0
    return float(((u > 0) & (u < L)).sum()) / q


def deepest_return(rho: RotationNumber, budget: int) -> tuple[int, int]:
    """Largest level ``n`` with ``q_n <= budget`` and that ``q_n``."""
    n, q = 0, 1
    cv = convergents(rho, 1)
    k = 1
    while True:
        try:
            cv = convergents(rho, k)
        except Exception:
            break
        if cv[-1][1] > budget:
            break
        n, q = k, cv[-1][1]
        k += 1
    return n, q


def arc_measure(f: Lift, arc: tuple[float, float], n: int | None = None, x: float = 0.0,
                budget: int = 10 ** 6, rho: RotationNumber | None = None) -> ArcMeasureEstimate:
    """Invariant measure of the counterclockwise arc from ``arc[0]`` to ``arc[1]``.

    Exact for rotations; otherwise a Birkhoff average over ``q_n`` iterates
    with the error ``2/q_n`` from the Denjoy-Koksma inequality.
    """
    a, b = arc
    L = b - a
    if not 0 <= L <= 1:
        raise ValueError("arc length must lie in [0, 1]")
    if L == 1 or L == 0:
        return ArcMeasureEstimate(float(L), 0.0, 0)
    if f.exact_measure:
        return ArcMeasureEstimate(float(L), 0.0, 0)
    if n is None:
        rho = rho or combinatorics(f, 2)
        rho = _extend_digits(f, rho, budget)
        n, q = deepest_return(rho, budget)
    else:
        rho = rho or combinatorics(f, n + 1)
        q = convergents(rho, n)[n][1]
    return ArcMeasureEstimate(birkhoff_arc_estimate(f, arc, q, x), 2.0 / q, q)


def _extend_digits(f: Lift, rho: RotationNumber, budget: int) -> RotationNumber:
    # certify digits far enough for a return time near the budget
    if rho.available() is None:
        return rho
    n, q = deepest_return(rho, budget)
    if n < rho.available():
        return rho
    tol = max(2e-14, 0.25 / float(budget) ** 2)
    try:
        return rotation_number(f, tol, budget=16 * budget).digits()
    except BudgetExhausted as exc:
        return exc.partial.digits() if exc.partial is not None else rho


@dataclass(frozen=True)
class Signature:
    rho: float
    rho_error: float
    alpha: float
    alpha_error: float
    qn_used: int
    convention: str = "alpha = mu(counterclockwise arc from c1 to c2)"

    def as_skew_point(self):
        from .skew import SkewPoint
        return SkewPoint(self.rho, self.alpha, self.alpha_error, self.rho_error)


def signature(g: Lift, tol: float = 1e-9, budget: int = 10 ** 6) -> Signature:
    """``(rho(g) mod 1, mu(c1 -> c2))`` for a map with exactly two critical points."""
    if len(g.critical_points) != 2:
        raise ValueError(f"signature needs exactly two critical points, got {len(g.critical_points)}")
    c1, c2 = g.critical_points
    est = rotation_number(g, tol)
    rho = est.value % 1.0
    end = c2 if c2 > c1 else c2 + 1.0
    m = arc_measure(g, (c1, end), x=c1, budget=budget, rho=est.digits())
    return Signature(rho, est.error, m.value, m.error, m.qn_used)


# Conjugacy

@dataclass(frozen=True)
class ConjugacyValue:
    value: float
    error: float
    exact: bool


def shared_combinatorics(f: Lift, g: Lift, digits: int) -> RotationNumber:
    rf, rg = combinatorics(f, digits), combinatorics(g, digits)
    if rf.digits(digits) != rg.digits(digits):
        raise RotationMismatch(f"rotation numbers differ within the first {digits} digits")
    return rf


def conjugacy_point(f: Lift, x: float, g: Lift, z: float, y: float, depth: int,
                    rho: RotationNumber | None = None) -> ConjugacyValue:
    """``h(y)`` for the conjugacy with ``h o f = g o h`` and ``h(x) = z``.

    ``y`` is located in ``P_depth(x)`` for ``f``; the matching atom of
    ``P_depth(z)`` for ``g`` brackets ``h(y)``.  Inside the atom the value is
    interpolated linearly; the error is the image atom length.
    """
    rho = rho or shared_combinatorics(f, g, depth + 2)
    Pf = dynamical_partition(f, x, depth, rho)
    Pg = dynamical_partition(g, z, depth, rho)
    u = (y - x) % 1.0
    hit = np.flatnonzero(np.minimum(np.abs(Pf.start - u), 1 - np.abs(Pf.start - u)) < 1e-15)
    order_g = {int(m): r for r, m in enumerate(Pg.left_index)}
    if hit.size:
        r = order_g[int(Pf.left_index[hit[0]])]
        return ConjugacyValue(float((z + Pg.start[r]) % 1.0), 0.0, True)
    r = Pf.locate(y, tol=0.0)
    t = ((u - Pf.start[r]) % 1.0) / Pf.length[r]
    rg = order_g[int(Pf.left_index[r])]
    val = (z + Pg.start[rg] + t * Pg.length[rg]) % 1.0
    return ConjugacyValue(float(val), float(Pg.length[rg]), False)


# Schwarzian derivative

def _derivs(f: Lift, x: float, h: float):
    d = lambda u: float(f.displacement(u))
    dm2, dm1, d0, dp1, dp2 = (d(x + k * h) for k in (-2, -1, 0, 1, 2))
    D1 = 1.0 + (-dp2 + 8 * dp1 - 8 * dm1 + dm2) / (12 * h)
    D2 = (-dp2 + 16 * dp1 - 30 * d0 + 16 * dm1 - dm2) / (12 * h * h)
    D3 = (dp2 - 2 * dp1 + 2 * dm1 - dm2) / (2 * h ** 3)
    return D1, D2, D3


def schwarzian(f: Lift, x: float, h: float = 1e-3) -> float:
    """Finite-difference ``D^3f/Df - (3/2)(D^2f/Df)^2``."""
    for c in f.critical_points:
        dist = abs((x - c + 0.5) % 1.0 - 0.5)
        if dist <= 3 * h:
            raise ValueError(f"x={x} is within {3 * h} of the critical point {c}")
    D1, D2, D3 = _derivs(f, x, h)
    return D3 / D1 - 1.5 * (D2 / D1) ** 2


def schwarzian_iterate(f: Lift, x: float, j: int, h: float = 1e-3) -> float:
    """``S(f^j)(x) = sum_i Sf(f^i x) (Df^i(x))^2`` by the chain rule."""
    total, dfi = 0.0, 1.0
    for _ in range(j):
        total += schwarzian(f, x, h) * dfi ** 2
        dfi *= _derivs(f, x, h)[0]
        x = float(f(x))
    return total


# Realization sweep for the two-bump family

@dataclass
class RealizationRow:
    t: float
    s: float
    rho: float
    rho_error: float
    alpha: float
    alpha_error: float


@dataclass
class RealizationSweep:
    rho0: float
    a: float
    delta: float
    rows: list

    def endpoint_rows(self):
        return self.rows[0], self.rows[-1]

    def certified(self) -> bool:
        """``alpha(a) < 2 rho0`` and ``alpha(1 - a) > 3 rho0`` with the error bars included."""
        lo, hi = self.endpoint_rows()
        return (lo.alpha + lo.alpha_error < 2 * self.rho0
                and hi.alpha - hi.alpha_error > 3 * self.rho0)

    def to_dict(self) -> dict:
        return {"rho0": self.rho0, "a": self.a, "delta": self.delta,
                "certified": self.certified(),
                "rows": [vars(r) for r in self.rows]}


def realization_sweep(rho0: float, a: float = 0.2, delta: float = 0.02, count: int = 10,
                      tol: float = 1e-7, budget: int = 10 ** 6) -> RealizationSweep:
    """Tune ``s = psi(t)`` so the bump map has rotation number ``rho0`` at ``count`` values of ``t``.

    The grid runs from ``t = a`` to ``t = 1 - a``; each row records the
    signature measure ``mu[0, t]``.
    """
    from .lifts import BumpFamilySpec, BumpMap

    rows = []
    for t in np.linspace(a, 1 - a, count):
        fam = lambda s, t=float(t): BumpMap(BumpFamilySpec(rho0, a, delta, t, s))
        res = tune_parameter(fam, rho0, tol, -2 * delta, 2 * delta, budget=budget * 100)
        g = fam(res.param)
        sig = signature(g, tol, budget)
        rows.append(RealizationRow(float(t), res.param, sig.rho, sig.rho_error,
                                   sig.alpha, sig.alpha_error))
    return RealizationSweep(rho0, a, delta, rows)
