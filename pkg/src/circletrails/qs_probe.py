"""Cross-ratios, critical spots, almost parabolic profiles and the blow-up scan.

The scan compares a unicritical map ``f`` (base point ``x``) with a
bicritical map ``g`` (critical points ``z`` and ``w``).  The conjugacy ``h``
with ``h(x) = z`` sends ``f^m(x)`` to ``g^m(z)``, and every frame used here has
orbit points of ``x`` as endpoints, so ``h`` is known exactly on them.  The
remaining error is the floating point error of the orbits themselves, which
is enclosed by :meth:`Lift.orbit_radius`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cf import RotationNumber, cf_value, convergents, parse_cf
from .dynamics import tune_to_cylinder
from .errors import RotationMismatch
from .lifts import Lift, make_arnold, square_map
from .trails import addresses

BRACKET_FRACTION = 0.05


@dataclass(frozen=True)
class CrossRatioFrame:
    """Nested intervals ``M = [m0, m1]`` inside ``T = [t0, t1]`` on the line."""

    t0: float
    m0: float
    m1: float
    t1: float

    def __post_init__(self):
        if not (self.t0 < self.m0 < self.m1 < self.t1):
            raise ValueError("frame needs t0 < m0 < m1 < t1")

    @classmethod
    def from_lengths(cls, left: float, middle: float, right: float, start: float = 0.0):
        return cls(start, start + left, start + left + middle, start + left + middle + right)

    @property
    def M(self) -> float:
        return self.m1 - self.m0

    @property
    def T(self) -> float:
        return self.t1 - self.t0

    @property
    def L(self) -> float:
        return self.m0 - self.t0

    @property
    def R(self) -> float:
        return self.t1 - self.m1

    def points(self) -> np.ndarray:
        return np.array([self.t0, self.m0, self.m1, self.t1])

    def mapped(self, F) -> CrossRatioFrame:
        return CrossRatioFrame(*(float(v) for v in F(self.points())))


def cross_ratio(frame: CrossRatioFrame) -> float:
    """``|M| |T| / (|L| |R|)``."""
    return frame.M * frame.T / (frame.L * frame.R)


def cross_ratio_of_lengths(left: float, middle: float, right: float) -> float:
    if min(left, middle, right) <= 0:
        raise ValueError("degenerate frame")
    return middle * (left + middle + right) / (left * right)


@dataclass(frozen=True)
class CrossRatioDistortion:
    direct: float
    factorwise: float
    factors: tuple[float, ...]


def crd(f: Lift, frame: CrossRatioFrame, j: int = 1) -> CrossRatioDistortion:
    """Cross-ratio distortion of ``f^j`` on ``(M, T)``, directly and as a product of one-step factors."""
    pts = frame.points()
    base = cross_ratio(frame)
    prev = base
    factors = []
    for _ in range(j):
        pts = np.asarray(f(pts), float)
        if not np.all(np.diff(pts) > 0):
            raise ValueError("image frame degenerate at working precision")
        cur = cross_ratio(CrossRatioFrame(*pts))
        factors.append(cur / prev)
        prev = cur
    return CrossRatioDistortion(prev / base, float(np.prod(factors)), tuple(factors))


def mobius(a: float, b: float, c: float, d: float):
    """``u -> (a u + b) / (c u + d)`` as a vectorized callable."""
    if a * d - b * c <= 0:
        raise ValueError("Mobius map must preserve orientation")
    return lambda u: (a * np.asarray(u, float) + b) / (c * np.asarray(u, float) + d)


# Level geometry

@dataclass
class _LevelFrame:
    """Distances from ``x`` (along the side of ``I_n``) of the orbit points bounding ``I_n`` and its domains."""

    level: int
    q_n: int
    q_next: int
    a_next: int
    dist: dict
    radius: dict

    def domain(self, k: int) -> tuple[float, float]:
        lo = self.dist[self.q_n + (k + 1) * self.q_next]
        hi = self.dist[self.q_n + k * self.q_next]
        return lo, hi

    @property
    def length(self) -> float:
        return self.dist[self.q_n]


def _level_frame(f: Lift, x: float, rho: RotationNumber, n: int, orbit=None, radius=None) -> _LevelFrame:
    cv = convergents(rho, n + 2)
    qn, qn1 = cv[n][1], cv[n + 1][1]
    a = rho.digit(n + 1)
    idx = [0] + [qn + k * qn1 for k in range(a + 1)]
    top = max(idx)
    if orbit is None:
        orbit = f.orbit(x, top)
        radius = f.orbit_radius(x, top)
    u = orbit.disp(np.asarray(idx)) % 1.0
    sign = 1 if n % 2 == 0 else -1
    dist = {m: float((sign * v) % 1.0) for m, v in zip(idx, u)}
    dist[0] = 0.0
    rad = {m: float(radius[m]) for m in idx}
    return _LevelFrame(n, qn, qn1, a, dist, rad)


# Critical spots

@dataclass(frozen=True)
class CriticalSpot:
    level: int
    critical_point: float
    k: int
    ratio: float


def critical_spots(f: Lift, x: float, n: int, rho: RotationNumber | None = None) -> list[CriticalSpot]:
    """Fundamental domains ``f^{q_n + k q_{n+1}}(I_{n+1}) ⊂ I_n`` holding a critical point of ``f^{q_{n+1}}``.

    A critical point ``c`` of ``f`` gives one when the ancestor of ``c`` at
    level ``n`` lies in ``I_n`` outside ``I_{n+2}``.  Each spot is reported
    with ``|spot| / |I_n|`` in Lebesgue measure.
    """
    spots = []
    for c in f.critical_points:
        if abs(((c - x) + 0.5) % 1.0 - 0.5) < 1e-14:
            continue
        addr = addresses(f, x, c, n, rho=rho)[n]
        if addr.side != "long" or addr.domain is None or addr.domain < 0:
            continue
        fr = _level_frame(f, x, rho or _rho_of(f, n), n)
        lo, hi = fr.domain(addr.domain)
        spots.append(CriticalSpot(n, float(c), addr.domain, (hi - lo) / fr.length))
    return spots


def _rho_of(f: Lift, n: int) -> RotationNumber:
    from .dynamics import combinatorics
    return combinatorics(f, n + 3)


# Almost parabolic profiles

@dataclass
class AlmostParabolicProfile:
    """``J_k = f^{q_n + (k-1) q_{n+1}}(I_{n+1})`` for ``k = 1..l`` with ``l = a_{n+1}``."""

    level: int
    lengths: np.ndarray
    total: float
    width: float
    upper: float
    lower: float

    @property
    def length(self) -> int:
        return len(self.lengths)

    def to_dict(self) -> dict:
        return {"level": self.level, "length": self.length, "width": self.width,
                "upper": self.upper, "lower": self.lower, "total": self.total,
                "lengths": [float(v) for v in self.lengths]}


def yoccoz_profile(f: Lift, x: float, n: int, rho: RotationNumber | None = None) -> AlmostParabolicProfile:
    """Lengths of the chain of fundamental domains at level ``n`` and the fitted constants.

    ``upper = max_k |J_k| m_k^2 / |I|`` and ``lower = max_k |I| / (|J_k| m_k^2)``
    with ``m_k = min(k, l + 1 - k)``; both stay bounded when the lengths decay
    like ``1/m_k^2``.
    """
    rho = rho or _rho_of(f, n)
    fr = _level_frame(f, x, rho, n)
    a = fr.a_next
    J = np.array([fr.domain(k)[1] - fr.domain(k)[0] for k in range(a)])
    if np.any(J <= 0):
        raise RotationMismatch(f"orbit order at level {n} does not match {rho}")
    total = float(J.sum())
    k = np.arange(1, a + 1)
    m2 = np.minimum(k, a + 1 - k).astype(float) ** 2
    return AlmostParabolicProfile(n, J, total, float(min(J[0], J[-1]) / total),
                                  float(np.max(J * m2 / total)), float(np.max(total / (J * m2))))


@dataclass
class YoccozCheck:
    profiles: list[AlmostParabolicProfile]
    passed: bool
    stability: float

    def to_dict(self) -> dict:
        return {"passed": self.passed, "stability": self.stability,
                "profiles": [p.to_dict() for p in self.profiles]}


def yoccoz_check(f: Lift, x: float, levels: list[int], rho: RotationNumber | None = None,
                 stability: float = 4.0) -> YoccozCheck:
    """Profiles at the given levels; passes when the fitted constants are finite and
    consecutive levels agree within the factor ``stability``."""
    profs = [yoccoz_profile(f, x, n, rho) for n in levels]
    worst = 1.0
    ok = all(math.isfinite(p.upper) and math.isfinite(p.lower) for p in profs)
    for p, q in zip(profs, profs[1:]):
        worst = max(worst, p.upper / q.upper, q.upper / p.upper, p.lower / q.lower, q.lower / p.lower)
    return YoccozCheck(profs, ok and worst <= stability, worst)


# Blow-up scan

@dataclass
class ScanRow:
    level: int
    k: int
    a_next: int
    crd: float
    normalized: float
    cross_f: float
    cross_g: float
    bracket_ok: bool
    window: str
    counted: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class BlowupScan:
    rows: list[ScanRow] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def counted(self) -> list[ScanRow]:
        return [r for r in self.rows if r.counted]

    def row(self, level: int) -> ScanRow | None:
        for r in self.rows:
            if r.level == level:
                return r
        return None

    def to_dict(self) -> dict:
        return {"config": self.config, "rows": [r.to_dict() for r in self.rows], "skipped": self.skipped}

    CSV_FIELDS = ("level", "k", "a_next", "crd", "normalized", "cross_f", "cross_g",
                  "bracket_ok", "window", "counted")


def _window(k: int, rho_next: float, err: float) -> str:
    # alpha_{n+1} lies in [1 - (k+1) rho_{n+1}, 1 - k rho_{n+1}]
    lo, hi = 1 - (k + 1) * rho_next - err, 1 - k * rho_next + err
    if lo > 0.25 and hi < 0.75:
        return "inside"
    if hi <= 0.25 or lo >= 0.75:
        return "outside"
    return "straddles"


def _frame_lengths(fr: _LevelFrame, k: int):
    lo, hi = fr.domain(k)
    L, M, R = lo, hi - lo, fr.length - hi
    pts = [0, fr.q_n + (k + 1) * fr.q_next, fr.q_n + k * fr.q_next, fr.q_n]
    rad = max(fr.radius[m] for m in pts)
    return L, M, R, rad


def qs_blowup_scan(f: Lift, x: float, g: Lift, z: float, levels: list[int], y: float | None = None,
                   w: float | None = None, rho: RotationNumber | None = None) -> BlowupScan:
    """Cross-ratio distortion of the conjugacy on ``(Delta_n, I_n)`` at each level.

    ``Delta_n`` is the fundamental domain of ``I_n(x)`` holding the ancestor of
    ``y = h^{-1}(w)``.  The marked point is given either as ``y`` on the
    ``f`` side or as ``w`` on the ``g`` side; both have the same addresses.
    A level is skipped when the ancestor is short or lies in ``I_{n+2}``.
    """
    if (y is None) == (w is None):
        raise ValueError("give exactly one of y and w")
    top = max(levels)
    rho = rho or _rho_of(f, top + 2)
    addr = addresses(g, z, w, top, rho=rho) if w is not None else addresses(f, x, y, top, rho=rho)
    cv = convergents(rho, top + 3)
    need = cv[top + 2][1] + cv[top + 1][1]
    orb_f, rad_f = f.orbit(x, need), f.orbit_radius(x, need)
    orb_g, rad_g = g.orbit(z, need), g.orbit_radius(z, need)
    scan = BlowupScan(config={"levels": list(levels), "rho": str(rho), "x": x, "z": z,
                              "marked": "w" if w is not None else "y",
                              "point": w if w is not None else y})
    for n in levels:
        ad = addr[n]
        if ad.side != "long" or ad.domain is None or ad.domain < 0:
            scan.skipped.append({"level": n, "reason": "ancestor outside the fundamental domains of I_n"})
            continue
        k = ad.domain
        ff = _level_frame(f, x, rho, n, orb_f, rad_f)
        fg = _level_frame(g, z, rho, n, orb_g, rad_g)
        Lf, Mf, Rf, ef = _frame_lengths(ff, k)
        Lg, Mg, Rg, eg = _frame_lengths(fg, k)
        if min(Lf, Mf, Rf, Lg, Mg, Rg) <= 0:
            scan.skipped.append({"level": n, "reason": "frame degenerate at working precision"})
            continue
        ok = 2 * ef <= BRACKET_FRACTION * min(Lf, Mf, Rf) and 2 * eg <= BRACKET_FRACTION * min(Lg, Mg, Rg)
        cf_ = cross_ratio_of_lengths(Lf, Mf, Rf)
        cg = cross_ratio_of_lengths(Lg, Mg, Rg)
        a = ff.a_next
        e = cf_value(rho.shift(n + 1), prec=64)
        win = _window(k, float(e.value), float(e.error))
        value = cg / cf_
        scan.rows.append(ScanRow(n, k, a, value, value / a ** 2, cf_, cg, ok, win,
                                 ok and win == "inside"))
    return scan


@dataclass
class ScenarioB:
    f: Lift
    x: float
    g: Lift
    z: float
    w: float
    rho: RotationNumber
    f_param: float
    g_param: float

    def describe(self) -> dict:
        return {"f": self.f.spec(), "g": self.g.spec(), "x": self.x, "z": self.z, "w": self.w,
                "rho": str(self.rho), "f_param": self.f_param, "g_param": self.g_param}


def alternating_rho(big: int, small: int = 2) -> RotationNumber:
    """``[small, big, small, big, ...]``."""
    return parse_cf(f"[({small},{big})]")


def scenario_b(rho: RotationNumber, depth: int) -> ScenarioB:
    """Unicritical Arnold map ``f`` and the square ``g`` of another one, tuned to ``rho``.

    ``f`` has its critical point at ``x = 0``.  ``g = f'^2`` with ``rho(f') = rho/2``
    has critical points ``z = 0`` and ``w = f'^{-1}(0)``.  Both are tuned so
    that their rotation numbers share ``depth`` digits with ``rho``.
    """
    fam_f = lambda t: make_arnold(t, 1.0)
    fam_g = lambda t: square_map(make_arnold(t, 1.0))
    tf = tune_to_cylinder(fam_f, rho, depth, 0.0, 1.0, x0=0.0)
    tg = tune_to_cylinder(fam_g, rho, depth, 0.0, 0.5, x0=0.0)
    f, g = fam_f(tf.param), fam_g(tg.param)
    w = g.base.inverse(0.0) % 1.0
    return ScenarioB(f, 0.0, g, 0.0, float(w), rho, tf.param, tg.param)
