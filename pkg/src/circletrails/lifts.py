"""Lifts of circle homeomorphisms and fast orbit kernels.

Orbit points are stored as a winding integer plus a position in
``[-1/2, 1/2)``, so precision near the critical point 0 is not lost to the
integer part of a long lift orbit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from numba import njit
from scipy.optimize import brentq, minimize_scalar

from .cf import RotationNumber, cf_value, parse_cf

TWO_PI = 2.0 * math.pi


@dataclass
class Orbit:
    """``F^m(x0) = wind[m] + pos[m]`` for ``m = 0..n``."""

    pos: np.ndarray
    wind: np.ndarray

    def __len__(self) -> int:
        return len(self.pos)

    def disp(self, m):
        """``F^m(x0) - x0`` as floats (exact integer part kept separate until the end)."""
        return (self.wind[m] - self.wind[0]) + (self.pos[m] - self.pos[0])

    def lift(self, m):
        return self.wind[m] + self.pos[m]


def _make_orbit_kernel(step):
    @njit
    def orbit(x0, n, params):
        pos = np.empty(n + 1)
        wind = np.empty(n + 1, np.int64)
        w = math.floor(x0 + 0.5)
        x = x0 - w
        pos[0] = x
        wind[0] = w
        for i in range(n):
            y = step(x, params)
            k = math.floor(y + 0.5)
            x = y - k
            w += k
            pos[i + 1] = x
            wind[i + 1] = w
        return pos, wind

    @njit
    def bracket(x0, n, params, guard):
        # best bounds p/k <= rho <= (p+1)/k along the orbit of x0, plus the
        # fraction of near-integer returns (a sign of a periodic orbit)
        w = math.floor(x0 + 0.5)
        w0 = w
        x = x0 - w
        start = x
        lo_p, lo_q = 0, 0
        hi_p, hi_q = 0, 0
        lk_p, lk_q, lk_n = 0, 0, 0
        for k in range(1, n + 1):
            y = step(x, params)
            c = math.floor(y + 0.5)
            x = y - c
            w += c
            d = (x - start) + (w - w0)
            p = math.floor(d + 0.5)
            e = d - p
            g = guard + 1e-16 * k
            if abs(e) < g:
                if lk_q == 0 or p * lk_q != lk_p * k:
                    lk_p, lk_q, lk_n = p, k, 1
                else:
                    lk_n += 1
                continue
            if e < 0:
                p -= 1
            if lo_q == 0 or p * lo_q > lo_p * k:
                lo_p, lo_q = p, k
            if hi_q == 0 or (p + 1) * hi_q < hi_p * k:
                hi_p, hi_q = p + 1, k
        return lo_p, lo_q, hi_p, hi_q, lk_p, lk_q, lk_n

    @njit
    def signs(x0, times, params):
        # F^q(x0) - x0 at each requested time q (times sorted ascending)
        out = np.empty(len(times))
        w = math.floor(x0 + 0.5)
        x = x0 - w
        start = x
        w0 = w
        j = 0
        for k in range(1, times[-1] + 1):
            y = step(x, params)
            c = math.floor(y + 0.5)
            x = y - c
            w += c
            while j < len(times) and times[j] == k:
                out[j] = (x - start) + (w - w0)
                j += 1
        return out

    @njit
    def radius(x0, n, params):
        # enclosure radius of the computed orbit: a monotone lift maps
        # [x - r, x + r] onto [F(x - r), F(x + r)]; each step adds rounding
        out = np.empty(n + 1)
        w = math.floor(x0 + 0.5)
        x = x0 - w
        r = 0.0
        out[0] = r
        for i in range(n):
            y = step(x, params)
            up = step(x + r, params) - y
            down = y - step(x - r, params)
            c = math.floor(y + 0.5)
            x = y - c
            r = max(up, down) + 4e-16 * (1.0 + abs(y))
            out[i + 1] = r
        return out

    return orbit, bracket, signs, radius


@njit
def _arnold_step(x, params):
    return x + params[0] - params[1] / (2.0 * math.pi) * math.sin(2.0 * math.pi * x)


@njit
def _phi0(u, sigma, half):
    v = u / half
    if v <= -1.0 or v >= 1.0:
        return 0.0
    return -u * math.exp(-u * u / (2.0 * sigma * sigma) + 1.0 - 1.0 / (1.0 - v * v))


@njit
def _dphi0(u, sigma, half):
    v = u / half
    if v <= -1.0 or v >= 1.0:
        return 0.0
    g = math.exp(-u * u / (2.0 * sigma * sigma) + 1.0 - 1.0 / (1.0 - v * v))
    dlog = -u / (sigma * sigma) - 2.0 * v / (half * (1.0 - v * v) ** 2)
    return -g * (1.0 + u * dlog)


@njit
def _wrap(u):
    return u - math.floor(u + 0.5)


@njit
def _bump_step(x, params):
    # params: shift, t, sigma, half
    return x + params[0] + _phi0(_wrap(x), params[2], params[3]) + _phi0(_wrap(x - params[1]), params[2], params[3])


@njit
def _bump_square_step(x, params):
    y = _bump_step(x, params)
    c = math.floor(y + 0.5)
    return _bump_step(y - c, params) + c


@njit
def _arnold_square_step(x, params):
    y = _arnold_step(x, params)
    c = math.floor(y + 0.5)
    return _arnold_step(y - c, params) + c


_ARNOLD = _make_orbit_kernel(_arnold_step)
_BUMP = _make_orbit_kernel(_bump_step)
_ARNOLD2 = _make_orbit_kernel(_arnold_square_step)
_BUMP2 = _make_orbit_kernel(_bump_square_step)


class Lift:
    """A lift ``F`` of a circle homeomorphism, ``F(x + 1) = F(x) + 1``."""

    exact_measure = False
    critical_points: tuple[float, ...] = ()
    criticality: tuple[int, ...] = ()
    has_derivative = False

    def __call__(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def spec(self) -> str:
        raise NotImplementedError

    def displacement(self, x):
        """``F(x) - x``, periodic; subclasses compute it without cancellation."""
        return self(x) - x

    def displacement_range(self) -> tuple[float, float]:
        xs = np.linspace(-0.5, 0.5, 4097)
        d = self(xs) - xs
        return float(d.min()) - 1e-9, float(d.max()) + 1e-9

    def orbit(self, x0: float, n: int) -> Orbit:
        pos = np.empty(n + 1)
        wind = np.empty(n + 1, np.int64)
        w = math.floor(x0 + 0.5)
        x = x0 - w
        pos[0], wind[0] = x, w
        for i in range(n):
            y = float(self(x))
            c = math.floor(y + 0.5)
            x = y - c
            w += c
            pos[i + 1], wind[i + 1] = x, w
        return Orbit(pos, wind)

    def bracket(self, x0: float, n: int, guard: float = 1e-13) -> tuple:
        """``(lo_p, lo_q, hi_p, hi_q, lock_p, lock_q, lock_count)``; see the orbit kernels."""
        orb = self.orbit(x0, n)
        k = np.arange(1, n + 1)
        d = orb.disp(k)
        p = np.floor(d + 0.5).astype(np.int64)
        e = d - p
        near = np.abs(e) < guard + 1e-16 * k
        p = p - (e < 0)
        lo_p, lo_q, hi_p, hi_q = 0, 0, 0, 0
        for pi, ki in zip(p[~near], k[~near]):
            if lo_q == 0 or pi * lo_q > lo_p * ki:
                lo_p, lo_q = int(pi), int(ki)
            if hi_q == 0 or (pi + 1) * hi_q < hi_p * ki:
                hi_p, hi_q = int(pi) + 1, int(ki)
        lk = [0, 0, 0]
        for pi, ki in zip(np.floor(d[near] + 0.5).astype(np.int64), k[near]):
            if lk[1] == 0 or pi * lk[1] != lk[0] * ki:
                lk = [int(pi), int(ki), 1]
            else:
                lk[2] += 1
        return lo_p, lo_q, hi_p, hi_q, lk[0], lk[1], lk[2]

    def orbit_radius(self, x0: float, n: int) -> np.ndarray:
        """Radius of an enclosure of the true orbit around the computed one."""
        out = np.empty(n + 1)
        x, r = float(x0), 0.0
        out[0] = r
        for i in range(n):
            y = float(self(x))
            r = max(float(self(x + r)) - y, y - float(self(x - r))) + 4e-16 * (1.0 + abs(y))
            x = y - math.floor(y + 0.5)
            out[i + 1] = r
        return out

    def return_values(self, x0: float, times: list[int]) -> np.ndarray:
        """``F^q(x0) - x0`` for each ``q`` in ``times``."""
        orb = self.orbit(x0, max(times))
        return orb.disp(np.asarray(times))

    def inverse(self, y: float) -> float:
        lo, hi = self.displacement_range()
        a, b = y - hi - 1e-9, y - lo + 1e-9
        return brentq(lambda u: float(self(u)) - y, a, b, xtol=1e-16, rtol=8.9e-16, maxiter=200)

    def inverse_iterate(self, y: float, k: int) -> float:
        for _ in range(k):
            y = self.inverse(y)
        return y


class _KernelLift(Lift):
    _kernels = None
    params: np.ndarray

    def orbit(self, x0: float, n: int) -> Orbit:
        pos, wind = self._kernels[0](float(x0), int(n), self.params)
        return Orbit(pos, wind)

    def bracket(self, x0: float, n: int, guard: float = 1e-13):
        return tuple(int(v) for v in self._kernels[1](float(x0), int(n), self.params, guard))

    def orbit_radius(self, x0: float, n: int) -> np.ndarray:
        return self._kernels[3](float(x0), int(n), self.params)

    def return_values(self, x0: float, times: list[int]) -> np.ndarray:
        order = np.argsort(times)
        ts = np.asarray(times, np.int64)[order]
        vals = self._kernels[2](float(x0), ts, self.params)
        out = np.empty(len(times))
        out[order] = vals
        return out


class Rotation(Lift):
    """``x -> x + theta``; ``theta`` may be a :class:`RotationNumber` for exact work."""

    exact_measure = True
    has_derivative = True

    def __init__(self, theta):
        if isinstance(theta, RotationNumber):
            self.exact = theta
            self.theta = float(cf_value(theta, prec=80).value)
        else:
            self.exact = None
            self.theta = float(theta)
        if not 0.0 < self.theta < 1.0:
            raise ValueError("rotation angle must lie in (0, 1)")

    def theta_mp(self, prec: int):
        if self.exact is not None:
            return cf_value(self.exact, prec=prec).value
        return mpmath.mpf(self.theta)

    def __call__(self, x):
        return x + self.theta

    def displacement(self, x):
        return np.full_like(np.asarray(x, float), self.theta) if np.ndim(x) else self.theta

    def derivative(self, x):
        return np.ones_like(np.asarray(x, float))

    def orbit(self, x0: float, n: int) -> Orbit:
        m = np.arange(n + 1)
        w0 = math.floor(x0 + 0.5)
        base = x0 - w0
        ip = np.floor(m * self.theta)
        fp = m * self.theta - ip + base
        c = np.floor(fp + 0.5)
        return Orbit(fp - c, (w0 + ip + c).astype(np.int64))

    def orbit_radius(self, x0: float, n: int) -> np.ndarray:
        return 4e-16 * (1.0 + abs(x0) + np.arange(n + 1) * self.theta)

    def inverse(self, y):
        return y - self.theta

    def inverse_iterate(self, y, k: int):
        return y - k * self.theta

    def spec(self) -> str:
        return f"rot:{self.exact}" if self.exact is not None else f"rot:{self.theta!r}"


class Arnold(_KernelLift):
    """``x -> x + theta - K/(2 pi) sin(2 pi x)`` with ``0 <= K <= 1``."""

    has_derivative = True
    _kernels = _ARNOLD

    def __init__(self, theta: float, K: float):
        if K > 1 or K < 0:
            raise ValueError("K must lie in [0, 1]; K > 1 is not invertible")
        self.theta, self.K = float(theta), float(K)
        self.params = np.array([self.theta, self.K])
        if K == 1:
            self.critical_points = (0.0,)
            self.criticality = (3,)

    def __call__(self, x):
        return x + self.theta - self.K / TWO_PI * np.sin(TWO_PI * x)

    def displacement(self, x):
        return self.theta - self.K / TWO_PI * np.sin(TWO_PI * x)

    def derivative(self, x):
        return 1.0 - self.K * np.cos(TWO_PI * np.asarray(x, float))

    def spec(self) -> str:
        return f"arnold:{self.theta!r},{self.K!r}"


def _psi(v):
    v = np.asarray(v, float)
    out = np.zeros_like(v)
    m = np.abs(v) < 1
    out[m] = np.exp(1.0 - 1.0 / (1.0 - v[m] ** 2))
    return out


@dataclass(frozen=True)
class BumpFamilySpec:
    rho0: float
    a: float
    delta: float
    t: float
    s: float = 0.0
    eps: float | None = None

    @property
    def eps_value(self) -> float:
        return 2.5 * self.delta if self.eps is None else self.eps


class BumpMap(_KernelLift):
    """``x -> x + rho0 + s + phi(x) + phi(x - t)`` with two critical points ``0`` and ``t``.

    ``phi_0(u) = -u exp(-u^2/(2 sigma^2)) psi(2u/a)`` with ``psi`` the standard
    compact bump ``exp(1 - 1/(1 - v^2))``; ``sigma`` is solved so that
    ``max |phi_0| = delta``.  Then ``phi_0'(0) = -1`` and the critical points
    are cubic.
    """

    has_derivative = True
    _kernels = _BUMP

    def __init__(self, spec: BumpFamilySpec):
        a, delta, t = spec.a, spec.delta, spec.t
        if not (0 < a < 0.25):
            raise ValueError("bump support a must lie in (0, 1/4)")
        if not (0 < delta < 1 / 48):
            raise ValueError("bump height delta must lie in (0, 1/48)")
        if not (a <= t <= 1 - a):
            raise ValueError("t must lie in [a, 1 - a]")
        if abs(spec.s) > spec.eps_value:
            raise ValueError(f"|s| must be at most eps = {spec.eps_value}")
        self.family = spec
        self.half = a / 2
        self.sigma = _solve_sigma(a, delta)
        self.params = np.array([spec.rho0 + spec.s, t, self.sigma, self.half])
        self.critical_points = (0.0, float(t))
        self.criticality = (3, 3)
        _check_bump(self.sigma, self.half, delta)

    def phi0(self, u):
        u = np.asarray(u, float)
        return -u * np.exp(-u ** 2 / (2 * self.sigma ** 2)) * _psi(u / self.half)

    def dphi0(self, u):
        return np.vectorize(lambda v: _dphi0(v, self.sigma, self.half))(np.asarray(u, float))

    def phi(self, x):
        x = np.asarray(x, float)
        return self.phi0(x - np.floor(x + 0.5))

    def __call__(self, x):
        x = np.asarray(x, float)
        out = x + self.params[0] + self.phi(x) + self.phi(x - self.family.t)
        return out if out.ndim else float(out)

    def derivative(self, x):
        x = np.asarray(x, float)
        w = lambda u: u - np.floor(u + 0.5)
        return 1.0 + self.dphi0(w(x)) + self.dphi0(w(x - self.family.t))

    def spec(self) -> str:
        f = self.family
        return f"bump:{f.rho0!r},{f.a!r},{f.delta!r},{f.t!r},{f.s!r}"


def _max_phi0(sigma: float, half: float) -> float:
    res = minimize_scalar(lambda u: _phi0(u, sigma, half), bounds=(0.0, half), method="bounded",
                          options={"xatol": 1e-12})
    return -float(res.fun)


def _solve_sigma(a: float, delta: float) -> float:
    half = a / 2
    hi = 10 * half
    if _max_phi0(hi, half) < delta:
        raise ValueError("delta too large for the support a")
    return brentq(lambda s: _max_phi0(s, half) - delta, 1e-6, hi, xtol=1e-15)


def _check_bump(sigma: float, half: float, delta: float) -> None:
    u = np.linspace(-half, half, 20001)
    u = u[u != 0]
    d = np.array([_dphi0(v, sigma, half) for v in u])
    if np.abs(d).max() >= 1:
        raise ValueError("bump profile has |phi_0'| >= 1 away from 0")
    if abs(_dphi0(0.0, sigma, half) + 1) > 1e-12:
        raise ValueError("bump profile has phi_0'(0) != -1")
    if abs(_max_phi0(sigma, half) - delta) > 1e-9:
        raise ValueError("bump profile height mismatch")
    h = 1e-3 * sigma
    d3 = (_phi0(2 * h, sigma, half) - 2 * _phi0(h, sigma, half)
          + 2 * _phi0(-h, sigma, half) - _phi0(-2 * h, sigma, half)) / (2 * h ** 3)
    if abs(d3) < 1e-6:
        raise ValueError("bump profile critical point is flat")


def make_rotation(theta) -> Rotation:
    return Rotation(theta)


def make_arnold(theta: float, K: float) -> Arnold:
    return Arnold(theta, K)


def make_bump_family(spec: BumpFamilySpec) -> BumpMap:
    return BumpMap(spec)


class SquareMap(Lift):
    """``F o F``.  Critical points are listed as ``(f^{-1}(c), c)``."""

    def __init__(self, f: Lift):
        self.base = f
        self.exact_measure = f.exact_measure
        self.has_derivative = f.has_derivative
        if len(f.critical_points) == 1:
            c = f.critical_points[0]
            pre = f.inverse(c)
            self.critical_points = (pre - math.floor(pre), c)
            self.criticality = (f.criticality[0],) * 2
        elif f.critical_points:
            raise ValueError("square_map expects a unicritical or critical-point-free map")
        if isinstance(f, Arnold):
            self._kernels = _ARNOLD2
        elif isinstance(f, BumpMap):
            self._kernels = _BUMP2
        else:
            self._kernels = None

    @property
    def params(self):
        return self.base.params

    def __call__(self, x):
        return self.base(self.base(x))

    def derivative(self, x):
        return self.base.derivative(self.base(x)) * self.base.derivative(x)

    def orbit(self, x0: float, n: int) -> Orbit:
        if self._kernels is not None:
            return _KernelLift.orbit(self, x0, n)
        orb = self.base.orbit(x0, 2 * n)
        return Orbit(orb.pos[::2].copy(), orb.wind[::2].copy())

    def bracket(self, x0: float, n: int, guard: float = 1e-12):
        if self._kernels is not None:
            return _KernelLift.bracket(self, x0, n, guard)
        return Lift.bracket(self, x0, n, guard)

    def return_values(self, x0: float, times: list[int]) -> np.ndarray:
        if self._kernels is not None:
            return _KernelLift.return_values(self, x0, times)
        return Lift.return_values(self, x0, times)

    def orbit_radius(self, x0: float, n: int) -> np.ndarray:
        if self._kernels is not None:
            return _KernelLift.orbit_radius(self, x0, n)
        return Lift.orbit_radius(self, x0, n)

    def inverse(self, y):
        return self.base.inverse(self.base.inverse(y))

    def spec(self) -> str:
        return f"square:{self.base.spec()}"


def square_map(f: Lift) -> Lift:
    if isinstance(f, Rotation) and f.exact is None:
        return Rotation((2 * f.theta) % 1.0) if (2 * f.theta) % 1.0 else SquareMap(f)
    return SquareMap(f)


class FunctionLift(Lift):
    """A lift given by a vectorized Python callable."""

    def __init__(self, F, dF=None, critical_points=(), name="function"):
        self.F, self.dF = F, dF
        self.has_derivative = dF is not None
        self.critical_points = tuple(critical_points)
        self.name = name

    def __call__(self, x):
        return self.F(x)

    def derivative(self, x):
        if self.dF is None:
            raise NotImplementedError
        return self.dF(x)

    def spec(self) -> str:
        return self.name


def _floats(text: str, count: int) -> list[float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != count:
        raise ValueError(f"expected {count} numbers in {text!r}")
    return [float(p) for p in parts]


def parse_map(text: str) -> Lift:
    """Parse ``rot:theta``, ``arnold:theta,K``, ``bump:rho0,a,delta,t,s`` or ``square:<spec>``."""
    kind, _, rest = text.strip().partition(":")
    if kind == "rot":
        rest = rest.strip()
        if rest.startswith("[") or rest.startswith("rule:") or rest.isalpha() or "_" in rest:
            return make_rotation(parse_cf(rest))
        return make_rotation(float(rest))
    if kind == "arnold":
        theta, K = _floats(rest, 2)
        return make_arnold(theta, K)
    if kind == "bump":
        rho0, a, delta, t, s = _floats(rest, 5)
        return make_bump_family(BumpFamilySpec(rho0, a, delta, t, s))
    if kind == "square":
        return square_map(parse_map(rest))
    raise ValueError(f"unknown map spec {text!r}")
