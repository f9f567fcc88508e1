"""The fibered skew product over the Gauss map.

A point ``(rho, alpha)`` lives in ``(0, 1) x [-1, 1]``.  The base moves by the
Gauss map and the fiber coordinate by a three-branch piecewise affine map
``T_rho``.  ``rho`` may be a :class:`RotationNumber` (exact digit shifts) or a
plain number (float or mpf, error tracked through the Gauss map).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import mpmath
import numpy as np

from .cf import RotationNumber, cf_value, gauss
from .errors import BranchAmbiguity, NotAdmissible, PrecisionExceeded


@dataclass(frozen=True)
class SkewPoint:
    rho: RotationNumber | float
    alpha: float
    alpha_error: float = 0.0
    rho_error: float = 0.0


@dataclass(frozen=True)
class MarkovAtom:
    """``U_k``, ``V_{k,ell}`` or ``R_k``; all live over ``1/(k+1) < rho < 1/k``."""

    kind: str
    k: int
    ell: int | None = None

    def __post_init__(self):
        if self.kind not in ("U", "V", "R") or self.k < 1:
            raise ValueError(f"bad atom {self}")
        if self.kind == "V" and not (self.ell is not None and 0 <= self.ell < self.k):
            raise ValueError(f"V atom needs 0 <= ell < k, got {self}")

    @property
    def domain_sign(self) -> int:
        return -1 if self.kind == "R" else 1

    @property
    def image_sign(self) -> int:
        return -1 if self.kind == "U" else 1

    def __str__(self) -> str:
        return f"V{self.k},{self.ell}" if self.kind == "V" else f"{self.kind}{self.k}"


def _mp(v):
    # Fractions are not accepted by mpmath directly
    if isinstance(v, Fraction):
        return mpmath.mpf(v.numerator) / v.denominator
    return mpmath.mpf(v)


def _floor(x):
    return int(mpmath.floor(x)) if isinstance(x, mpmath.mpf) else math.floor(x)


def rho_parts(rho, prec: int = 128, rho_error=0):
    """``(value, error, a0)`` for a rotation number or a plain number."""
    if isinstance(rho, RotationNumber):
        e = cf_value(rho, prec=prec)
        return e.value, e.error, rho.digit(0)
    v = mpmath.mpf(rho)
    a0 = _floor(1 / v)
    if rho_error and (1 / (v + rho_error) < a0 or 1 / (v - rho_error) >= a0 + 1):
        raise BranchAmbiguity(f"rho={v} +- {rho_error} straddles a Gauss branch point")
    return v, mpmath.mpf(rho_error), a0


def _fiber_branch(r, a0, alpha):
    """Value of ``T_r(alpha)``, branch letter, slope, and ``ell`` for the V branch."""
    rg = 1 - a0 * r
    if alpha <= 0:
        return -alpha, "R", -1, None
    if alpha <= rg:
        return -alpha / rg, "U", -1 / rg, None
    y = (1 - alpha) / r
    ell = _floor(y)
    return y - ell, "V", -1 / r, ell


def fiber_map(rho, alpha, prec: int = 128):
    """``T_rho(alpha)`` on ``[-1, 1]``.

    The branches are ``-alpha`` on ``[-1, 0]``, ``-alpha/(rho G(rho))`` on
    ``[0, rho G(rho)]`` and ``{(1 - alpha)/rho}`` on ``(rho G(rho), 1]``.
    """
    with mpmath.workprec(prec):
        r, _, a0 = rho_parts(rho, prec)
        return _fiber_branch(r, a0, mpmath.mpf(alpha))[0]


def _discontinuities(r, a0):
    # jumps of T_r: the end of the middle branch and the points 1 - j r
    return [(1 - j * r, j) for j in range(1, a0 + 1)]


def skew_step(p: SkewPoint, prec: int = 128) -> SkewPoint:
    """One step of the skew product with error propagation.

    Raises :class:`BranchAmbiguity` if the enclosure of ``alpha`` meets a
    discontinuity of ``T_rho``.
    """
    with mpmath.workprec(prec):
        r, er, a0 = rho_parts(p.rho, prec, p.rho_error)
        alpha = _mp(p.alpha)
        ea = _mp(p.alpha_error)
        for d, j in _discontinuities(r, a0):
            if ea + j * er > 0 and abs(alpha - d) <= ea + j * er:
                raise BranchAmbiguity(f"alpha={alpha} +- {ea} meets the jump at {d}")
        val, branch, slope, _ = _fiber_branch(r, a0, alpha)
        rg = 1 - a0 * r
        if branch == "R" and alpha + ea > 0:
            slope = -1 / rg
        if branch == "U":
            drho = abs(alpha) * a0 / rg ** 2
        elif branch == "V":
            drho = (1 - alpha) / r ** 2
        else:
            drho = 0
        ulp = mpmath.mpf(2) ** (-prec + 2)
        new_ea = abs(slope) * ea + drho * er + ulp
        if isinstance(p.rho, RotationNumber):
            new_rho, new_er = p.rho.shift(), 0
        else:
            new_rho = gauss(r)
            new_er = er / r ** 2 + ulp
    return SkewPoint(new_rho, val, new_ea, new_er)


def _auto_prec(rho, n: int) -> int:
    if not isinstance(rho, RotationNumber):
        return 128
    bits = 96.0
    try:
        ds = rho.digits(n + 1)
    except Exception:
        return 256
    for a, b in zip(ds, ds[1:]):
        bits += math.log2((a + 1) * (b + 1))
    return int(bits)


@dataclass
class SkewOrbit:
    points: list[SkewPoint]
    truncated: bool = False
    reason: str | None = None
    prec: int = 128

    def __len__(self) -> int:
        return len(self.points)


def skew_orbit(p: SkewPoint, n: int, ceiling: float = 1e-6, prec: int | None = None) -> SkewOrbit:
    """Up to ``n`` steps of the skew product.

    The orbit stops early (``truncated``) once the error on ``alpha`` exceeds
    ``ceiling`` or an enclosure meets a branch point.
    """
    prec = prec or _auto_prec(p.rho, n)
    pts = [p]
    for _ in range(n):
        try:
            q = skew_step(pts[-1], prec)
        except BranchAmbiguity as exc:
            return SkewOrbit(pts, True, str(exc), prec)
        if q.alpha_error > ceiling:
            return SkewOrbit(pts, True, f"alpha error {float(q.alpha_error):.3g} above ceiling", prec)
        pts.append(q)
    return SkewOrbit(pts, False, None, prec)


def even_trail_closed_form(rho: RotationNumber, n: int, prec: int = 128):
    """Fiber coordinate at level ``n`` of the orbit of ``(rho, 1/2)``.

    For all-even digits the orbit is ``rho_n/2`` at odd levels and
    ``1/2 + rho_n`` at even levels ``n >= 2``.
    """
    for i in range(n + 1):
        if rho.digit(i) % 2:
            raise ValueError(f"digit a_{i} = {rho.digit(i)} is odd")
    with mpmath.workprec(prec):
        if n == 0:
            return mpmath.mpf(1) / 2
        r = cf_value(rho.shift(n), prec=prec).value
        return r / 2 if n % 2 else mpmath.mpf(1) / 2 + r


# Markov atoms and tiles

def atom_of(p: SkewPoint, prec: int = 128) -> MarkovAtom:
    """The Markov atom containing ``p``; raises if ``p`` is within error of a boundary."""
    with mpmath.workprec(prec):
        r, er, k = rho_parts(p.rho, prec, p.rho_error)
        alpha, ea = _mp(p.alpha), _mp(p.alpha_error)
        if abs(alpha) <= ea or abs(alpha) >= 1 - ea:
            raise BranchAmbiguity(f"alpha={alpha} is on an atom boundary")
        if alpha < 0:
            return MarkovAtom("R", k)
        rg = 1 - k * r
        if abs(alpha - rg) <= ea + k * er:
            raise BranchAmbiguity(f"alpha={alpha} is on the U/V boundary")
        if alpha < rg:
            return MarkovAtom("U", k)
        y = (1 - alpha) / r
        ell = _floor(y)
        if min(y - ell, ell + 1 - y) * r <= ea + k * er:
            raise BranchAmbiguity(f"alpha={alpha} is on a V boundary")
        return MarkovAtom("V", k, ell)


def itinerary(p: SkewPoint, n: int, prec: int = 128) -> list[MarkovAtom]:
    """Atoms visited by ``p, T p, ..., T^{n-1} p``."""
    out = []
    for _ in range(n):
        out.append(atom_of(p, prec))
        p = skew_step(p, prec)
    return out


def inverse_branch(m: MarkovAtom, q: SkewPoint, prec: int = 128) -> SkewPoint:
    """The preimage of ``q`` inside the atom ``m``."""
    sign = 1 if q.alpha > 0 else -1
    if sign != m.image_sign:
        raise NotAdmissible(f"{m} maps onto the other half of the fiber")
    with mpmath.workprec(prec):
        if isinstance(q.rho, RotationNumber):
            rho = q.rho.prepend(m.k)
            r = cf_value(rho, prec=prec).value
        else:
            r = 1 / (m.k + mpmath.mpf(q.rho))
            rho = r if isinstance(q.rho, mpmath.mpf) else float(r)
        a = mpmath.mpf(q.alpha)
        if m.kind == "U":
            alpha = -(1 - m.k * r) * a
        elif m.kind == "R":
            alpha = -a
        else:
            alpha = 1 - r * (a + m.ell)
    if not isinstance(q.alpha, mpmath.mpf):
        alpha = float(alpha)
    return SkewPoint(rho, alpha)


def _inverse_arrays(m: MarkovAtom, r: np.ndarray, a: np.ndarray):
    r0 = 1.0 / (m.k + r)
    if m.kind == "U":
        return r0, -(1.0 - m.k * r0) * a
    if m.kind == "R":
        return r0, -a
    return r0, 1.0 - r0 * (a + m.ell)


def check_admissible(word: Sequence[MarkovAtom]) -> None:
    for u, v in zip(word, word[1:]):
        if u.image_sign != v.domain_sign:
            raise NotAdmissible(f"{u} cannot be followed by {v}")


def pull_back(word: Sequence[MarkovAtom], r: np.ndarray, a: np.ndarray):
    """Apply the inverse branches of ``word`` to points of the last atom's image.

    Returns the list of intermediate arrays, first entry inside ``word[0]``.
    """
    check_admissible(word)
    path = [(np.asarray(r, float), np.asarray(a, float))]
    for m in reversed(word):
        path.append(_inverse_arrays(m, *path[-1]))
    return path[::-1]


@dataclass
class MarkovTile:
    word: tuple[MarkovAtom, ...]
    boundary: np.ndarray
    diameter: float
    interior_point: SkewPoint


def _rectangle_boundary(sign: int, samples: int) -> tuple[np.ndarray, np.ndarray]:
    t = np.linspace(0.0, 1.0, samples, endpoint=False)
    r = np.concatenate([t, np.ones(samples), 1.0 - t, np.zeros(samples)])
    a = np.concatenate([np.zeros(samples), t, np.ones(samples), 1.0 - t]) * sign
    return r, a


def build_tile(word: Sequence[MarkovAtom], samples: int = 64) -> MarkovTile:
    """The tile of points whose itinerary starts with ``word``, as a sampled polygon."""
    word = tuple(word)
    if not word:
        raise ValueError("empty word")
    sign = word[-1].image_sign
    r, a = _rectangle_boundary(sign, samples)
    r0, a0 = pull_back(word, r, a)[0]
    pts = np.column_stack([r0, a0])
    diff = pts[:, None, :] - pts[None, :, :]
    diam = float(np.sqrt((diff ** 2).sum(-1)).max())
    cr, ca = pull_back(word, np.array([0.5]), np.array([0.5 * sign]))[0]
    return MarkovTile(word, pts, diam, SkewPoint(float(cr[0]), float(ca[0])))


def random_admissible_word(rng: np.random.Generator, n: int, kmax: int = 8) -> list[MarkovAtom]:
    """A random admissible word with ``k`` uniform on ``1..kmax``."""
    word: list[MarkovAtom] = []
    sign = 1 if rng.random() < 0.5 else -1
    for _ in range(n):
        k = int(rng.integers(1, kmax + 1))
        if sign < 0:
            m = MarkovAtom("R", k)
        elif rng.random() < 0.5:
            m = MarkovAtom("U", k)
        else:
            m = MarkovAtom("V", k, int(rng.integers(0, k)))
        word.append(m)
        sign = m.image_sign
    return word


# Jacobians and distortion

def jacobian_det(p: SkewPoint, n: int, prec: int = 128):
    """``det DT^n(p)``: product of ``-1/rho_j^2`` and the fiber slopes."""
    det = mpmath.mpf(1)
    with mpmath.workprec(prec):
        for _ in range(n):
            r, _, a0 = rho_parts(p.rho, prec)
            _, _, slope, _ = _fiber_branch(r, a0, _mp(p.alpha))
            det *= -slope / r ** 2
            p = skew_step(SkewPoint(p.rho, p.alpha), prec)
    return det


def distortion_ratio(p: SkewPoint, q: SkewPoint, n: int, prec: int = 128):
    """``|det DT^n(p)| / |det DT^n(q)|`` for two points of one ``n``-tile."""
    if itinerary(p, n, prec) != itinerary(q, n, prec):
        raise ValueError("points lie in different tiles")
    return abs(jacobian_det(p, n, prec)) / abs(jacobian_det(q, n, prec))


# Fiber pullback of Lebesgue measure

def _theta_g(theta, prec: int = 128):
    r, _, a0 = rho_parts(theta, prec)
    return 1 - a0 * r


def pullback_sequence(thetas, B: tuple[float, float], n: int, prec: int = 128):
    """Pairs ``(l_j, r_j)``: Lebesgue mass of the fiber pullback of ``B`` on each side.

    ``l_{j+1} = r_j`` and ``r_{j+1} = x l_j + (1 - x) r_j`` with ``x = theta_j G(theta_j)``.
    ``thetas`` is one rotation number (used at every step) or a sequence.
    """
    lo, hi = B
    with mpmath.workprec(prec):
        lo, hi = mpmath.mpf(lo), mpmath.mpf(hi)
        left = max(0, min(hi, 0) - max(lo, -1))
        right = max(0, min(hi, 1) - max(lo, 0))
        out = [(left, right)]
        constant = isinstance(thetas, (RotationNumber, float, int, mpmath.mpf))
        x_const = _theta_g(thetas, prec) if constant else None
        for j in range(n):
            x = x_const if constant else _theta_g(thetas[j], prec)
            left, right = right, x * left + (1 - x) * right
            out.append((left, right))
    return out


def fiber_pullback_measure(thetas, B: tuple[float, float], n: int, prec: int = 128):
    """Total Lebesgue measure of ``T_{theta_{n-1}} ... T_{theta_0}`` preimage of ``B``."""
    left, right = pullback_sequence(thetas, B, n, prec)[-1]
    return left + right


def pullback_limit(theta, B: tuple[float, float], prec: int = 128):
    """Limit of the pullback mass for a constant ``theta``.

    ``x l + r`` is conserved, so the limit is ``2 (tau l_0 + (1 - tau) r_0)``
    with ``tau = x / (1 + x)``.
    """
    with mpmath.workprec(prec):
        left, right = pullback_sequence(theta, B, 0, prec)[0]
        x = _theta_g(theta, prec)
        tau = x / (1 + x)
        return 2 * (tau * left + (1 - tau) * right)


def pullback_bounds(theta, B: tuple[float, float], prec: int = 128):
    """``[x lambda(B), (2 - x) lambda(B)]`` with ``x = theta G(theta)``."""
    with mpmath.workprec(prec):
        x = _theta_g(theta, prec)
        lam = mpmath.mpf(B[1]) - mpmath.mpf(B[0])
        return x * lam, (2 - x) * lam


# Orbit density

@dataclass
class DensityReport:
    coverage: float
    counts: np.ndarray
    steps: int
    mass_minus: float
    mass_from_U: float
    truncated: bool
    seed_mode: str
    seed: int | None = None


def _histogram(r: np.ndarray, a: np.ndarray, grid: int) -> np.ndarray:
    counts, _, _ = np.histogram2d(r, a, bins=grid, range=[[0, 1], [-1, 1]])
    return counts.astype(np.int64)


def orbit_density(p: SkewPoint, n: int, grid: int = 20, ceiling: float = 1e-6) -> DensityReport:
    """Grid occupancy of the certified orbit of ``p`` (truncated when errors grow)."""
    orb = skew_orbit(p, n, ceiling)
    r = np.array([float(rho_parts(q.rho, 64, q.rho_error)[0]) for q in orb.points])
    a = np.array([float(q.alpha) for q in orb.points])
    counts = _histogram(r, a, grid)
    in_u = np.array([a[i] > 0 and a[i] <= 1 - math.floor(1 / r[i]) * r[i] for i in range(len(a) - 1)])
    return DensityReport(
        coverage=float((counts > 0).mean()),
        counts=counts,
        steps=len(orb.points),
        mass_minus=float((a < 0).mean()),
        mass_from_U=float(in_u.mean()) if len(in_u) else 0.0,
        truncated=orb.truncated,
        seed_mode="certified",
    )


def generic_orbit(n: int, seed: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """A genuine ``n``-step orbit of a random point, built backwards.

    The last point is drawn from Gauss measure times Lebesgue; each earlier
    point applies an inverse branch.  The previous digit ``k`` follows the
    stationary backward law of the Gauss map, ``P(k <= K | rho') = 1 -
    (1 + rho')/(K + 1 + rho')``, and the fiber branch is picked in proportion
    to the Lebesgue length it contributes.  Inverse branches contract, so the
    forward orbit is accurate to rounding.
    """
    rng = np.random.default_rng(seed)
    u = rng.random((n, 3))
    r = np.empty(n)
    a = np.empty(n)
    r[-1] = 2.0 ** rng.random() - 1.0
    a[-1] = 2.0 * rng.random() - 1.0
    for i in range(n - 2, -1, -1):
        rp, ap = r[i + 1], a[i + 1]
        k = max(1, math.ceil((1.0 + rp) / (1.0 - u[i, 0]) - 1.0 - rp))
        rn = 1.0 / (k + rp)
        if ap < 0:
            an = -(1.0 - k * rn) * ap
        elif u[i, 1] * (1.0 + k * rn) < 1.0:
            an = -ap
        else:
            ell = min(k - 1, int(u[i, 2] * k))
            an = 1.0 - rn * (ap + ell)
        r[i], a[i] = rn, an
    return r, a


def random_orbit_density(n: int, grid: int = 20, seed: int | None = None) -> DensityReport:
    r, a = generic_orbit(n, seed)
    counts = _histogram(r, a, grid)
    k = np.floor(1.0 / r[:-1])
    in_u = (a[:-1] > 0) & (a[:-1] <= 1.0 - k * r[:-1])
    return DensityReport(
        coverage=float((counts > 0).mean()),
        counts=counts,
        steps=n,
        mass_minus=float((a[1:] < 0).mean()),
        mass_from_U=float(in_u.mean()),
        truncated=False,
        seed_mode="backward-shadowed",
        seed=seed,
    )


# Tile decay and distortion experiments

@dataclass
class TileDecayFit:
    """``log diam ~ log C + n log lam`` fitted to the largest sampled diameter per word length."""

    lam: float
    C: float
    r2: float
    lengths: list[int]
    diameters: list[float]

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "C": self.C, "r2": self.r2,
                "rows": [{"length": n, "max_diameter": d} for n, d in zip(self.lengths, self.diameters)]}


def tile_decay_fit(lengths=range(2, 11), words: int = 40, kmax: int = 8, samples: int = 16,
                   seed: int | None = 0) -> TileDecayFit:
    rng = np.random.default_rng(seed)
    lengths = list(lengths)
    diam = []
    for n in lengths:
        diam.append(max(build_tile(random_admissible_word(rng, n, kmax), samples).diameter
                        for _ in range(words)))
    x = np.asarray(lengths, float)
    y = np.log(np.asarray(diam))
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    r2 = 1.0 - float(resid @ resid) / float(((y - y.mean()) ** 2).sum())
    return TileDecayFit(float(np.exp(slope)), float(np.exp(icpt)), r2, lengths, diam)


def _branch_det(m: MarkovAtom, r: np.ndarray) -> np.ndarray:
    # |det DT| on atom m: |G'| times the fiber slope magnitude
    if m.kind == "R":
        slope = np.ones_like(r)
    elif m.kind == "U":
        slope = 1.0 / (1.0 - m.k * r)
    else:
        slope = 1.0 / r
    return slope / r ** 2


def path_log_det(word: Sequence[MarkovAtom], r: np.ndarray, a: np.ndarray) -> np.ndarray:
    """``log |det DT^n|`` at the points of the tile of ``word`` that ``T^n`` sends to ``(r, a)``."""
    path = pull_back(word, r, a)
    total = np.zeros_like(np.asarray(r, float))
    for m, (rr, _) in zip(word, path):
        total += np.log(_branch_det(m, rr))
    return total


@dataclass
class DistortionReport:
    depths: list[int]
    max_ratio: dict
    max_ratio_no_final_u: dict
    pairs: int
    seed: int | None

    def growth(self) -> float:
        return self.max_ratio[self.depths[-1]] / self.max_ratio[self.depths[0]]

    def to_dict(self) -> dict:
        return {"depths": self.depths, "pairs": self.pairs, "seed": self.seed,
                "max_ratio": {str(k): v for k, v in self.max_ratio.items()},
                "max_ratio_no_final_u": {str(k): v for k, v in self.max_ratio_no_final_u.items()},
                "growth": self.growth()}


def distortion_experiment(pairs: int = 500, depths=(4, 8, 12), kmax: int = 8,
                          seed: int | None = 0) -> DistortionReport:
    """Jacobian distortion over random same-tile pairs with nested words.

    Each pair draws one word of the largest depth and two end points in the
    image of its last letter; the word for a smaller depth ``d`` is the last
    ``d`` letters, with the same end points.  The report gives the largest
    ratio per depth, also restricted to words whose last letter is not a
    ``U`` atom (there the fiber slope ``1/(1 - k rho)`` varies without bound
    across one atom).
    """
    rng = np.random.default_rng(seed)
    depths = sorted(depths)
    top = depths[-1]
    best = {d: 1.0 for d in depths}
    best_nu = {d: 1.0 for d in depths}
    for _ in range(pairs):
        word = random_admissible_word(rng, top, kmax)
        sign = word[-1].image_sign
        r = rng.random(2)
        a = rng.random(2) * sign
        for d in depths:
            ld = path_log_det(word[top - d:], r, a)
            ratio = float(np.exp(abs(ld[0] - ld[1])))
            best[d] = max(best[d], ratio)
            if word[-1].kind != "U":
                best_nu[d] = max(best_nu[d], ratio)
    return DistortionReport(depths, best, best_nu, pairs, seed)
