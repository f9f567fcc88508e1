"""Continued fractions, the Gauss map, and certified real enclosures.

A rotation number is stored as its digit stream ``rho = [a0, a1, a2, ...]``
meaning ``1/(a0 + 1/(a1 + ...))``.  Shifting the stream by one is the Gauss
map, so orbits of the base dynamics are computed without any floating point
loss.  Numeric values are produced on demand as ``Enclosure`` objects: an
mpmath value together with a rigorous error radius.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction

import mpmath

from .errors import DigitsExhausted

NAMED = {
    "golden": "[(1)]",
    "sqrt2m1": "[(2)]",
    "euler_lambert": "rule:4n-2",
}


@dataclass(frozen=True)
class PeriodicTail:
    word: tuple[int, ...]

    def digit(self, i: int) -> int:
        return self.word[i % len(self.word)]

    def text(self, start: int) -> str:
        k = start % len(self.word)
        return "(" + ",".join(map(str, self.word[k:] + self.word[:k])) + ")"


@dataclass(frozen=True)
class ArithmeticTail:
    """Digits ``slope * n + intercept`` with ``n`` counted from 1."""

    slope: int
    intercept: int

    def digit(self, i: int) -> int:
        return self.slope * (i + 1) + self.intercept

    def text(self, start: int) -> str:
        b = self.intercept + self.slope * start
        sign = "+" if b >= 0 else "-"
        return f"rule:{self.slope}n{sign}{abs(b)}"


Tail = PeriodicTail | ArithmeticTail


@dataclass(frozen=True)
class RotationNumber:
    """An irrational in (0, 1) given by its digit stream.

    ``prefix`` holds explicit digits, ``tail`` generates the rest (``None``
    means the list is all we know), and ``offset`` counts Gauss shifts.
    """

    prefix: tuple[int, ...] = ()
    tail: Tail | None = None
    offset: int = 0
    tail_start: int = field(default=0, repr=False)

    def __post_init__(self):
        for d in self.prefix:
            if not isinstance(d, int) or d < 1:
                raise ValueError(f"digits must be positive integers, got {d!r}")
        if self.tail is None and not self.prefix:
            raise ValueError("a rotation number needs at least one digit")
        if isinstance(self.tail, PeriodicTail):
            if not self.tail.word or min(self.tail.word) < 1:
                raise ValueError("periodic word must be non-empty with positive digits")
        if isinstance(self.tail, ArithmeticTail):
            if self.tail.slope < 0 or self.tail.digit(self.tail_start) < 1:
                raise ValueError("digit rule must produce positive, non-decreasing digits")

    @classmethod
    def from_digits(cls, digits) -> RotationNumber:
        return cls(prefix=tuple(int(d) for d in digits))

    def digit(self, i: int) -> int:
        j = i + self.offset
        if j < len(self.prefix):
            return self.prefix[j]
        if self.tail is None:
            raise DigitsExhausted(f"digit {i} requested but only {self.available()} are known")
        return self.tail.digit(j - len(self.prefix) + self.tail_start)

    def digits(self, count: int) -> list[int]:
        return [self.digit(i) for i in range(count)]

    def available(self) -> int | None:
        """Number of known digits, or ``None`` for an infinite stream."""
        if self.tail is not None:
            return None
        return max(0, len(self.prefix) - self.offset)

    def shift(self, k: int = 1) -> RotationNumber:
        return replace(self, offset=self.offset + k)

    def prepend(self, *digits: int) -> RotationNumber:
        rest = self.prefix[self.offset:]
        skip = max(0, self.offset - len(self.prefix))
        return RotationNumber(
            prefix=tuple(digits) + rest,
            tail=self.tail,
            tail_start=self.tail_start + skip,
        )

    def value(self, prec: int = 128) -> Enclosure:
        return cf_value(self, prec=prec)

    def __float__(self) -> float:
        return float(self.value(64).value)

    def __str__(self) -> str:
        rest = [str(d) for d in self.prefix[self.offset:]]
        if self.tail is None:
            return "[" + ",".join(rest) + "]"
        start = self.tail_start + max(0, self.offset - len(self.prefix))
        return "[" + ",".join(rest) + ";" + self.tail.text(start) + "]"


@dataclass(frozen=True)
class Enclosure:
    """A value with a rigorous error radius."""

    value: mpmath.mpf
    error: mpmath.mpf

    @property
    def lo(self):
        return self.value - self.error

    @property
    def hi(self):
        return self.value + self.error

    def __float__(self) -> float:
        return float(self.value)

    def contains(self, x) -> bool:
        return abs(mpmath.mpf(x) - self.value) <= self.error


_RULE = re.compile(r"^rule:(\d*)n([+-]\d+)?$")


def _parse_rule(text: str) -> ArithmeticTail:
    m = _RULE.match(text.replace(" ", ""))
    if not m:
        raise ValueError(f"bad digit rule {text!r}")
    slope = int(m.group(1)) if m.group(1) else 1
    intercept = int(m.group(2)) if m.group(2) else 0
    return ArithmeticTail(slope, intercept)


def _parse_ints(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(int(t) for t in text.split(","))
    except ValueError:
        raise ValueError(f"bad digit list {text!r}") from None


def parse_cf(text: str) -> RotationNumber:
    """Parse ``[a0,a1,...]``, ``[pre;(per)]``, ``[pre;rule:an+b]``, ``rule:...`` or a name."""
    s = text.strip()
    s = NAMED.get(s, s)
    if s.startswith("rule:"):
        return RotationNumber(tail=_parse_rule(s))
    if not (s.startswith("[") and s.endswith("]")):
        raise ValueError(f"cannot parse continued fraction {text!r}")
    body = s[1:-1].replace(" ", "")
    if ";" in body:
        pre, tail_text = body.split(";", 1)
    elif body.startswith("("):
        pre, tail_text = "", body
    else:
        pre, tail_text = body, ""
    prefix = _parse_ints(pre)
    if not tail_text:
        return RotationNumber(prefix=prefix)
    if tail_text.startswith("(") and tail_text.endswith(")"):
        word = _parse_ints(tail_text[1:-1])
        return RotationNumber(prefix=prefix, tail=PeriodicTail(word))
    return RotationNumber(prefix=prefix, tail=_parse_rule(tail_text))


def gauss_shift(rho: RotationNumber, k: int = 1) -> RotationNumber:
    """``G^k(rho)``: drops the first ``k`` digits."""
    return rho.shift(k)


def convergents(rho: RotationNumber, n: int, max_bits: int | None = None) -> list[tuple[int, int]]:
    """Pairs ``(p_k, q_k)`` for ``k = 0..n`` with ``p_k/q_k = [a0..a_{k-1}]``.

    ``q_0 = 1``, ``q_1 = a0`` and ``q_{k+1} = a_k q_k + q_{k-1}``.  Python
    integers never wrap; ``max_bits`` turns growth past a fixed width into an
    ``OverflowError`` for callers that need machine integers.
    """
    p_prev, q_prev = 1, 0
    p, q = 0, 1
    out = [(p, q)]
    for k in range(n):
        a = rho.digit(k)
        p, p_prev = a * p + p_prev, p
        q, q_prev = a * q + q_prev, q
        if max_bits is not None and q.bit_length() > max_bits:
            raise OverflowError(f"q_{k + 1} exceeds {max_bits} bits")
        out.append((p, q))
    return out


def return_times(rho: RotationNumber, n: int) -> list[int]:
    return [q for _, q in convergents(rho, n)]


def cf_value(rho: RotationNumber, depth: int | None = None, prec: int = 128) -> Enclosure:
    """Value of ``rho`` from the convergent at ``depth`` with a certified radius.

    Without ``depth`` the convergent is refined until the truncation error is
    below ``2**-prec`` or the known digits run out.
    """
    target = mpmath.mpf(2) ** (-prec)
    p_prev, q_prev = 1, 0
    p, q = 0, 1
    k = 0
    exhausted = False
    with mpmath.workprec(prec + 16):
        while depth is None or k < depth:
            try:
                a = rho.digit(k)
            except DigitsExhausted:
                exhausted = True
                break
            p, p_prev = a * p + p_prev, p
            q, q_prev = a * q + q_prev, q
            k += 1
            if depth is None and mpmath.mpf(1) / (mpmath.mpf(q) * q) < target:
                break
        try:
            a_next = None if exhausted else rho.digit(k)
        except DigitsExhausted:
            a_next = None
        q_next = a_next * q + q_prev if a_next is not None else q + q_prev
        value = mpmath.mpf(p) / q
        error = mpmath.mpf(1) / (mpmath.mpf(q) * q_next) + abs(value) * mpmath.mpf(2) ** (-prec - 8)
    return Enclosure(value, error)


def gauss(x):
    """The Gauss map ``1/x - floor(1/x)`` on floats or mpf values."""
    y = 1 / x
    if isinstance(y, mpmath.mpf):
        return y - mpmath.floor(y)
    return y - math.floor(y)


def mu_In(rho: RotationNumber, n: int, prec: int = 128) -> Enclosure:
    """Measure of the fundamental interval ``I_n``: ``prod_{j<=n} G^j(rho)``."""
    with mpmath.workprec(prec + 16):
        value = mpmath.mpf(1)
        rel = mpmath.mpf(0)
        for j in range(n + 1):
            e = cf_value(rho.shift(j), prec=prec)
            value *= e.value
            rel += e.error / e.lo
        error = value * rel * mpmath.mpf("1.01") + value * mpmath.mpf(2) ** (-prec)
    return Enclosure(value, error)


def gauss_measure(lo: float, hi: float) -> float:
    """Gauss measure ``(1/log 2) * int_lo^hi dx/(1+x)`` of ``[lo, hi]`` within [0, 1]."""
    lo, hi = max(0.0, lo), min(1.0, hi)
    if hi <= lo:
        return 0.0
    return (math.log1p(hi) - math.log1p(lo)) / math.log(2.0)


@dataclass(frozen=True)
class CFPrefix:
    """Digits of a real known only to within ``guard``.

    When ``breakpoint`` is set the last digit sits at a breakpoint: nearby
    values expand as ``[..., m]`` or ``[..., m-1, 1, ...]``, which share the
    convergent but not the digits after it.
    """

    digits: tuple[int, ...]
    breakpoint: bool

    def __len__(self) -> int:
        return len(self.digits)


def _to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, mpmath.mpf):
        man, exp = x.man_exp
        return Fraction(int(man)) * Fraction(2) ** int(exp)
    return Fraction(x)


def cf_from_real(x, guard, max_digits: int = 256) -> CFPrefix:
    """Longest digit prefix shared by every real in ``[x - guard, x + guard]``."""
    c, g = _to_fraction(x), abs(_to_fraction(guard))
    lo, hi = c - g, c + g
    digits: list[int] = []
    while len(digits) < max_digits:
        if lo <= 0 or hi >= 1:
            break
        a_lo, a_hi = 1 / hi, 1 / lo
        d_lo, d_hi = math.floor(a_lo), math.floor(a_hi)
        if d_lo == d_hi:
            digits.append(d_lo)
            lo, hi = a_lo - d_lo, a_hi - d_lo
            continue
        m = d_hi
        if d_hi == d_lo + 1 and a_lo > m - Fraction(1, 2):
            return CFPrefix(tuple(digits) + (m,), True)
        break
    return CFPrefix(tuple(digits), False)


@dataclass(frozen=True)
class EvenTypeVerdict:
    even: bool
    first_odd_index: int | None
    grows: bool
    horizon: int


def is_even_type(rho: RotationNumber, horizon: int = 32) -> EvenTypeVerdict:
    """Check that all digits are even up to ``horizon``.

    ``grows`` is a heuristic for the digits tending to infinity: they are
    non-decreasing over the horizon and the last exceeds the first.  It can
    only ever be a finite-horizon statement.
    """
    avail = rho.available()
    h = horizon if avail is None else min(horizon, avail)
    ds = rho.digits(h)
    odd = next((i for i, d in enumerate(ds) if d % 2), None)
    grows = len(ds) > 1 and all(a <= b for a, b in zip(ds, ds[1:])) and ds[-1] > ds[0]
    return EvenTypeVerdict(odd is None and h > 0, odd, grows, h)
