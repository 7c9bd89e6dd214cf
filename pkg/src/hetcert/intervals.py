"""Outward-rounded real and complex interval scalars.

Every arithmetic result encloses the exact real (or complex) result for any
selection of points from the operand intervals.  Rounding is done by
nextafter-style outward nudging of round-to-nearest results: basic IEEE ops
are correctly rounded, so one step each way is rigorous; library
transcendentals get two steps.  No FPU rounding-mode switching is used, so
values are safe to share across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

__all__ = [
    "Interval",
    "CInterval",
    "DivisionByZeroInterval",
    "NegativeSqrtDomain",
    "PI",
    "hull",
    "iv_arith",
]

_INF = math.inf


class DivisionByZeroInterval(ZeroDivisionError):
    """Divisor interval contains zero."""


class NegativeSqrtDomain(ValueError):
    """sqrt of an interval with negative lower endpoint."""


def _down(x: float) -> float:
    return math.nextafter(x, -_INF)


def _up(x: float) -> float:
    return math.nextafter(x, _INF)


def _down2(x: float) -> float:
    return math.nextafter(math.nextafter(x, -_INF), -_INF)


def _up2(x: float) -> float:
    return math.nextafter(math.nextafter(x, _INF), _INF)


# Directed rounding via error-free transformations: TwoSum gives the exact
# residual of a rounded sum, TwoProd (Dekker split) of a rounded product, so
# exactly representable results stay exact and everything else moves one ulp.

_SPLIT = 134217729.0  # 2^27 + 1
_SPLIT_GUARD = 1e150


def _two_sum(a: float, b: float) -> tuple[float, float]:
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def _dadd(a: float, b: float, up: bool) -> float:
    s, e = _two_sum(a, b)
    if math.isinf(s) or math.isinf(e):
        return s
    if up:
        return s if e <= 0.0 else _up(s)
    return s if e >= 0.0 else _down(s)


def _dmul(a: float, b: float, up: bool) -> float:
    p = a * b
    if (
        math.isinf(p)
        or abs(a) > _SPLIT_GUARD
        or abs(b) > _SPLIT_GUARD
        or (p != 0.0 and abs(p) < 1e-290)
    ):
        # splitting would overflow/underflow; fall back to a blind nudge
        return _up(p) if up else _down(p)
    c = _SPLIT * a
    ahi = c - (c - a)
    alo = a - ahi
    c = _SPLIT * b
    bhi = c - (c - b)
    blo = b - bhi
    e = ((ahi * bhi - p) + ahi * blo + alo * bhi) + alo * blo
    if up:
        return p if e <= 0.0 else _up(p)
    return p if e >= 0.0 else _down(p)


def _ddiv(a: float, b: float, up: bool) -> float:
    from fractions import Fraction

    q = a / b
    if math.isinf(q) or q != q:
        return q
    diff = Fraction(a) - Fraction(q) * Fraction(b)  # sign of (a/b - q) * b
    if diff == 0:
        return q
    exact_above = (diff > 0) == (b > 0)
    if up:
        return _up(q) if exact_above else q
    return q if exact_above else _down(q)


def _dsqrt(x: float, up: bool) -> float:
    from fractions import Fraction

    r = math.sqrt(x)
    diff = Fraction(x) - Fraction(r) * Fraction(r)
    if diff == 0:
        return r
    if up:
        return _up(r) if diff > 0 else r
    return r if diff > 0 else _down(r)


ScalarLike = Union[int, float, "Interval"]


@dataclass(frozen=True, slots=True)
class Interval:
    """Closed real interval [lo, hi] with outward-rounded arithmetic."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        if math.isnan(self.lo) or math.isnan(self.hi):
            raise ValueError("NaN interval endpoint")
        if self.lo > self.hi:
            raise ValueError(f"inverted interval [{self.lo}, {self.hi}]")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def point(v: float) -> Interval:
        v = float(v)
        return Interval(v, v)

    @staticmethod
    def from_mid_rad(mid: float, rad: float) -> Interval:
        if rad < 0:
            raise ValueError("negative radius")
        return Interval(_down(mid - rad), _up(mid + rad))

    @staticmethod
    def coerce(x: ScalarLike) -> Interval:
        if isinstance(x, Interval):
            return x
        return Interval.point(float(x))

    # -- views -------------------------------------------------------------

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def rad(self) -> float:
        m = self.mid
        return _up(max(m - self.lo, self.hi - m))

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def mag(self) -> float:
        """Upper bound on |x| over the interval."""
        return max(abs(self.lo), abs(self.hi))

    def mig(self) -> float:
        """Lower bound on |x| over the interval (0 if it straddles zero)."""
        if self.lo > 0:
            return self.lo
        if self.hi < 0:
            return -self.hi
        return 0.0

    def contains(self, v: float) -> bool:
        return self.lo <= v <= self.hi

    def contains_interval(self, other: Interval) -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def straddles_zero(self) -> bool:
        return self.lo <= 0.0 <= self.hi

    def is_strictly_negative(self) -> bool:
        return self.hi < 0.0

    def is_strictly_positive(self) -> bool:
        return self.lo > 0.0

    # -- arithmetic --------------------------------------------------------

    def __neg__(self) -> Interval:
        return Interval(-self.hi, -self.lo)

    def __abs__(self) -> Interval:
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return Interval(0.0, max(-self.lo, self.hi))

    def __add__(self, other: ScalarLike) -> Interval:
        o = Interval.coerce(other)
        return Interval(_dadd(self.lo, o.lo, False), _dadd(self.hi, o.hi, True))

    __radd__ = __add__

    def __sub__(self, other: ScalarLike) -> Interval:
        o = Interval.coerce(other)
        return Interval(_dadd(self.lo, -o.hi, False), _dadd(self.hi, -o.lo, True))

    def __rsub__(self, other: ScalarLike) -> Interval:
        return Interval.coerce(other) - self

    def __mul__(self, other: ScalarLike) -> Interval:
        o = Interval.coerce(other)
        pairs = ((self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi))
        lo = min(_dmul(x, y, False) for x, y in pairs)
        hi = max(_dmul(x, y, True) for x, y in pairs)
        return Interval(lo, hi)

    __rmul__ = __mul__

    def __truediv__(self, other: ScalarLike) -> Interval:
        o = Interval.coerce(other)
        if o.straddles_zero():
            raise DivisionByZeroInterval(f"division by {o}")
        pairs = ((self.lo, o.lo), (self.lo, o.hi), (self.hi, o.lo), (self.hi, o.hi))
        lo = min(_ddiv(x, y, False) for x, y in pairs)
        hi = max(_ddiv(x, y, True) for x, y in pairs)
        return Interval(lo, hi)

    def __rtruediv__(self, other: ScalarLike) -> Interval:
        return Interval.coerce(other) / self

    def __pow__(self, n: int) -> Interval:
        if not isinstance(n, int) or n < 0:
            raise ValueError("integer power n >= 0 only")
        out = Interval.point(1.0)
        for _ in range(n):
            out = out * self
        if n % 2 == 0 and self.straddles_zero():
            out = Interval(0.0, out.hi)
        elif n % 2 == 0:
            out = Interval(max(out.lo, 0.0), out.hi)
        return out

    def sqrt(self) -> Interval:
        if self.lo < 0:
            raise NegativeSqrtDomain(f"sqrt of {self}")
        return Interval(max(0.0, _dsqrt(self.lo, False)), _dsqrt(self.hi, True))

    def exp(self) -> Interval:
        return Interval(max(0.0, _down2(math.exp(self.lo))), _up2(math.exp(self.hi)))

    def atan(self) -> Interval:
        return Interval(_down2(math.atan(self.lo)), _up2(math.atan(self.hi)))

    def cos(self) -> Interval:
        lo, hi = self.lo, self.hi
        if hi - lo >= 2.0 * math.pi:
            return Interval(-1.0, 1.0)
        cmin = min(_down2(math.cos(lo)), _down2(math.cos(hi)))
        cmax = max(_up2(math.cos(lo)), _up2(math.cos(hi)))
        # widen at any multiple of pi possibly inside (conservative candidate range)
        k0 = math.floor(lo / math.pi) - 1
        k1 = math.ceil(hi / math.pi) + 1
        for k in range(k0, k1 + 1):
            kpi = k * PI  # interval multiple of pi
            if kpi.hi >= lo and kpi.lo <= hi:
                if k % 2 == 0:
                    cmax = 1.0
                else:
                    cmin = -1.0
        return Interval(max(-1.0, cmin), min(1.0, cmax))

    def sin(self) -> Interval:
        return (HALF_PI - self).cos()

    def intersect(self, other: Interval) -> Interval:
        lo, hi = max(self.lo, other.lo), min(self.hi, other.hi)
        if lo > hi:
            raise ValueError("empty intersection")
        return Interval(lo, hi)

    def __repr__(self) -> str:
        return f"[{self.lo!r}, {self.hi!r}]"


def hull(*xs: ScalarLike) -> Interval:
    ivs = [Interval.coerce(x) for x in xs]
    return Interval(min(v.lo for v in ivs), max(v.hi for v in ivs))


PI = Interval(_down(math.pi), _up(math.pi))
HALF_PI = Interval(_down(math.pi / 2), _up(math.pi / 2))
TWO_PI = PI * 2


CScalarLike = Union[int, float, complex, Interval, "CInterval"]


@dataclass(frozen=True, slots=True)
class CInterval:
    """Rectangular complex interval: re + i*im with Interval parts.

    Multiplication uses the rectangular four-products formula, matching the
    floating-point error analysis used for fast matrix products.
    """

    re: Interval
    im: Interval

    @staticmethod
    def coerce(x: CScalarLike) -> CInterval:
        if isinstance(x, CInterval):
            return x
        if isinstance(x, Interval):
            return CInterval(x, Interval.point(0.0))
        if isinstance(x, complex):
            return CInterval(Interval.point(x.real), Interval.point(x.imag))
        return CInterval(Interval.point(float(x)), Interval.point(0.0))

    @staticmethod
    def point(z: complex) -> CInterval:
        z = complex(z)
        return CInterval(Interval.point(z.real), Interval.point(z.imag))

    @staticmethod
    def from_mid_rad(mid: complex, rad: float) -> CInterval:
        return CInterval(
            Interval.from_mid_rad(mid.real, rad), Interval.from_mid_rad(mid.imag, rad)
        )

    @property
    def mid(self) -> complex:
        return complex(self.re.mid, self.im.mid)

    def mag(self) -> float:
        """Upper bound on |z|."""
        h = Interval.point(self.re.mag()) ** 2 + Interval.point(self.im.mag()) ** 2
        return h.sqrt().hi

    def abs(self) -> Interval:
        """Interval enclosure of |z|."""
        h = self.re**2 + self.im**2
        return h.sqrt()

    def mig(self) -> float:
        """Lower bound on |z|."""
        h = Interval.point(self.re.mig()) ** 2 + Interval.point(self.im.mig()) ** 2
        return h.sqrt().lo

    def conj(self) -> CInterval:
        return CInterval(self.re, -self.im)

    def contains(self, z: complex) -> bool:
        return self.re.contains(z.real) and self.im.contains(z.imag)

    def __neg__(self) -> CInterval:
        return CInterval(-self.re, -self.im)

    def __add__(self, other: CScalarLike) -> CInterval:
        o = CInterval.coerce(other)
        return CInterval(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other: CScalarLike) -> CInterval:
        o = CInterval.coerce(other)
        return CInterval(self.re - o.re, self.im - o.im)

    def __rsub__(self, other: CScalarLike) -> CInterval:
        return CInterval.coerce(other) - self

    def __mul__(self, other: CScalarLike) -> CInterval:
        o = CInterval.coerce(other)
        return CInterval(
            self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re
        )

    __rmul__ = __mul__

    def __truediv__(self, other: CScalarLike) -> CInterval:
        o = CInterval.coerce(other)
        den = o.re**2 + o.im**2
        if den.straddles_zero():
            raise DivisionByZeroInterval(f"division by {o}")
        num = self * o.conj()
        return CInterval(num.re / den, num.im / den)

    def __rtruediv__(self, other: CScalarLike) -> CInterval:
        return CInterval.coerce(other) / self

    def __pow__(self, n: int) -> CInterval:
        if not isinstance(n, int) or n < 0:
            raise ValueError("integer power n >= 0 only")
        out = CInterval.point(1.0 + 0.0j)
        base = self
        while n > 0:
            if n & 1:
                out = out * base
            n >>= 1
            if n:
                base = base * base
        return out

    def __repr__(self) -> str:
        return f"({self.re} + i*{self.im})"


C_ZERO = CInterval.point(0.0 + 0.0j)
C_ONE = CInterval.point(1.0 + 0.0j)


def iv_arith(op: str, a, b=None):
    """Name-dispatched scalar interval arithmetic.

    Accepts Interval or CInterval operands; binary ops require both when
    applicable.  Provided as the uniform entry point mirroring the operator
    methods.
    """
    unary = {"neg": lambda x: -x, "abs": lambda x: abs(x) if isinstance(x, Interval) else x.abs(), "sqrt": lambda x: x.sqrt()}
    binary = {
        "add": lambda x, y: x + y,
        "sub": lambda x, y: x - y,
        "mul": lambda x, y: x * y,
        "div": lambda x, y: x / y,
    }
    if op in unary:
        return unary[op](a)
    if op in binary:
        if b is None:
            raise TypeError(f"{op} needs two operands")
        return binary[op](a, b)
    raise ValueError(f"unknown op {op!r}")
