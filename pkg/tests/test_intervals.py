"""Scalar interval arithmetic: containment, tightness, domain errors."""

import math
from fractions import Fraction

import numpy as np
import pytest

from hetcert.intervals import (
    CInterval,
    DivisionByZeroInterval,
    Interval,
    NegativeSqrtDomain,
    PI,
    iv_arith,
)


def test_exact_endpoint_arithmetic():
    a = Interval(1, 2) + Interval(3, 4)
    assert (a.lo, a.hi) == (4.0, 6.0)
    m = Interval(-1, 1) * Interval(-1, 1)
    assert (m.lo, m.hi) == (-1.0, 1.0)


def test_division_tightness_vs_rational_oracle():
    d = Interval(1, 1) / Interval(3, 3)
    third = Fraction(1, 3)
    assert Fraction(d.lo) <= third <= Fraction(d.hi)
    assert d.hi - d.lo <= 2 * math.ulp(1.0 / 3.0)


def test_division_by_zero_raises():
    with pytest.raises(DivisionByZeroInterval):
        Interval(1, 1) / Interval(-1, 1)


def test_sqrt_domain():
    with pytest.raises(NegativeSqrtDomain):
        Interval(-1, 1).sqrt()
    s = Interval(4, 4).sqrt()
    assert (s.lo, s.hi) == (2.0, 2.0)


def test_nan_rejected():
    with pytest.raises(ValueError):
        Interval(float("nan"), 1.0)


def test_containment_randomized():
    # every op result encloses exact rational evaluation of sampled points
    rng = np.random.default_rng(7)
    ops = {
        "add": lambda x, y: x + y,
        "sub": lambda x, y: x - y,
        "mul": lambda x, y: x * y,
        "div": lambda x, y: x / y,
    }
    for _ in range(2000):
        lo1, w1 = rng.standard_normal(), abs(rng.standard_normal())
        lo2, w2 = abs(rng.standard_normal()) + 0.5, abs(rng.standard_normal())
        A = Interval(lo1, lo1 + w1)
        B = Interval(lo2, lo2 + w2)  # bounded away from 0 for div
        for name, op in ops.items():
            out = op(A, B)
            for ta, tb in ((0.0, 0.0), (1.0, 1.0), (0.5, 0.3), (0.2, 0.9)):
                a = Fraction(A.lo) + Fraction(ta) * (Fraction(A.hi) - Fraction(A.lo))
                b = Fraction(B.lo) + Fraction(tb) * (Fraction(B.hi) - Fraction(B.lo))
                exact = {
                    "add": a + b, "sub": a - b, "mul": a * b, "div": a / b,
                }[name]
                assert Fraction(out.lo) <= exact <= Fraction(out.hi), name


def test_monotonicity_inclusion():
    rng = np.random.default_rng(3)
    for _ in range(300):
        lo, w = rng.standard_normal(), abs(rng.standard_normal())
        A = Interval(lo, lo + w)
        A2 = Interval(lo - 0.1, lo + w + 0.1)
        B = Interval(2.0, 3.0)
        for op in ("add", "sub", "mul", "div"):
            small = iv_arith(op, A, B)
            big = iv_arith(op, A2, B)
            assert big.contains_interval(small), op


def test_complex_four_products_containment():
    rng = np.random.default_rng(11)
    for _ in range(500):
        z1 = complex(rng.standard_normal(), rng.standard_normal())
        z2 = complex(rng.standard_normal(), rng.standard_normal())
        a = CInterval.from_mid_rad(z1, 1e-9)
        b = CInterval.from_mid_rad(z2, 1e-9)
        prod = a * b
        assert prod.contains(z1 * z2)


def test_complex_division_roundtrip():
    z = CInterval.point(1 + 2j)
    w = CInterval.point(3 - 1j)
    q = (z * w) / w
    assert q.contains(1 + 2j)


def test_cos_enclosure():
    c = Interval(0.0, 3.2).cos()
    assert c.lo == -1.0  # pi inside
    assert c.contains(math.cos(0.1))
    s = PI.sin()
    assert s.contains(0.0)
    assert s.hi - s.lo < 1e-14


def test_atan_monotone():
    a = Interval(0.5, 1.5).atan()
    assert a.contains(math.atan(0.7))
    assert a.lo <= math.atan(0.5) <= math.atan(1.5) <= a.hi


def test_pow_even_straddle():
    p = Interval(-1, 2) ** 2
    assert p.lo == 0.0 and p.hi >= 4.0
