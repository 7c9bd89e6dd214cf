"""Rigorous complex interval matrices on top of numpy.

An :class:`IMatrix` stores a midpoint array together with componentwise radii
``A = mid ± r1 ± i*r2`` (real radii of the real and imaginary parts).  All
operations return enclosures: midpoints are computed in round-to-nearest
float64 and the committed rounding error is absorbed into the radii using
standard a-priori error bounds for floating-point sums and products.  This
keeps the heavy linear algebra in BLAS while staying fully rigorous.

Complex midpoint products are evaluated with the rectangular four-real-
products formula (never a Gauss/Karatsuba trick), which is the formula the
error constants below are derived for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .intervals import CInterval, Interval

__all__ = [
    "DimensionMismatch",
    "FlopsErrorParams",
    "IMatrix",
    "mat_product_error_bound",
    "op_norm_finite",
]

EPS = 2.0**-52  # paper-style unit roundoff bound for |fl(x op y) - (x op y)| / |x op y|


class DimensionMismatch(ValueError):
    """Operands are not conformable."""


# ---------------------------------------------------------------------------
# upward-rounded nonnegative primitives
# ---------------------------------------------------------------------------


def _up_arr(x: np.ndarray) -> np.ndarray:
    return np.nextafter(x, np.inf)


def _gamma(n: int) -> float:
    """gamma_n = n*eps / (1 - n*eps), an upper bound for accumulated
    relative error of n rounded operations.  Requires n*eps << 1."""
    ne = n * EPS
    if ne >= 0.25:
        raise OverflowError("dimension too large for the error model")
    return ne / (1.0 - ne) * (1.0 + 4.0 * EPS)


def up_scale(x: np.ndarray, n_ops: int) -> np.ndarray:
    """Upper bound of a nonnegative exact quantity given its float evaluation
    ``x`` accumulated through at most ``n_ops`` rounded nonnegative ops."""
    return _up_arr(x * (1.0 + _gamma(n_ops)))


def upper_abs(z: np.ndarray) -> np.ndarray:
    """Elementwise upper bound of |z| for a complex array."""
    return up_scale(np.abs(z), 2)


def lower_abs(z: np.ndarray) -> np.ndarray:
    """Elementwise lower bound of |z|."""
    a = np.abs(z) * (1.0 - _gamma(2))
    return np.maximum(np.nextafter(a, -np.inf), 0.0)


def upper_nonneg_mm(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Upper bound of the exact product of nonnegative matrices/vectors."""
    k = p.shape[-1]
    return up_scale(p @ q, k + 1)


def upper_nonneg_sum(terms: Sequence[np.ndarray]) -> np.ndarray:
    """Upper bound of an exact sum of nonnegative upper-bound arrays."""
    acc = terms[0]
    for t in terms[1:]:
        acc = acc + t
    return up_scale(acc, len(terms))


# ---------------------------------------------------------------------------
# flops error parameters (Float64 matrix products)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlopsErrorParams:
    """Relative error budget for an n-term floating-point inner product."""

    eps: float
    n: int
    M_eps: float

    @staticmethod
    def for_inner_dim(n: int, eps: float = EPS) -> FlopsErrorParams:
        e = Interval.point(eps)
        m = (1 + 2 * e + e * e) * _pow_interval(1 + e, max(n - 1, 0)) - 1
        return FlopsErrorParams(eps=eps, n=n, M_eps=m.hi)


def _pow_interval(x: Interval, n: int) -> Interval:
    out = Interval.point(1.0)
    for _ in range(n):
        out = out * x
    return out


# ---------------------------------------------------------------------------
# IMatrix
# ---------------------------------------------------------------------------


@dataclass
class IMatrix:
    """Complex interval matrix ``mid ± r1 ± i*r2`` (entrywise radii)."""

    mid: np.ndarray  # complex128, shape (rows, cols)
    r1: np.ndarray  # float64 >= 0, radius of real part
    r2: np.ndarray  # float64 >= 0, radius of imaginary part

    def __post_init__(self) -> None:
        self.mid = np.asarray(self.mid, dtype=np.complex128)
        self.r1 = np.asarray(self.r1, dtype=np.float64)
        self.r2 = np.asarray(self.r2, dtype=np.float64)
        if self.mid.shape != self.r1.shape or self.mid.shape != self.r2.shape:
            raise DimensionMismatch("mid/radius shapes differ")
        if np.any(self.r1 < 0) or np.any(self.r2 < 0):
            raise ValueError("negative radius")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def exact(mid: np.ndarray) -> IMatrix:
        mid = np.asarray(mid, dtype=np.complex128)
        z = np.zeros(mid.shape)
        return IMatrix(mid, z, z)

    @staticmethod
    def zeros(shape) -> IMatrix:
        return IMatrix.exact(np.zeros(shape, dtype=np.complex128))

    @staticmethod
    def eye(n: int) -> IMatrix:
        return IMatrix.exact(np.eye(n, dtype=np.complex128))

    @staticmethod
    def from_cintervals(grid: Sequence[Sequence[CInterval]]) -> IMatrix:
        rows = len(grid)
        cols = len(grid[0])
        mid = np.zeros((rows, cols), dtype=np.complex128)
        r1 = np.zeros((rows, cols))
        r2 = np.zeros((rows, cols))
        for i in range(rows):
            for j in range(cols):
                z = grid[i][j]
                mid[i, j] = complex(z.re.mid, z.im.mid)
                r1[i, j] = z.re.rad
                r2[i, j] = z.im.rad
        return IMatrix(mid, r1, r2)

    def entry(self, i: int, j: int) -> CInterval:
        z = self.mid[i, j]
        return CInterval(
            Interval.from_mid_rad(z.real, float(self.r1[i, j])),
            Interval.from_mid_rad(z.imag, float(self.r2[i, j])),
        )

    # -- views -------------------------------------------------------------

    @property
    def shape(self):
        return self.mid.shape

    @property
    def rows(self) -> int:
        return self.mid.shape[0]

    @property
    def cols(self) -> int:
        return self.mid.shape[1]

    def abs_upper(self) -> np.ndarray:
        """Entrywise upper bound of |A| over the enclosure."""
        return upper_nonneg_sum([upper_abs(self.mid), self.r1, self.r2])

    def rad_mag(self) -> np.ndarray:
        """Entrywise upper bound of the modulus radius."""
        return up_scale(np.hypot(self.r1, self.r2), 2)

    def conjugate_transpose(self) -> IMatrix:
        return IMatrix(self.mid.conj().T, self.r1.T, self.r2.T)

    # -- arithmetic --------------------------------------------------------

    def __neg__(self) -> IMatrix:
        return IMatrix(-self.mid, self.r1, self.r2)

    def __add__(self, other: IMatrix) -> IMatrix:
        if self.shape != other.shape:
            raise DimensionMismatch("add: shapes differ")
        mid = self.mid + other.mid
        tiny = 5e-324
        slack1 = up_scale(np.abs(mid.real), 1) * EPS + tiny
        slack2 = up_scale(np.abs(mid.imag), 1) * EPS + tiny
        r1 = upper_nonneg_sum([self.r1, other.r1, slack1])
        r2 = upper_nonneg_sum([self.r2, other.r2, slack2])
        return IMatrix(mid, r1, r2)

    def __sub__(self, other: IMatrix) -> IMatrix:
        return self + (-other)

    def scale(self, c: CInterval | complex | float) -> IMatrix:
        c = CInterval.coerce(c)
        cm = c.mid
        cr1, cr2 = c.re.rad, c.im.rad
        mid = self.mid * cm
        amr, ami = np.abs(self.mid.real), np.abs(self.mid.imag)
        # |Re((A-Am)c)| <= r1|Re c| + r2|Im c| etc., plus midpoint scaling slack
        acr, aci = abs(cm.real), abs(cm.imag)
        tiny = 2e-323
        r1 = upper_nonneg_sum(
            [
                self.r1 * (acr + cr1),
                self.r2 * (aci + cr2),
                amr * cr1,
                ami * cr2,
                up_scale(np.abs(mid.real), 4) * 4 * EPS + tiny,
            ]
        )
        r2 = upper_nonneg_sum(
            [
                self.r1 * (aci + cr2),
                self.r2 * (acr + cr1),
                amr * cr2,
                ami * cr1,
                up_scale(np.abs(mid.imag), 4) * 4 * EPS + tiny,
            ]
        )
        return IMatrix(mid, up_scale(r1, 6), up_scale(r2, 6))

    def matmul(self, other: IMatrix) -> IMatrix:
        if self.cols != other.rows:
            raise DimensionMismatch("matmul: inner dimensions differ")
        ar, ai = np.ascontiguousarray(self.mid.real), np.ascontiguousarray(self.mid.imag)
        br, bi = np.ascontiguousarray(other.mid.real), np.ascontiguousarray(other.mid.imag)
        # rectangular four-products midpoint
        mre = ar @ br - ai @ bi
        mim = ar @ bi + ai @ br
        mid = mre + 1j * mim
        n = self.cols
        g = _gamma(n + 2)
        abs_a = upper_nonneg_sum([np.abs(ar), np.abs(ai)])
        abs_b = upper_nonneg_sum([np.abs(br), np.abs(bi)])
        flops = up_scale(upper_nonneg_mm(abs_a, abs_b) * g + n * 5e-324, 3)
        ra = upper_nonneg_sum([self.r1, self.r2])
        rb = upper_nonneg_sum([other.r1, other.r2])
        cross = upper_nonneg_sum(
            [
                upper_nonneg_mm(abs_a, rb),
                upper_nonneg_mm(ra, abs_b),
                upper_nonneg_mm(ra, rb),
                flops,
            ]
        )
        return IMatrix(mid, cross, cross.copy())

    def matvec(self, other: IMatrix) -> IMatrix:
        return self.matmul(other)

    def __matmul__(self, other: IMatrix) -> IMatrix:
        return self.matmul(other)


# ---------------------------------------------------------------------------
# weighted l1 operator norm and the Appendix-style product error bound
# ---------------------------------------------------------------------------


def _as_abs_matrix(m) -> np.ndarray:
    if isinstance(m, IMatrix):
        return m.abs_upper()
    a = np.asarray(m)
    if np.iscomplexobj(a):
        return upper_abs(a)
    return np.abs(a)


def op_norm_finite(m, w_in: np.ndarray, w_out: np.ndarray) -> Interval:
    """Weighted l1 -> l1 operator norm of a finite block.

    Returns an interval enclosure of ``sup_j (sum_i w_out[i] |M_ij|) / w_in[j]``.
    """
    w_in = np.asarray(w_in, dtype=np.float64)
    w_out = np.asarray(w_out, dtype=np.float64)
    if np.any(w_in <= 0) or np.any(w_out <= 0):
        raise ValueError("weights must be strictly positive")
    a = _as_abs_matrix(m)
    if a.shape != (w_out.size, w_in.size):
        raise DimensionMismatch("weight lengths do not match matrix shape")
    if a.size == 0:
        return Interval.point(0.0)
    cols = w_out @ a
    ub = float(np.max(up_scale(up_scale(cols, w_out.size + 1) / w_in, 1)))
    # lower endpoint from the inner (lower-bounded) absolute values
    if isinstance(m, IMatrix):
        inner = np.maximum(lower_abs(m.mid) - m.r1 - m.r2, 0.0)
    else:
        arr = np.asarray(m)
        inner = lower_abs(arr) if np.iscomplexobj(arr) else np.abs(arr)
    lo_cols = (w_out @ inner) * (1.0 - _gamma(w_out.size + 2))
    lb = float(max(np.max(np.nextafter(lo_cols / w_in, -np.inf)), 0.0))
    return Interval(min(lb, ub), ub)


def mat_product_error_bound(
    a: IMatrix,
    b: IMatrix,
    norm_of_residual_fl,
    w_in: np.ndarray | None = None,
    w_out: np.ndarray | None = None,
) -> Interval:
    """Rigorous upper bound on ||I - AB|| from a floating-point residual norm.

    ``norm_of_residual_fl`` is the (possibly extended-precision) norm of
    ``I - fl(mid(A) mid(B))`` supplied by the caller.  The returned bound is

        residual + M_eps * C(Am, Bm) + 2 rho ||Am|| + 2 r ||Bm|| + 4 r rho

    with ``r``/``rho`` the largest radius norms of A and B, and all norms the
    weighted l1 operator norm (unit weights by default).
    """
    if a.cols != b.rows:
        raise DimensionMismatch("product not conformable")
    n = a.cols
    if w_in is None:
        w_in = np.ones(b.cols)
    if w_out is None:
        w_out = np.ones(a.rows)
    w_mid = np.ones(n)
    params = FlopsErrorParams.for_inner_dim(n)

    def nrm(mat: np.ndarray, wi, wo) -> Interval:
        return op_norm_finite(mat, wi, wo)

    a_re, a_im = np.abs(a.mid.real), np.abs(a.mid.imag)
    b_re, b_im = np.abs(b.mid.real), np.abs(b.mid.imag)
    c_ab = (nrm(a_re, w_mid, w_out) + nrm(a_im, w_mid, w_out)) * (
        nrm(b_re, w_in, w_mid) + nrm(b_im, w_in, w_mid)
    )
    r = Interval(0.0, max(nrm(a.r1, w_mid, w_out).hi, nrm(a.r2, w_mid, w_out).hi))
    rho = Interval(0.0, max(nrm(b.r1, w_in, w_mid).hi, nrm(b.r2, w_in, w_mid).hi))
    norm_a = nrm(upper_abs(a.mid), w_mid, w_out)
    norm_b = nrm(upper_abs(b.mid), w_in, w_mid)
    res = Interval.coerce(norm_of_residual_fl)
    total = (
        res
        + Interval.point(params.M_eps) * c_ab
        + 2 * rho * norm_a
        + 2 * r * norm_b
        + 4 * r * rho
    )
    return Interval(max(res.lo, 0.0), total.hi)
