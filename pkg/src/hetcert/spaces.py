"""Weighted l1 coefficient spaces and their Banach-algebra operations.

Five coefficient families are supported, each with a geometric weight nu:

* ``COSINE_FOURIER`` -- one-sided over N, norm |x0| + 2*sum |xk| nu^k.  A
  parity flag distinguishes cosine-coded from sine-coded sequences stored in
  the same container.
* ``EXP_FOURIER``    -- two-sided over Z, norm sum |xk| nu^|k|.
* ``FOURIER_TAYLOR`` -- over Z x N, norm sum |x_{n,m}| nu^(|n|+m).
* ``TAYLOR2``        -- over N^2, norm sum |x_{n,m}| nu^(n+m).
* ``CHEBYSHEV``      -- one-sided over N with the cosine-type norm and
  convolution (Chebyshev products behave like cosine series).

Sequences are stored densely up to their support; an optional scalar
``tail`` field carries a norm bound for an unrepresented tail (0 for exactly
finite sequences).  Arithmetic requires tail-free operands; tails enter only
norms and series evaluation.  Coefficients are complex midpoints with
optional rectangular radii, and all operations produce enclosures.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import convolve2d

from .intervals import CInterval, Interval
from .ivmatrix import _gamma, up_scale, upper_abs, lower_abs, upper_nonneg_sum

__all__ = [
    "SpaceKind",
    "Parity",
    "SpaceWeights",
    "TruncationScheme",
    "WeightedSeq",
    "KindMismatch",
    "NonzeroSineConstant",
    "DomainViolation",
    "convolve",
    "seq_power",
    "seq_norm",
    "project",
    "strip",
    "unit_seq",
    "cos_sin_to_exponential",
    "double_frequency_embed",
    "eval_series",
    "mode_list",
    "seq_to_records",
    "seq_from_records",
]


class KindMismatch(TypeError):
    """Operands live in different coefficient spaces."""


class NonzeroSineConstant(ValueError):
    """Sine-coded sequence with a nonzero index-0 coefficient."""


class DomainViolation(ValueError):
    """Evaluation point outside the kind's convergence domain."""


class SpaceKind(Enum):
    COSINE_FOURIER = "cosine"
    EXP_FOURIER = "exp"
    FOURIER_TAYLOR = "fourier_taylor"
    TAYLOR2 = "taylor2"
    CHEBYSHEV = "chebyshev"


class Parity(Enum):
    COS = "cos"
    SIN = "sin"


@dataclass(frozen=True)
class SpaceWeights:
    """Geometric weights per space; fixed per run."""

    nu_gamma: float = 1.4
    nu_v: float = 1.4
    nu_w: float = 1.4
    nu_p: float = 1.4
    nu_a: float = 1.1

    def __post_init__(self) -> None:
        if self.nu_gamma <= 1 or self.nu_v <= 1:
            raise ValueError("nu_gamma and nu_v must be > 1")
        if self.nu_w < 1 or self.nu_a < 1 or self.nu_p < 1:
            # nu_p >= 1 required for the tail estimates used by the validator
            raise ValueError("nu_w, nu_a, nu_p must be >= 1")

    def for_kind(self, kind: SpaceKind) -> float:
        return {
            SpaceKind.COSINE_FOURIER: self.nu_gamma,
            SpaceKind.EXP_FOURIER: self.nu_v,
            SpaceKind.FOURIER_TAYLOR: self.nu_w,
            SpaceKind.TAYLOR2: self.nu_p,
            SpaceKind.CHEBYSHEV: self.nu_a,
        }[kind]


@dataclass(frozen=True)
class TruncationScheme:
    """Finite-projection orders for each space."""

    N_gamma: int
    N_v: int
    N_wF: int
    N_wT: int
    N_a: int
    N_p: int

    def __post_init__(self) -> None:
        for name in ("N_gamma", "N_v", "N_wF", "N_wT", "N_a", "N_p"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.N_wF < self.N_v:
            raise ValueError("N_wF must be >= N_v (manifold holds the bundle data)")

    def cutoff(self, kind: SpaceKind):
        return {
            SpaceKind.COSINE_FOURIER: self.N_gamma,
            SpaceKind.EXP_FOURIER: self.N_v,
            SpaceKind.FOURIER_TAYLOR: (self.N_wF, self.N_wT),
            SpaceKind.TAYLOR2: self.N_p,
            SpaceKind.CHEBYSHEV: self.N_a,
        }[kind]


# ---------------------------------------------------------------------------
# the sequence container
# ---------------------------------------------------------------------------


@dataclass
class WeightedSeq:
    """Coefficient sequence with kind, weight, optional radii and tail bound.

    Storage layout by kind:
      one-sided kinds: ``mid[k]`` for k = 0..K;
      EXP_FOURIER: ``mid[k + halfwidth]`` for k = -halfwidth..halfwidth;
      FOURIER_TAYLOR: ``mid[n + halfwidth, m]``;
      TAYLOR2: ``mid[n, m]`` over a rectangle (norm counts all entries).
    """

    kind: SpaceKind
    weight: float
    mid: np.ndarray
    r1: np.ndarray | None = None
    r2: np.ndarray | None = None
    parity: Parity = Parity.COS
    tail: float = 0.0

    def __post_init__(self) -> None:
        self.mid = np.atleast_1d(np.asarray(self.mid, dtype=np.complex128))
        if self.kind in (SpaceKind.FOURIER_TAYLOR, SpaceKind.TAYLOR2):
            if self.mid.ndim != 2:
                raise ValueError("2-d coefficients expected")
        elif self.mid.ndim != 1:
            raise ValueError("1-d coefficients expected")
        if self.kind is SpaceKind.EXP_FOURIER and self.mid.size % 2 == 0:
            raise ValueError("two-sided storage needs odd length")
        if self.kind is SpaceKind.FOURIER_TAYLOR and self.mid.shape[0] % 2 == 0:
            raise ValueError("two-sided first axis needs odd length")
        if self.tail < 0:
            raise ValueError("tail bound must be >= 0")
        for r in (self.r1, self.r2):
            if r is not None and np.asarray(r).shape != self.mid.shape:
                raise ValueError("radius shape mismatch")

    # -- basics ------------------------------------------------------------

    @property
    def halfwidth(self) -> int:
        if self.kind is SpaceKind.EXP_FOURIER:
            return (self.mid.size - 1) // 2
        if self.kind is SpaceKind.FOURIER_TAYLOR:
            return (self.mid.shape[0] - 1) // 2
        raise KindMismatch("halfwidth is defined for two-sided kinds only")

    def is_exact(self) -> bool:
        return self.r1 is None and self.r2 is None

    def rad_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        z = np.zeros(self.mid.shape)
        return (
            z if self.r1 is None else np.asarray(self.r1, dtype=np.float64),
            z if self.r2 is None else np.asarray(self.r2, dtype=np.float64),
        )

    def coeff(self, index) -> CInterval:
        idx = self._storage_index(index)
        r1, r2 = self.rad_arrays()
        z = self.mid[idx]
        return CInterval(
            Interval.from_mid_rad(z.real, float(r1[idx])),
            Interval.from_mid_rad(z.imag, float(r2[idx])),
        )

    def _storage_index(self, index):
        if self.kind is SpaceKind.EXP_FOURIER:
            k = int(index)
            if abs(k) > self.halfwidth:
                raise IndexError(index)
            return k + self.halfwidth
        if self.kind is SpaceKind.FOURIER_TAYLOR:
            n, m = index
            if abs(n) > self.halfwidth or not (0 <= m < self.mid.shape[1]):
                raise IndexError(index)
            return (n + self.halfwidth, m)
        if self.kind is SpaceKind.TAYLOR2:
            n, m = index
            return (int(n), int(m))
        return int(index)

    def copy(self) -> WeightedSeq:
        return replace(
            self,
            mid=self.mid.copy(),
            r1=None if self.r1 is None else self.r1.copy(),
            r2=None if self.r2 is None else self.r2.copy(),
        )

    def _require_exact_tail(self) -> None:
        if self.tail != 0.0:
            raise ValueError("arithmetic requires tail-free sequences")


# ---------------------------------------------------------------------------
# weights and norms
# ---------------------------------------------------------------------------


def _geom_pows(nu: float, kmax: int, direction: str) -> np.ndarray:
    """nu^0..nu^kmax by cumulative products, rounded per ``direction``."""
    pows = np.empty(kmax + 1)
    pows[0] = 1.0
    if kmax > 0:
        pows[1:] = np.cumprod(np.full(kmax, nu))
    if direction == "up":
        return up_scale(pows, kmax + 2)
    if direction == "down":
        out = pows * (1.0 - _gamma(kmax + 2))
        return np.maximum(np.nextafter(out, -np.inf), 0.0)
    return pows


def weight_vector(kind: SpaceKind, shape, nu: float, direction: str = "nearest") -> np.ndarray:
    """Per-mode norm weights matching the storage layout.

    ``direction`` = 'up'/'down' gives rigorous one-sided enclosures of the
    exact geometric weights (used by norm upper/lower bounds respectively).
    """
    if kind in (SpaceKind.COSINE_FOURIER, SpaceKind.CHEBYSHEV):
        n = shape[0] if isinstance(shape, tuple) else shape
        k = np.arange(n)
        pows = _geom_pows(nu, n - 1, direction)
        return np.where(k == 0, 1.0, 2.0) * pows
    if kind is SpaceKind.EXP_FOURIER:
        n = shape[0] if isinstance(shape, tuple) else shape
        half = (n - 1) // 2
        k = np.abs(np.arange(-half, half + 1))
        return _geom_pows(nu, half, direction)[k]
    if kind is SpaceKind.FOURIER_TAYLOR:
        rows, cols = shape
        half = (rows - 1) // 2
        n = np.abs(np.arange(-half, half + 1))[:, None]
        m = np.arange(cols)[None, :]
        return _geom_pows(nu, half + cols - 1, direction)[n + m]
    if kind is SpaceKind.TAYLOR2:
        rows, cols = shape
        n = np.arange(rows)[:, None]
        m = np.arange(cols)[None, :]
        return _geom_pows(nu, rows + cols - 2, direction)[n + m]
    raise KindMismatch(kind)


def seq_norm(x: WeightedSeq) -> Interval:
    """Enclosure of the weighted l1 norm, tail bound included."""
    w_up = weight_vector(x.kind, x.mid.shape, x.weight, "up")
    w_dn = weight_vector(x.kind, x.mid.shape, x.weight, "down")
    r1, r2 = x.rad_arrays()
    hi_abs = upper_nonneg_sum([upper_abs(x.mid), r1, r2])
    lo_abs = np.maximum(lower_abs(x.mid) - r1 - r2, 0.0)
    n_ops = x.mid.size + 2
    hi = float(up_scale(np.sum(hi_abs * w_up) + x.tail, n_ops))
    lo = float(max(np.sum(lo_abs * w_dn) * (1.0 - _gamma(n_ops)), 0.0))
    return Interval(min(lo, hi), hi)


def sup_mode_over_weight(x: WeightedSeq) -> float:
    """Upper bound of sup_k |x_k| / w(k), the dual-norm ingredient."""
    w_dn = weight_vector(x.kind, x.mid.shape, x.weight, "down")
    r1, r2 = x.rad_arrays()
    hi_abs = upper_nonneg_sum([upper_abs(x.mid), r1, r2])
    if x.tail != 0.0:
        raise ValueError("dual norm needs a tail-free sequence")
    if hi_abs.size == 0:
        return 0.0
    return float(np.max(up_scale(hi_abs / w_dn, 1)))


# ---------------------------------------------------------------------------
# convolutions
# ---------------------------------------------------------------------------


def _conv1(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.convolve(a, b)


def _conv2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return convolve2d(a, b)  # direct method, full output


def _conv_enclosure(am, ar, bm, br, conv):
    """Midpoint/radius convolution with rigorous rounding slack.

    ``ar``/``br`` are modulus-style radius arrays (shared for re and im).
    Returns (mid, rad) with rad a shared modulus bound.
    """
    mid = conv(am, bm)
    aa = upper_abs(am)
    bb = upper_abs(bm)
    inner = min(am.size, bm.size)
    g = _gamma(4 * inner + 8)
    rad = upper_nonneg_sum(
        [
            conv(aa, br),
            conv(ar, bb),
            conv(ar, br),
            conv(aa, bb) * g + 5e-324,
        ]
    )
    return mid, up_scale(rad, 6)


def is_rigorous(*seqs: WeightedSeq) -> bool:
    return any(not s.is_exact() for s in seqs)


def with_zero_radii(x: WeightedSeq) -> WeightedSeq:
    """Mark a numerical sequence as rigorous data (its floats taken exact)."""
    if not x.is_exact():
        return x
    return replace(x, mid=x.mid.copy(), r1=np.zeros(x.mid.shape), r2=np.zeros(x.mid.shape))


def _lift_parity(x: WeightedSeq) -> np.ndarray:
    """Two-sided real-structure lifting used by cosine-type products."""
    k = np.arange(-(x.mid.size - 1), x.mid.size)
    vals = x.mid[np.abs(k)]
    if x.parity is Parity.SIN:
        vals = vals * np.sign(k)
    return vals


def _lift_parity_rad(rad: np.ndarray) -> np.ndarray:
    k = np.arange(-(rad.size - 1), rad.size)
    return rad[np.abs(k)]


def convolve(a: WeightedSeq, b: WeightedSeq) -> WeightedSeq:
    """Discrete convolution of the matching type (exact supports).

    Numerical (radius-free) operands stay numerical; if either operand
    carries radii the result is a rigorous enclosure.
    """
    if a.kind is not b.kind:
        raise KindMismatch(f"{a.kind} * {b.kind}")
    if a.weight != b.weight:
        raise KindMismatch("weights differ")
    a._require_exact_tail()
    b._require_exact_tail()
    rig = is_rigorous(a, b)
    ar1, ar2 = a.rad_arrays()
    br1, br2 = b.rad_arrays()
    ar = upper_nonneg_sum([ar1, ar2])
    br = upper_nonneg_sum([br1, br2])

    if a.kind in (SpaceKind.COSINE_FOURIER, SpaceKind.CHEBYSHEV):
        la, lb = _lift_parity(a), _lift_parity(b)
        sin_out = (a.parity is Parity.SIN) != (b.parity is Parity.SIN)
        sign = -1.0 if (a.parity is Parity.SIN and b.parity is Parity.SIN) else 1.0
        parity = Parity.SIN if sin_out else Parity.COS
        if not rig:
            mid2 = _conv1(la, lb)
            out_mid = sign * mid2[mid2.size // 2:]
            if sin_out:
                out_mid = out_mid.copy()
                out_mid[0] = 0.0
            return WeightedSeq(a.kind, a.weight, out_mid, parity=parity)
        ra, rb = _lift_parity_rad(ar), _lift_parity_rad(br)
        mid2, rad2 = _conv_enclosure(la, ra, lb, rb, _conv1)
        center = mid2.size // 2
        out_mid = sign * mid2[center:]
        out_rad = rad2[center:].copy()
        if sin_out:
            out_mid = out_mid.copy()
            out_mid[0] = 0.0
            out_rad[0] = 0.0
        return WeightedSeq(a.kind, a.weight, out_mid, out_rad, out_rad.copy(), parity)

    conv = _conv1 if a.kind is SpaceKind.EXP_FOURIER else _conv2
    if a.kind not in (SpaceKind.EXP_FOURIER, SpaceKind.FOURIER_TAYLOR, SpaceKind.TAYLOR2):
        raise KindMismatch(a.kind)
    if not rig:
        return WeightedSeq(a.kind, a.weight, conv(a.mid, b.mid))
    mid, rad = _conv_enclosure(a.mid, ar, b.mid, br, conv)
    return WeightedSeq(a.kind, a.weight, mid, rad, rad.copy())


def seq_scale(x: WeightedSeq, c) -> WeightedSeq:
    """Scale a sequence by a scalar; rigorous iff either side is."""
    rig = (not x.is_exact()) or isinstance(c, (Interval, CInterval))
    if isinstance(c, Interval):
        c = CInterval(c, Interval.point(0.0))
    if isinstance(c, CInterval):
        cm = c.mid
        cr = math.nextafter(c.re.rad + c.im.rad, math.inf)
    else:
        cm, cr = complex(c), 0.0
    mid = x.mid * cm
    if not rig:
        return WeightedSeq(x.kind, x.weight, mid, parity=x.parity, tail=0.0)
    x._require_exact_tail()
    r1, r2 = x.rad_arrays()
    rx = upper_nonneg_sum([r1, r2])
    cmag = up_scale(np.array(abs(cm)), 2)
    absx = upper_abs(x.mid)
    rr = upper_nonneg_sum(
        [
            rx * (cmag + cr),
            absx * cr,
            upper_abs(mid) * 8e-16 + 5e-324,
        ]
    )
    rr = up_scale(rr, 4)
    return WeightedSeq(x.kind, x.weight, mid, rr, rr.copy(), x.parity, 0.0)


def seq_add(a: WeightedSeq, b: WeightedSeq) -> WeightedSeq:
    """Sum of two sequences (supports may differ in size)."""
    if a.kind is not b.kind or a.weight != b.weight:
        raise KindMismatch("adding sequences from different spaces")
    if a.parity is not b.parity:
        raise KindMismatch("adding sequences of different parity")
    a._require_exact_tail()
    b._require_exact_tail()
    rig = is_rigorous(a, b)
    two_sided = a.kind in (SpaceKind.EXP_FOURIER, SpaceKind.FOURIER_TAYLOR)
    if a.mid.ndim == 1:
        n = max(a.mid.size, b.mid.size)
        mid = np.zeros(n, dtype=np.complex128)
        rad = np.zeros(n)
        for s in (a, b):
            off = (n - s.mid.size) // 2 if two_sided else 0
            sl = slice(off, off + s.mid.size)
            mid[sl] += s.mid
            if rig:
                r1, r2 = s.rad_arrays()
                rad[sl] += r1 + r2
    else:
        rows = max(a.mid.shape[0], b.mid.shape[0])
        cols = max(a.mid.shape[1], b.mid.shape[1])
        mid = np.zeros((rows, cols), dtype=np.complex128)
        rad = np.zeros((rows, cols))
        for s in (a, b):
            roff = (rows - s.mid.shape[0]) // 2 if two_sided else 0
            sl = (slice(roff, roff + s.mid.shape[0]), slice(0, s.mid.shape[1]))
            mid[sl] += s.mid
            if rig:
                r1, r2 = s.rad_arrays()
                rad[sl] += r1 + r2
    if not rig:
        return WeightedSeq(a.kind, a.weight, mid, parity=a.parity)
    rad = up_scale(rad + upper_abs(mid) * 4e-16 + 5e-324, 4)
    return WeightedSeq(a.kind, a.weight, mid, rad, rad.copy(), a.parity, 0.0)


def seq_power(a: WeightedSeq, n: int) -> WeightedSeq:
    """n-fold convolution power; n = 0 gives the unit delta."""
    if n < 0:
        raise ValueError("n >= 0")
    if n == 0:
        return unit_seq(a.kind, _zero_index(a.kind), a.weight)
    out = a
    for _ in range(n - 1):
        out = convolve(out, a)
    return out


def _zero_index(kind: SpaceKind):
    return (0, 0) if kind in (SpaceKind.FOURIER_TAYLOR, SpaceKind.TAYLOR2) else 0


def unit_seq(kind: SpaceKind, index, nu: float, parity: Parity = Parity.COS) -> WeightedSeq:
    """Kronecker sequence at ``index``."""
    if kind in (SpaceKind.COSINE_FOURIER, SpaceKind.CHEBYSHEV):
        k = int(index)
        if k < 0:
            raise IndexError(index)
        mid = np.zeros(k + 1, dtype=np.complex128)
        mid[k] = 1.0
        return WeightedSeq(kind, nu, mid, parity=parity)
    if kind is SpaceKind.EXP_FOURIER:
        k = int(index)
        half = abs(k)
        mid = np.zeros(2 * half + 1, dtype=np.complex128)
        mid[k + half] = 1.0
        return WeightedSeq(kind, nu, mid)
    if kind is SpaceKind.FOURIER_TAYLOR:
        n, m = index
        half = abs(n)
        mid = np.zeros((2 * half + 1, m + 1), dtype=np.complex128)
        mid[n + half, m] = 1.0
        return WeightedSeq(kind, nu, mid)
    if kind is SpaceKind.TAYLOR2:
        n, m = index
        mid = np.zeros((n + 1, m + 1), dtype=np.complex128)
        mid[n, m] = 1.0
        return WeightedSeq(kind, nu, mid)
    raise KindMismatch(kind)


# ---------------------------------------------------------------------------
# projections
# ---------------------------------------------------------------------------


def _tail_mask(kind: SpaceKind, shape, cutoff) -> np.ndarray:
    """Boolean mask of modes beyond the finite projection."""
    if kind in (SpaceKind.COSINE_FOURIER, SpaceKind.CHEBYSHEV):
        k = np.arange(shape[0])
        return k > cutoff
    if kind is SpaceKind.EXP_FOURIER:
        half = (shape[0] - 1) // 2
        k = np.arange(-half, half + 1)
        return np.abs(k) > cutoff
    if kind is SpaceKind.FOURIER_TAYLOR:
        nf, nt = cutoff
        half = (shape[0] - 1) // 2
        n = np.abs(np.arange(-half, half + 1))[:, None]
        m = np.arange(shape[1])[None, :]
        return (n > nf) | (m > nt)
    if kind is SpaceKind.TAYLOR2:
        n = np.arange(shape[0])[:, None]
        m = np.arange(shape[1])[None, :]
        return (n + m) > cutoff
    raise KindMismatch(kind)


def project(x: WeightedSeq, scheme: TruncationScheme, mode: str) -> WeightedSeq | np.ndarray:
    """Finite projection ``pi^N``, tail ``pi^inf``, or dense ``strip``."""
    cutoff = scheme.cutoff(x.kind)
    if mode == "strip":
        return strip(x, scheme)
    mask = _tail_mask(x.kind, x.mid.shape, cutoff)
    out = x.copy()
    if mode == "finite":
        out.mid[mask] = 0.0
        if out.r1 is not None:
            out.r1[mask] = 0.0
        if out.r2 is not None:
            out.r2[mask] = 0.0
        out.tail = 0.0
        return out
    if mode == "tail":
        out.mid[~mask] = 0.0
        if out.r1 is not None:
            out.r1[~mask] = 0.0
        if out.r2 is not None:
            out.r2[~mask] = 0.0
        return out
    raise ValueError(f"unknown projection mode {mode!r}")


def mode_list(kind: SpaceKind, cutoff) -> list:
    """Canonical enumeration of the finite modes (the pi_N ordering)."""
    if kind in (SpaceKind.COSINE_FOURIER, SpaceKind.CHEBYSHEV):
        return list(range(cutoff + 1))
    if kind is SpaceKind.EXP_FOURIER:
        return list(range(-cutoff, cutoff + 1))
    if kind is SpaceKind.FOURIER_TAYLOR:
        nf, nt = cutoff
        return [(n, m) for n in range(-nf, nf + 1) for m in range(nt + 1)]
    if kind is SpaceKind.TAYLOR2:
        return [(n, m) for n in range(cutoff + 1) for m in range(cutoff + 1 - n)]
    raise KindMismatch(kind)


def strip(x: WeightedSeq, scheme: TruncationScheme) -> np.ndarray:
    """Dense finite vector view (complex midpoints) in canonical mode order."""
    cutoff = scheme.cutoff(x.kind)
    out = np.zeros(len(mode_list(x.kind, cutoff)), dtype=np.complex128)
    for i, idx in enumerate(mode_list(x.kind, cutoff)):
        try:
            out[i] = x.mid[x._storage_index(idx)]
        except IndexError:
            out[i] = 0.0
    return out


def unstrip(kind: SpaceKind, nu: float, scheme: TruncationScheme, vec: np.ndarray,
            parity: Parity = Parity.COS) -> WeightedSeq:
    """Inverse of :func:`strip` (exact float coefficients)."""
    cutoff = scheme.cutoff(kind)
    modes = mode_list(kind, cutoff)
    if kind in (SpaceKind.COSINE_FOURIER, SpaceKind.CHEBYSHEV):
        mid = np.zeros(cutoff + 1, dtype=np.complex128)
    elif kind is SpaceKind.EXP_FOURIER:
        mid = np.zeros(2 * cutoff + 1, dtype=np.complex128)
    elif kind is SpaceKind.FOURIER_TAYLOR:
        nf, nt = cutoff
        mid = np.zeros((2 * nf + 1, nt + 1), dtype=np.complex128)
    else:
        mid = np.zeros((cutoff + 1, cutoff + 1), dtype=np.complex128)
    seq = WeightedSeq(kind, nu, mid, parity=parity)
    for i, idx in enumerate(modes):
        seq.mid[seq._storage_index(idx)] = vec[i]
    return seq


# ---------------------------------------------------------------------------
# cosine/sine <-> exponential, frequency doubling
# ---------------------------------------------------------------------------


def cos_sin_to_exponential(gamma: Sequence[WeightedSeq], nu_v: float | None = None,
                           strict: bool = True) -> list[WeightedSeq]:
    """Two-sided exponential coefficients of a parity-coded periodic orbit.

    Components 1, 3 must be cosine-coded and 2, 4 sine-coded.  Cosine
    components map to ``x_{|k|}``; sine ones to ``-i sign(k) x_{|k|}``.
    With ``strict=False`` a nonzero sine constant is dropped instead of
    raising (it is gauge: the zero-finding rows pin it separately).
    """
    if len(gamma) != 4:
        raise KindMismatch("expected 4 components")
    out = []
    for j, g in enumerate(gamma):
        if g.kind is not SpaceKind.COSINE_FOURIER:
            raise KindMismatch("periodic orbit components must be cosine containers")
        want = Parity.COS if j % 2 == 0 else Parity.SIN
        if g.parity is not want:
            raise KindMismatch(f"component {j + 1} has parity {g.parity}")
        if strict and want is Parity.SIN and (
            abs(g.mid[0]) != 0.0 or g.rad_arrays()[0][0] != 0.0
        ):
            raise NonzeroSineConstant(f"component {j + 1}")
        k = np.arange(-(g.mid.size - 1), g.mid.size)
        vals = g.mid[np.abs(k)]
        if want is Parity.SIN:
            vals = -1j * np.sign(k) * vals
        rig = not g.is_exact()
        rr = None
        if rig:
            r1, r2 = g.rad_arrays()
            rr = upper_nonneg_sum([r1, r2])[np.abs(k)]
            if want is Parity.SIN:
                rr = rr * (np.abs(k) > 0)
        nu = g.weight if nu_v is None else nu_v
        out.append(WeightedSeq(SpaceKind.EXP_FOURIER, nu, vals,
                               rr, None if rr is None else rr.copy()))
    return out


def double_frequency_embed(gamma: Sequence[WeightedSeq]) -> list[WeightedSeq]:
    """Re-index a periodic orbit as a function of the doubled angle.

    Even output modes carry the original coefficients, odd modes are exactly
    zero; the represented curve is unchanged.
    """
    out = []
    for g in gamma:
        if g.kind is not SpaceKind.COSINE_FOURIER:
            raise KindMismatch("expected cosine containers")
        n = g.mid.size
        mid = np.zeros(2 * n - 1, dtype=np.complex128)
        mid[::2] = g.mid
        r1 = r2 = None
        if not g.is_exact():
            a1, a2 = g.rad_arrays()
            r1 = np.zeros(2 * n - 1)
            r2 = np.zeros(2 * n - 1)
            r1[::2] = a1
            r2[::2] = a2
        out.append(WeightedSeq(g.kind, g.weight, mid, r1, r2, g.parity, g.tail))
    return out


# ---------------------------------------------------------------------------
# series evaluation
# ---------------------------------------------------------------------------


def _c(x) -> CInterval:
    return CInterval.coerce(x)


def _acos_interval(t: Interval) -> Interval:
    if t.lo < -1.0 or t.hi > 1.0:
        raise DomainViolation(f"acos domain: {t}")
    lo = math.nextafter(math.nextafter(math.acos(t.hi), -math.inf), -math.inf)
    hi = math.nextafter(math.nextafter(math.acos(t.lo), math.inf), math.inf)
    return Interval(max(lo, 0.0), hi)


def eval_series(x: WeightedSeq, point: tuple, tail_budget: Interval | float = 0.0) -> CInterval:
    """Interval enclosure of the series value at ``point``.

    Point arity by kind: cosine/Chebyshev ``(t,)`` with real t (angle, resp.
    abscissa in [-1,1]); EXP_FOURIER ``(theta1, theta2)`` on the unit circle;
    FOURIER_TAYLOR ``(theta1, theta2, sigma)``; TAYLOR2 ``(s1, s2)``.
    The declared tail norm plus ``tail_budget`` enters as a +/- box.
    """
    tb = Interval.coerce(tail_budget) if not isinstance(tail_budget, Interval) else tail_budget
    t_extra = float(tb.mag()) + x.tail
    acc = _eval_finite(x, point)
    if t_extra > 0.0:
        pad = Interval(-t_extra, t_extra)
        acc = acc + CInterval(pad, pad)
    return acc


def _eval_finite(x: WeightedSeq, point: tuple) -> CInterval:
    r1, r2 = x.rad_arrays()

    def cf(idx) -> CInterval:
        z = x.mid[idx]
        return CInterval(
            Interval.from_mid_rad(z.real, float(r1[idx])),
            Interval.from_mid_rad(z.imag, float(r2[idx])),
        )

    if x.kind in (SpaceKind.COSINE_FOURIER, SpaceKind.CHEBYSHEV):
        t = point[0]
        t = t if isinstance(t, Interval) else Interval.coerce(t)
        if x.kind is SpaceKind.CHEBYSHEV:
            theta = _acos_interval(t)
        else:
            theta = t
        acc = _c(0.0)
        for k in range(x.mid.size):
            if x.parity is Parity.SIN:
                base = (theta * k).sin()
                fac = 2.0
            else:
                base = (theta * k).cos()
                fac = 1.0 if k == 0 else 2.0
            acc = acc + cf(k) * CInterval(base * fac, Interval.point(0.0))
        return acc

    if x.kind is SpaceKind.EXP_FOURIER:
        th1, th2 = _c(point[0]), _c(point[1])
        half = x.halfwidth
        acc = _c(0.0)
        zp = th1 + CInterval(Interval.point(0.0), Interval.point(1.0)) * th2
        zm = th1 - CInterval(Interval.point(0.0), Interval.point(1.0)) * th2
        for k in range(-half, half + 1):
            base = (zp if k >= 0 else zm) ** abs(k)
            acc = acc + cf(k + half) * base
        return acc

    if x.kind is SpaceKind.FOURIER_TAYLOR:
        th1, th2, sig = _c(point[0]), _c(point[1]), _c(point[2])
        half = x.halfwidth
        acc = _c(0.0)
        i_unit = CInterval(Interval.point(0.0), Interval.point(1.0))
        zp = th1 + i_unit * th2
        zm = th1 - i_unit * th2
        sig_pows = [_c(1.0)]
        for _ in range(x.mid.shape[1] - 1):
            sig_pows.append(sig_pows[-1] * sig)
        for n in range(-half, half + 1):
            base = (zp if n >= 0 else zm) ** abs(n)
            for m in range(x.mid.shape[1]):
                acc = acc + cf((n + half, m)) * base * sig_pows[m]
        return acc

    if x.kind is SpaceKind.TAYLOR2:
        s1, s2 = _c(point[0]), _c(point[1])
        rows, cols = x.mid.shape
        p1 = [_c(1.0)]
        for _ in range(rows - 1):
            p1.append(p1[-1] * s1)
        p2 = [_c(1.0)]
        for _ in range(cols - 1):
            p2.append(p2[-1] * s2)
        acc = _c(0.0)
        for n in range(rows):
            for m in range(cols):
                acc = acc + cf((n, m)) * p1[n] * p2[m]
        return acc

    raise KindMismatch(x.kind)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def seq_to_records(x: WeightedSeq) -> dict:
    """JSON document: kind, weight, parity, tail and coefficient records
    ``[index, mid_re, rad_re, mid_im, rad_im]``."""
    r1, r2 = x.rad_arrays()
    records = []
    it = np.ndindex(x.mid.shape)
    for idx in it:
        z = x.mid[idx]
        if z == 0 and r1[idx] == 0 and r2[idx] == 0:
            continue
        if x.kind in (SpaceKind.COSINE_FOURIER, SpaceKind.CHEBYSHEV):
            key = int(idx[0])
        elif x.kind is SpaceKind.EXP_FOURIER:
            key = int(idx[0] - x.halfwidth)
        elif x.kind is SpaceKind.FOURIER_TAYLOR:
            key = [int(idx[0] - x.halfwidth), int(idx[1])]
        else:
            key = [int(idx[0]), int(idx[1])]
        records.append([key, z.real, float(r1[idx]), z.imag, float(r2[idx])])
    return {
        "kind": x.kind.value,
        "weight": x.weight,
        "parity": x.parity.value,
        "tail": x.tail,
        "coeffs": records,
    }


def seq_from_records(doc: dict) -> WeightedSeq:
    kind = SpaceKind(doc["kind"])
    parity = Parity(doc.get("parity", "cos"))
    recs = doc["coeffs"]

    def key_parts(rec):
        k = rec[0]
        return (k, 0) if isinstance(k, int) else tuple(k)

    if kind in (SpaceKind.COSINE_FOURIER, SpaceKind.CHEBYSHEV):
        size = 1 + max((abs(key_parts(r)[0]) for r in recs), default=0)
        mid = np.zeros(size, dtype=np.complex128)
        r1 = np.zeros(size)
        r2 = np.zeros(size)
        for k, mr, rr, mi, ri in recs:
            mid[k] = mr + 1j * mi
            r1[k], r2[k] = rr, ri
    elif kind is SpaceKind.EXP_FOURIER:
        half = max((abs(key_parts(r)[0]) for r in recs), default=0)
        mid = np.zeros(2 * half + 1, dtype=np.complex128)
        r1 = np.zeros(mid.shape)
        r2 = np.zeros(mid.shape)
        for k, mr, rr, mi, ri in recs:
            mid[k + half] = mr + 1j * mi
            r1[k + half], r2[k + half] = rr, ri
    elif kind is SpaceKind.FOURIER_TAYLOR:
        half = max((abs(key_parts(r)[0]) for r in recs), default=0)
        mmax = max((key_parts(r)[1] for r in recs), default=0)
        mid = np.zeros((2 * half + 1, mmax + 1), dtype=np.complex128)
        r1 = np.zeros(mid.shape)
        r2 = np.zeros(mid.shape)
        for (n, m), mr, rr, mi, ri in ((key_parts(r), r[1], r[2], r[3], r[4]) for r in recs):
            mid[n + half, m] = mr + 1j * mi
            r1[n + half, m], r2[n + half, m] = rr, ri
    else:
        nmax = max((key_parts(r)[0] for r in recs), default=0)
        mmax = max((key_parts(r)[1] for r in recs), default=0)
        mid = np.zeros((nmax + 1, mmax + 1), dtype=np.complex128)
        r1 = np.zeros(mid.shape)
        r2 = np.zeros(mid.shape)
        for (n, m), mr, rr, mi, ri in ((key_parts(r), r[1], r[2], r[3], r[4]) for r in recs):
            mid[n, m] = mr + 1j * mi
            r1[n, m], r2[n, m] = rr, ri
    exact = not (r1.any() or r2.any())
    return WeightedSeq(
        kind,
        float(doc["weight"]),
        mid,
        None if exact else r1,
        None if exact else r2,
        parity,
        float(doc.get("tail", 0.0)),
    )
