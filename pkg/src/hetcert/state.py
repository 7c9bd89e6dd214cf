"""The 29-component unknown, its block layout, and flat vector views.

Block indices (1-based, fixed):

    1  alpha        9  v3          17 theta2       25 xi = (l1, xi1, l2, xi2)
    2  gamma1      10  v4          18 sigma1       26 p1
    3  gamma2      11  w1          19 sigma2       27 p2
    4  gamma3      12  w2          20 omega        28 p3
    5  gamma4      13  w3          21 a1           29 p4
    6  lambda      14  w4          22 a2
    7  v1          15  L_c         23 a3
    8  v2          16  theta1      24 a4

gamma1, gamma3 are cosine-coded; gamma2, gamma4 sine-coded.  The xi block
stores (lambda1, xi1 in K^4, lambda2, xi2 in K^4) in that order and carries
the l1 norm.  The product norm is max_i mu_i ||x_i||; continuation tangents
are masked to blocks {1..5, 20..24} (alpha, gamma, omega, a).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .intervals import CInterval, Interval
from .spaces import (
    Parity,
    SpaceKind,
    SpaceWeights,
    TruncationScheme,
    WeightedSeq,
    mode_list,
    seq_from_records,
    seq_norm,
    seq_to_records,
    weight_vector,
    with_zero_radii,
)

__all__ = [
    "SCALAR_BLOCKS",
    "SEQ_BLOCKS",
    "MASK_BLOCKS",
    "XI_BLOCK",
    "SolverConfig",
    "HeteroclinicState",
    "TangentVector",
    "StateLayout",
    "block_kind",
]

SCALAR_BLOCKS = frozenset({1, 6, 15, 16, 17, 18, 19, 20})
XI_BLOCK = 25
GAMMA_BLOCKS = (2, 3, 4, 5)
V_BLOCKS = (7, 8, 9, 10)
W_BLOCKS = (11, 12, 13, 14)
A_BLOCKS = (21, 22, 23, 24)
P_BLOCKS = (26, 27, 28, 29)
SEQ_BLOCKS = GAMMA_BLOCKS + V_BLOCKS + W_BLOCKS + A_BLOCKS + P_BLOCKS
MASK_BLOCKS = (1, 2, 3, 4, 5, 20, 21, 22, 23, 24)

_BLOCK_KINDS = {}
for _b in GAMMA_BLOCKS:
    _BLOCK_KINDS[_b] = SpaceKind.COSINE_FOURIER
for _b in V_BLOCKS:
    _BLOCK_KINDS[_b] = SpaceKind.EXP_FOURIER
for _b in W_BLOCKS:
    _BLOCK_KINDS[_b] = SpaceKind.FOURIER_TAYLOR
for _b in A_BLOCKS:
    _BLOCK_KINDS[_b] = SpaceKind.CHEBYSHEV
for _b in P_BLOCKS:
    _BLOCK_KINDS[_b] = SpaceKind.TAYLOR2

GAMMA_PARITY = {2: Parity.COS, 3: Parity.SIN, 4: Parity.COS, 5: Parity.SIN}


def block_kind(i: int) -> SpaceKind | None:
    return _BLOCK_KINDS.get(i)


@dataclass(frozen=True)
class SolverConfig:
    """Phase-fixing and normalization constants of the zero-finding system.

    sigma0 fixes the Taylor parameter of the unstable-manifold level set;
    rho / lbar normalize the bundle eigenfunction; rho_i / kbar_i pin one
    component of each stable eigenvector; radius_constraint is the constant
    in the sigma circle equation.  All values are echoed into certificates.
    """

    sigma0: float = 0.5
    rho: float = 0.3
    lbar: int = 1
    rho1: float = 0.3
    rho2: float = 0.3
    kbar1: int = 1
    kbar2: int = 1
    radius_constraint: float = 0.95

    def __post_init__(self) -> None:
        if not (0.0 < self.sigma0 < 1.0):
            raise ValueError("sigma0 must lie in (0, 1)")
        if self.rho == 0 or self.rho1 == 0 or self.rho2 == 0:
            raise ValueError("normalization constants must be nonzero")
        if not (0.0 < self.radius_constraint < 1.0):
            raise ValueError("radius_constraint must lie in (0, 1)")
        for k in (self.lbar, self.kbar1, self.kbar2):
            if k not in (1, 2, 3, 4):
                raise ValueError("component selectors must be in 1..4")

    def to_dict(self) -> dict:
        return {
            "sigma0": self.sigma0,
            "rho": self.rho,
            "lbar": self.lbar,
            "rho1": self.rho1,
            "rho2": self.rho2,
            "kbar1": self.kbar1,
            "kbar2": self.kbar2,
            "radius_constraint": self.radius_constraint,
        }


@dataclass
class HeteroclinicState:
    """One point of the extended unknown x = (alpha, y).

    Scalars are complex (numerical) or CInterval (rigorous); sequences are
    WeightedSeq in the matching kinds.  xi is a length-10 vector
    (lambda1, xi1[0..3], lambda2, xi2[0..3]).
    """

    alpha: object
    gamma: list
    lam: object
    v: list
    w: list
    L_c: object
    theta1: object
    theta2: object
    sigma1: object
    sigma2: object
    omega: object
    a: list
    xi: list
    p: list

    def block(self, i: int):
        if i == 1:
            return self.alpha
        if i in GAMMA_BLOCKS:
            return self.gamma[i - 2]
        if i == 6:
            return self.lam
        if i in V_BLOCKS:
            return self.v[i - 7]
        if i in W_BLOCKS:
            return self.w[i - 11]
        if i == 15:
            return self.L_c
        if i == 16:
            return self.theta1
        if i == 17:
            return self.theta2
        if i == 18:
            return self.sigma1
        if i == 19:
            return self.sigma2
        if i == 20:
            return self.omega
        if i in A_BLOCKS:
            return self.a[i - 21]
        if i == XI_BLOCK:
            return self.xi
        if i in P_BLOCKS:
            return self.p[i - 26]
        raise IndexError(i)

    def set_block(self, i: int, val) -> None:
        if i == 1:
            self.alpha = val
        elif i in GAMMA_BLOCKS:
            self.gamma[i - 2] = val
        elif i == 6:
            self.lam = val
        elif i in V_BLOCKS:
            self.v[i - 7] = val
        elif i in W_BLOCKS:
            self.w[i - 11] = val
        elif i == 15:
            self.L_c = val
        elif i == 16:
            self.theta1 = val
        elif i == 17:
            self.theta2 = val
        elif i == 18:
            self.sigma1 = val
        elif i == 19:
            self.sigma2 = val
        elif i == 20:
            self.omega = val
        elif i in A_BLOCKS:
            self.a[i - 21] = val
        elif i == XI_BLOCK:
            self.xi = val
        elif i in P_BLOCKS:
            self.p[i - 26] = val
        else:
            raise IndexError(i)

    def copy(self) -> HeteroclinicState:
        return HeteroclinicState(
            alpha=self.alpha,
            gamma=[g.copy() for g in self.gamma],
            lam=self.lam,
            v=[s.copy() for s in self.v],
            w=[s.copy() for s in self.w],
            L_c=self.L_c,
            theta1=self.theta1,
            theta2=self.theta2,
            sigma1=self.sigma1,
            sigma2=self.sigma2,
            omega=self.omega,
            a=[s.copy() for s in self.a],
            xi=list(self.xi),
            p=[s.copy() for s in self.p],
        )

    def to_json(self) -> dict:
        def scal(x):
            if isinstance(x, CInterval):
                return [x.re.mid, x.re.rad, x.im.mid, x.im.rad]
            z = complex(x)
            return [z.real, 0.0, z.imag, 0.0]

        return {
            "layout": "table1-v1",
            "scalars": {
                str(i): scal(self.block(i)) for i in sorted(SCALAR_BLOCKS)
            },
            "xi": [scal(z) for z in self.xi],
            "seqs": {str(i): seq_to_records(self.block(i)) for i in SEQ_BLOCKS},
        }

    @staticmethod
    def from_json(doc: dict) -> HeteroclinicState:
        def unscal(rec):
            mr, rr, mi, ri = rec
            if rr == 0.0 and ri == 0.0:
                return complex(mr, mi)
            return CInterval(Interval.from_mid_rad(mr, rr), Interval.from_mid_rad(mi, ri))

        sc = {int(k): unscal(v) for k, v in doc["scalars"].items()}
        seqs = {int(k): seq_from_records(v) for k, v in doc["seqs"].items()}
        return HeteroclinicState(
            alpha=sc[1],
            gamma=[seqs[i] for i in GAMMA_BLOCKS],
            lam=sc[6],
            v=[seqs[i] for i in V_BLOCKS],
            w=[seqs[i] for i in W_BLOCKS],
            L_c=sc[15],
            theta1=sc[16],
            theta2=sc[17],
            sigma1=sc[18],
            sigma2=sc[19],
            omega=sc[20],
            a=[seqs[i] for i in A_BLOCKS],
            xi=[unscal(rec) for rec in doc["xi"]],
            p=[seqs[i] for i in P_BLOCKS],
        )


@dataclass
class TangentVector:
    """Continuation tangent with the structural mask of the arclength row.

    When ``masked`` is set, only blocks {1..5, 20..24} may be nonzero; this
    is the pattern required for the a-posteriori branch smoothness argument.
    """

    state: HeteroclinicState
    masked: bool = True

    def check_mask(self, layout: StateLayout, tol: float = 0.0) -> bool:
        if not self.masked:
            return True
        for i in range(1, 30):
            if i in MASK_BLOCKS:
                continue
            b = self.state.block(i)
            if i in SCALAR_BLOCKS:
                if abs(complex(_mid_scalar(b))) > tol:
                    return False
            elif i == XI_BLOCK:
                if any(abs(complex(_mid_scalar(z))) > tol for z in b):
                    return False
            else:
                if np.max(np.abs(b.mid)) > tol:
                    return False
        return True


def _mid_scalar(x) -> complex:
    if isinstance(x, CInterval):
        return x.mid
    if isinstance(x, Interval):
        return complex(x.mid, 0.0)
    return complex(x)


class StateLayout:
    """Flattening, block dimensions and norm weights for a truncation scheme."""

    def __init__(self, scheme: TruncationScheme, weights: SpaceWeights):
        self.scheme = scheme
        self.weights = weights
        self.modes: dict[int, list] = {}
        self.dims: dict[int, int] = {}
        self.offsets: dict[int, int] = {}
        off = 0
        for i in range(1, 30):
            if i in SCALAR_BLOCKS:
                d = 1
            elif i == XI_BLOCK:
                d = 10
            else:
                kind = _BLOCK_KINDS[i]
                self.modes[i] = mode_list(kind, scheme.cutoff(kind))
                d = len(self.modes[i])
            self.dims[i] = d
            self.offsets[i] = off
            off += d
        self.total = off

    # -- per-block norm weights (the X_i weighted-l1 weights) ---------------

    def block_weights(self, i: int, direction: str = "nearest") -> np.ndarray:
        if i in SCALAR_BLOCKS:
            return np.ones(1)
        if i == XI_BLOCK:
            return np.ones(10)
        kind = _BLOCK_KINDS[i]
        nu = self.weights.for_kind(kind)
        modes = self.modes[i]
        if kind in (SpaceKind.COSINE_FOURIER, SpaceKind.CHEBYSHEV):
            kmax = max(modes)
            full = weight_vector(kind, kmax + 1, nu, direction)
            return full[np.asarray(modes)]
        if kind is SpaceKind.EXP_FOURIER:
            half = max(abs(m) for m in modes)
            full = weight_vector(kind, 2 * half + 1, nu, direction)
            return full[[m + half for m in modes]]
        # 2-d kinds: index the rectangle container weights
        if kind is SpaceKind.FOURIER_TAYLOR:
            nf, nt = self.scheme.cutoff(kind)
            full = weight_vector(kind, (2 * nf + 1, nt + 1), nu, direction)
            return np.array([full[n + nf, m] for (n, m) in modes])
        npp = self.scheme.cutoff(kind)
        full = weight_vector(kind, (npp + 1, npp + 1), nu, direction)
        return np.array([full[n, m] for (n, m) in modes])

    def slice_of(self, i: int) -> slice:
        return slice(self.offsets[i], self.offsets[i] + self.dims[i])

    # -- flatten / unflatten -------------------------------------------------

    def flatten(self, x: HeteroclinicState) -> np.ndarray:
        out = np.zeros(self.total, dtype=np.complex128)
        for i in range(1, 30):
            sl = self.slice_of(i)
            b = x.block(i)
            if i in SCALAR_BLOCKS:
                out[sl] = _mid_scalar(b)
            elif i == XI_BLOCK:
                out[sl] = [_mid_scalar(z) for z in b]
            else:
                out[sl] = self._strip_seq(i, b)
        return out

    def _strip_seq(self, i: int, s: WeightedSeq) -> np.ndarray:
        modes = self.modes[i]
        vec = np.zeros(len(modes), dtype=np.complex128)
        for k, idx in enumerate(modes):
            try:
                vec[k] = s.mid[s._storage_index(idx)]
            except IndexError:
                pass
        return vec

    def unflatten(self, vec: np.ndarray) -> HeteroclinicState:
        """Vector -> numerical state with containers sized to the scheme."""
        vec = np.asarray(vec, dtype=np.complex128)

        def seq(i: int) -> WeightedSeq:
            kind = _BLOCK_KINDS[i]
            nu = self.weights.for_kind(kind)
            cutoff = self.scheme.cutoff(kind)
            sl = vec[self.slice_of(i)]
            if kind in (SpaceKind.COSINE_FOURIER, SpaceKind.CHEBYSHEV):
                mid = np.array(sl)
                parity = GAMMA_PARITY.get(i, Parity.COS)
                return WeightedSeq(kind, nu, mid, parity=parity)
            if kind is SpaceKind.EXP_FOURIER:
                return WeightedSeq(kind, nu, np.array(sl))
            if kind is SpaceKind.FOURIER_TAYLOR:
                nf, nt = cutoff
                mid = np.zeros((2 * nf + 1, nt + 1), dtype=np.complex128)
                for val, (n, m) in zip(sl, self.modes[i]):
                    mid[n + nf, m] = val
                return WeightedSeq(kind, nu, mid)
            mid = np.zeros((cutoff + 1, cutoff + 1), dtype=np.complex128)
            for val, (n, m) in zip(sl, self.modes[i]):
                mid[n, m] = val
            return WeightedSeq(kind, nu, mid)

        def scal(i: int) -> complex:
            return complex(vec[self.offsets[i]])

        return HeteroclinicState(
            alpha=scal(1),
            gamma=[seq(i) for i in GAMMA_BLOCKS],
            lam=scal(6),
            v=[seq(i) for i in V_BLOCKS],
            w=[seq(i) for i in W_BLOCKS],
            L_c=scal(15),
            theta1=scal(16),
            theta2=scal(17),
            sigma1=scal(18),
            sigma2=scal(19),
            omega=scal(20),
            a=[seq(i) for i in A_BLOCKS],
            xi=list(vec[self.slice_of(XI_BLOCK)]),
            p=[seq(i) for i in P_BLOCKS],
        )

    def zero_state(self) -> HeteroclinicState:
        return self.unflatten(np.zeros(self.total, dtype=np.complex128))

    # -- norms ---------------------------------------------------------------

    def block_norm(self, x: HeteroclinicState, i: int) -> Interval:
        b = x.block(i)
        if i in SCALAR_BLOCKS:
            return CInterval.coerce(_as_cinterval(b)).abs()
        if i == XI_BLOCK:
            acc = Interval.point(0.0)
            for z in b:
                acc = acc + CInterval.coerce(_as_cinterval(z)).abs()
            return acc
        return seq_norm(b)

    def state_norm(self, x: HeteroclinicState, mu: np.ndarray | None = None) -> Interval:
        """max_i mu_i ||x_i||, the product norm."""
        hi = 0.0
        lo = 0.0
        for i in range(1, 30):
            m = 1.0 if mu is None else float(mu[i - 1])
            ni = self.block_norm(x, i)
            v = Interval.point(m) * ni
            hi = max(hi, v.hi)
            lo = max(lo, v.lo)
        return Interval(lo, hi)

    def symmetrize(self, x: HeteroclinicState) -> HeteroclinicState:
        """Project onto the conjugation-equivariant (real) slice.

        Real blocks lose imaginary dust; the bundle and manifold blocks get
        v_{-k} = conj(v_k), w_{-n, m} = conj(w_{n, m}); the eigenpair block
        gets (lambda2, xi2) = conj(lambda1, xi1); the stable-manifold blocks
        get p_{m, n} = conj(p_{n, m}).  True solutions of interest lie on
        this slice, and Newton restricted to it cannot drift into the
        spurious complex zeros of the circle constraints.
        """
        out = x.copy()
        for i in SCALAR_BLOCKS:
            out.set_block(i, complex(_mid_scalar(out.block(i)).real, 0.0))
        for i in GAMMA_BLOCKS + A_BLOCKS:
            s = out.block(i)
            s.mid = s.mid.real.astype(np.complex128)
        for i in V_BLOCKS + W_BLOCKS:
            s = out.block(i)
            s.mid = 0.5 * (s.mid + np.conj(s.mid[::-1])) if s.mid.ndim == 1 \
                else 0.5 * (s.mid + np.conj(s.mid[::-1, :]))
        xi = [_mid_scalar(z) for z in out.xi]
        l1 = 0.5 * (xi[0] + np.conj(xi[5]))
        v1 = [0.5 * (xi[1 + k] + np.conj(xi[6 + k])) for k in range(4)]
        out.xi = [l1, *v1, np.conj(l1), *[np.conj(v) for v in v1]]
        for i in P_BLOCKS:
            s = out.block(i)
            s.mid = 0.5 * (s.mid + np.conj(s.mid.T))
        return out

    def as_rigorous(self, x: HeteroclinicState) -> HeteroclinicState:
        out = x.copy()
        for i in range(1, 30):
            b = out.block(i)
            if i in SCALAR_BLOCKS:
                out.set_block(i, _as_cinterval(b))
            elif i == XI_BLOCK:
                out.set_block(i, [_as_cinterval(z) for z in b])
            else:
                out.set_block(i, with_zero_radii(b))
        return out


def _as_cinterval(x) -> CInterval:
    if isinstance(x, CInterval):
        return x
    if isinstance(x, Interval):
        return CInterval(x, Interval.point(0.0))
    return CInterval.point(complex(x))
