"""Numerical continuation: the machinery that manufactures validated objects.

All computations here run in plain binary64; enclosures appear only in the
validator.  The pipeline is

    initial_guess   periodic orbit -> bundle -> manifolds -> shooting fit
    newton_refine   plain Newton on the truncated system
    tangent_update  masked nullspace of the Jacobian, sign-aligned
    step_predict_correct   pseudo-arclength predictor/corrector
    build_segment / fit_segment    Chebyshev-in-s branch representation
    close_loop      endpoint identification of a segment list
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .chebseries import fft_grid_sizes, fit_values, lobatto_nodes
from .jacobian import conv_block, flat_jacobian
from .maps import MapContext, assemble_F, assemble_f, map_gamma
from .spaces import Parity, SpaceKind, WeightedSeq
from .state import (
    GAMMA_PARITY,
    MASK_BLOCKS,
    SCALAR_BLOCKS,
    XI_BLOCK,
    HeteroclinicState,
    TangentVector,
)
from .systems import equilibrium_spectrum_hint, psi_jacobian

__all__ = [
    "BranchSegment",
    "LoopAtlas",
    "NewtonDiverged",
    "SingularJacobian",
    "ShootingFailed",
    "StepRejected",
    "FoldDegenerate",
    "LoopGapTooLarge",
    "initial_guess",
    "newton_refine",
    "tangent_update",
    "step_predict_correct",
    "fit_segment",
    "build_segment",
    "close_loop",
    "solve_periodic_orbit",
]


class NewtonDiverged(RuntimeError):
    pass


class SingularJacobian(np.linalg.LinAlgError):
    pass


class ShootingFailed(RuntimeError):
    pass


class StepRejected(RuntimeError):
    pass


class FoldDegenerate(RuntimeError):
    pass


class LoopGapTooLarge(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# branch containers
# ---------------------------------------------------------------------------


@dataclass
class BranchSegment:
    """One validated unit: a Chebyshev-in-s polynomial of states.

    ``coeffs``/``tangent_coeffs`` are (n_s+1, dim) arrays of flat-state
    Chebyshev coefficients in the c0 + 2 sum convention; node data is kept
    so adjacent segments can share endpoints bit-for-bit.
    """

    n_s: int
    coeffs: np.ndarray
    tangent_coeffs: np.ndarray
    node_states: np.ndarray  # (n_nodes, dim) flat states at Lobatto nodes
    node_tangents: np.ndarray
    d: int  # max residual degree multiplier of the problem
    arclength: float
    segment_id: int = 0

    def state_at(self, s: float) -> np.ndarray:
        from .chebseries import eval_cheb

        return eval_cheb(self.coeffs, s)

    def tangent_at(self, s: float) -> np.ndarray:
        from .chebseries import eval_cheb

        return eval_cheb(self.tangent_coeffs, s)

    def to_json(self) -> dict:
        def pack(a):
            return [[z.real, z.imag] for z in np.asarray(a).ravel()]

        return {
            "version": 1,
            "segment_id": self.segment_id,
            "n_s": self.n_s,
            "d": self.d,
            "arclength": self.arclength,
            "dim": int(self.coeffs.shape[1]),
            "coeffs": pack(self.coeffs),
            "tangent_coeffs": pack(self.tangent_coeffs),
            "n_nodes": int(self.node_states.shape[0]),
            "node_states": pack(self.node_states),
            "node_tangents": pack(self.node_tangents),
        }

    @staticmethod
    def from_json(doc: dict) -> BranchSegment:
        dim = doc["dim"]

        def unpack(rows, nrows):
            flat = np.array([complex(re, im) for re, im in rows])
            return flat.reshape(nrows, dim)

        n_s = doc["n_s"]
        nn = doc["n_nodes"]
        return BranchSegment(
            n_s=n_s,
            coeffs=unpack(doc["coeffs"], n_s + 1),
            tangent_coeffs=unpack(doc["tangent_coeffs"], n_s + 1),
            node_states=unpack(doc["node_states"], nn),
            node_tangents=unpack(doc["node_tangents"], nn),
            d=doc["d"],
            arclength=doc["arclength"],
            segment_id=doc.get("segment_id", 0),
        )


@dataclass
class LoopAtlas:
    segments: list[BranchSegment]
    closed: bool = False

    def save(self, directory: Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for k, seg in enumerate(self.segments):
            seg.segment_id = k
            (directory / f"segment_{k:03d}.json").write_text(json.dumps(seg.to_json()))
        (directory / "atlas.json").write_text(
            json.dumps({"n_segments": len(self.segments), "closed": self.closed})
        )

    @staticmethod
    def load(directory: Path) -> LoopAtlas:
        directory = Path(directory)
        meta = json.loads((directory / "atlas.json").read_text())
        segs = []
        for k in range(meta["n_segments"]):
            segs.append(
                BranchSegment.from_json(
                    json.loads((directory / f"segment_{k:03d}.json").read_text())
                )
            )
        return LoopAtlas(segs, closed=meta["closed"])


# ---------------------------------------------------------------------------
# norms and masking on flat vectors
# ---------------------------------------------------------------------------


def weighted_residual_norm(ctx: MapContext, res: HeteroclinicState) -> float:
    """max_i ||res_i|| over the truncated rows (numerical path)."""
    out = 0.0
    L = ctx.layout
    for i in range(1, 30):
        b = res.block(i)
        if i in SCALAR_BLOCKS:
            out = max(out, abs(complex(_mid_of(b))))
        elif i == XI_BLOCK:
            out = max(out, sum(abs(complex(_mid_of(z))) for z in b))
        else:
            vec = L._strip_seq(i, b)
            w = L.block_weights(i)
            out = max(out, float(np.sum(np.abs(vec) * w)))
    return out


def _mid_of(x) -> complex:
    from .intervals import CInterval, Interval

    if isinstance(x, CInterval):
        return x.mid
    if isinstance(x, Interval):
        return complex(x.mid, 0.0)
    return complex(x)


def mask_flat(ctx: MapContext, vec: np.ndarray) -> np.ndarray:
    out = np.zeros_like(vec)
    for i in MASK_BLOCKS:
        sl = ctx.layout.slice_of(i)
        out[sl] = vec[sl]
    return out


def x_norm_flat(ctx: MapContext, vec: np.ndarray) -> float:
    """Numerical max-over-blocks weighted-l1 norm of a flat vector."""
    out = 0.0
    L = ctx.layout
    for i in range(1, 30):
        w = L.block_weights(i)
        out = max(out, float(np.sum(np.abs(vec[L.slice_of(i)]) * w)))
    return out


def tangent_from_flat(ctx: MapContext, vec: np.ndarray) -> TangentVector:
    return TangentVector(ctx.layout.unflatten(mask_flat(ctx, vec)))


# ---------------------------------------------------------------------------
# Newton solvers
# ---------------------------------------------------------------------------


def newton_refine(
    ctx: MapContext,
    x0: HeteroclinicState,
    tol: float = 1e-12,
    max_iter: int = 30,
    base: HeteroclinicState | None = None,
    tangent: TangentVector | None = None,
    fixed_alpha: bool = True,
    symmetrize: bool = True,
) -> HeteroclinicState:
    """Plain Newton on the truncated system.

    With ``fixed_alpha`` the parameter stays frozen (the Q row and the alpha
    column are dropped); otherwise the pseudo-arclength row closes the
    system and ``base``/``tangent`` are required.  Iterates are projected
    onto the conjugation-equivariant slice unless ``symmetrize`` is off.
    """
    from scipy.linalg import lu_factor, lu_solve

    L = ctx.layout
    if symmetrize:
        x0 = L.symmetrize(x0)
    xf = L.flatten(x0)
    hist = []
    lu = None
    for it in range(max_iter):
        x = L.unflatten(xf)
        if fixed_alpha:
            res = assemble_f(ctx, x)
        else:
            res = assemble_F(ctx, x, base, tangent)
        rn = weighted_residual_norm(ctx, res)
        hist.append(rn)
        if rn <= tol:
            x._newton_history = hist  # run-log for convergence diagnostics
            return x
        # refresh the factorization unless the residual is contracting fast
        if lu is None or len(hist) < 2 or hist[-1] > 0.05 * hist[-2]:
            J = flat_jacobian(ctx, x, tangent if not fixed_alpha else None)
            Js = J[1:, 1:] if fixed_alpha else J
            try:
                lu = lu_factor(Js)
            except np.linalg.LinAlgError as e:
                raise SingularJacobian(str(e)) from e
        r = L.flatten(res)
        rs = r[1:] if fixed_alpha else r
        delta = lu_solve(lu, rs)
        if not np.all(np.isfinite(delta)):
            raise SingularJacobian("non-finite Newton step")
        if fixed_alpha:
            xf[1:] -= delta
        else:
            xf -= delta
        if symmetrize:
            xf = L.flatten(L.symmetrize(L.unflatten(xf)))
        if np.linalg.norm(delta) > 1e8:
            raise NewtonDiverged(f"step blew up at iteration {it}")
    raise NewtonDiverged(f"no convergence in {max_iter} iterations; last residual {hist[-1]:.3e}")


def tangent_update(ctx: MapContext, x: HeteroclinicState,
                   prev_tangent: TangentVector | None = None) -> TangentVector:
    """Unit-norm masked tangent, sign-aligned with the previous one."""
    L = ctx.layout
    prev = prev_tangent
    if prev is None:
        e = np.zeros(L.total)
        e[0] = 1.0  # default orientation: increasing alpha
        prev = tangent_from_flat(ctx, e)
    J = flat_jacobian(ctx, x, prev)
    rhs = np.zeros(L.total, dtype=np.complex128)
    rhs[0] = 1.0
    try:
        t = np.linalg.solve(J, rhs)
    except np.linalg.LinAlgError as e:
        raise FoldDegenerate(str(e)) from e
    t = mask_flat(ctx, t)
    nrm = x_norm_flat(ctx, t)
    if not np.isfinite(nrm) or nrm == 0.0:
        raise FoldDegenerate("masked tangent vanished")
    t /= nrm
    prev_f = L.flatten(prev.state)
    align = float(np.real(np.sum(prev_f * t)))
    if align < 0:
        t = -t
    return tangent_from_flat(ctx, t)


def step_predict_correct(
    ctx: MapContext,
    x: HeteroclinicState,
    tangent: TangentVector,
    step_h: float,
    tol: float = 1e-12,
    max_iter: int = 30,
    min_h: float = 1e-6,
) -> tuple[HeteroclinicState, TangentVector, float]:
    """One pseudo-arclength step with automatic halving on rejection."""
    L = ctx.layout
    xf = L.flatten(x)
    tf = L.flatten(tangent.state)
    h = step_h
    while True:
        pred = L.unflatten(xf + h * tf)
        try:
            xn = newton_refine(ctx, pred, tol=tol, max_iter=max_iter,
                               base=pred, tangent=tangent, fixed_alpha=False)
            tn = tangent_update(ctx, xn, tangent)
            return xn, tn, h
        except (NewtonDiverged, SingularJacobian, FoldDegenerate):
            h *= 0.5
            if h < min_h:
                raise StepRejected(f"step collapsed below {min_h}")


# ---------------------------------------------------------------------------
# segment fitting and joining
# ---------------------------------------------------------------------------


def fit_segment(ctx: MapContext, samples: np.ndarray, tangents: np.ndarray,
                n_s: int, d: int, arclength: float, segment_id: int = 0) -> BranchSegment:
    """Chebyshev fit of flat states sampled on the n_FFT Lobatto grid."""
    nfft, n_fft = fft_grid_sizes(n_s)
    if samples.shape[0] != n_fft:
        raise GridError(f"expected {n_fft} samples, got {samples.shape[0]}")
    coeffs = fit_values(samples, n_out=n_s)
    tcoeffs = fit_values(tangents, n_out=n_s)
    return BranchSegment(
        n_s=n_s,
        coeffs=coeffs,
        tangent_coeffs=tcoeffs,
        node_states=samples.copy(),
        node_tangents=tangents.copy(),
        d=d,
        arclength=arclength,
        segment_id=segment_id,
    )


class GridError(ValueError):
    pass


GridSizeMismatch = GridError


def build_segment(
    ctx: MapContext,
    x0: HeteroclinicState,
    tan0: TangentVector,
    arclength: float,
    n_s: int = 15,
    tol: float = 1e-12,
    max_leg: float = 0.25,
    segment_id: int = 0,
) -> tuple[BranchSegment, HeteroclinicState, TangentVector]:
    """Continue from (x0, tan0) over the given arclength and fit one segment.

    Node states sit at Lobatto positions of the arclength parameter; the
    final node's state/tangent are returned to seed the next segment.
    """
    _, n_fft = fft_grid_sizes(n_s)
    grid_order = n_fft - 1
    arcs = (lobatto_nodes(grid_order) + 1.0) * (arclength / 2.0)
    L = ctx.layout
    samples = np.zeros((n_fft, L.total), dtype=np.complex128)
    tangents = np.zeros((n_fft, L.total), dtype=np.complex128)
    samples[0] = L.flatten(x0)
    tangents[0] = L.flatten(tan0.state)
    x, tan = x0, tan0
    for k in range(1, n_fft):
        remaining = arcs[k] - arcs[k - 1]
        while remaining > 1e-14:
            h = min(remaining, max_leg)
            x, tan, used = step_predict_correct(ctx, x, tan, h, tol=tol)
            remaining -= used
        samples[k] = L.flatten(x)
        tangents[k] = L.flatten(tan.state)
    seg = fit_segment(ctx, samples, tangents, n_s, ctx.degree + 1, arclength, segment_id)
    return seg, x, tan


def close_loop(ctx: MapContext, atlas: LoopAtlas, gap_tol: float = 1e-6) -> LoopAtlas:
    """Identify endpoints of adjacent segments (and wrap the last to the
    first), making shared node data bitwise equal."""
    segs = atlas.segments
    for k, seg in enumerate(segs):
        nxt = segs[(k + 1) % len(segs)]
        gap = x_norm_flat(ctx, seg.node_states[-1] - nxt.node_states[0])
        if gap > gap_tol:
            raise LoopGapTooLarge(f"segments {k}->{(k + 1) % len(segs)}: gap {gap:.3e}")
        shared_state = nxt.node_states[0].copy()
        shared_tan = nxt.node_tangents[0].copy()
        seg.node_states[-1] = shared_state
        seg.node_tangents[-1] = shared_tan
        n_s = seg.n_s
        seg.coeffs = fit_values(seg.node_states, n_out=n_s)
        seg.tangent_coeffs = fit_values(seg.node_tangents, n_out=n_s)
    atlas.closed = True
    return atlas


# ---------------------------------------------------------------------------
# initial guess construction
# ---------------------------------------------------------------------------


def _gamma_seqs(ctx: MapContext, flat: np.ndarray) -> list[WeightedSeq]:
    n = ctx.scheme.N_gamma + 1
    nu = ctx.weights.nu_gamma
    out = []
    for i in range(4):
        out.append(
            WeightedSeq(
                SpaceKind.COSINE_FOURIER,
                nu,
                flat[i * n: (i + 1) * n].astype(np.complex128),
                parity=GAMMA_PARITY[2 + i],
            )
        )
    return out


def _po_jacobian(ctx: MapContext, gamma, omega: complex, alpha: complex) -> np.ndarray:
    """Jacobian of the periodic-orbit map wrt gamma at fixed omega."""
    n = ctx.scheme.N_gamma + 1
    modes = list(range(n))
    J = np.zeros((4 * n, 4 * n), dtype=np.complex128)
    jac = psi_jacobian(ctx.problem, gamma, alpha)
    for ip in range(4):
        sign = 1.0 if ip % 2 == 0 else -1.0
        J[ip * n: (ip + 1) * n, ip * n: (ip + 1) * n] += np.diag(
            np.arange(n, dtype=np.complex128)
        )
        for jp in range(4):
            e = jac[ip][jp]
            if isinstance(e, float):
                if e == 0.0:
                    continue
                J[ip * n: (ip + 1) * n, jp * n: (jp + 1) * n] += (
                    omega * sign * e * np.eye(n)
                )
            else:
                parity = GAMMA_PARITY[2 + jp]
                from .spaces import seq_scale

                z = seq_scale(e, omega * sign)
                mid, _ = conv_block(z, modes, modes, parity)
                J[ip * n: (ip + 1) * n, jp * n: (jp + 1) * n] += mid
    return J


def solve_periodic_orbit(
    ctx: MapContext,
    alpha: float,
    omega: float,
    amp: float,
    mean: float = 0.0,
    tol: float = 1e-12,
    max_iter: int = 60,
):
    """Newton on the periodic-orbit map at fixed frequency.

    Returns the four parity-coded coefficient sequences or raises
    NewtonDiverged.  Seeded with a single-mode roll of the given amplitude.
    """
    n = ctx.scheme.N_gamma + 1
    flat = np.zeros(4 * n, dtype=np.complex128)
    flat[0] = mean
    flat[1] = amp
    flat[n + 1] = -amp / omega
    flat[2 * n + 1] = -amp / omega**2
    flat[3 * n + 1] = amp / omega**3
    for _ in range(max_iter):
        gamma = _gamma_seqs(ctx, flat)
        res = map_gamma(ctx, gamma, complex(omega), complex(alpha))
        r = np.concatenate([_clip(s.mid, n) for s in res])
        if np.max(np.abs(r)) <= tol:
            return gamma
        J = _po_jacobian(ctx, gamma, complex(omega), complex(alpha))
        try:
            delta = np.linalg.solve(J, r)
        except np.linalg.LinAlgError as e:
            raise SingularJacobian(str(e)) from e
        flat = flat - delta
        if not np.all(np.isfinite(flat)) or np.max(np.abs(flat)) > 1e6:
            raise NewtonDiverged("periodic orbit Newton blew up")
    raise NewtonDiverged("periodic orbit Newton did not converge")


def _clip(arr: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n, dtype=np.complex128)
    m = min(n, arr.size)
    out[:m] = arr[:m]
    return out


def _bundle_operator(ctx: MapContext, gF, omega: complex, alpha: complex) -> np.ndarray:
    """Matrix of v -> omega DPsi(gamma^F) v - d/d theta on the exp modes."""
    half = ctx.scheme.N_v
    modes = list(range(-half, half + 1))
    n = len(modes)
    jac = psi_jacobian(ctx.problem, gF, alpha)
    B = np.zeros((4 * n, 4 * n), dtype=np.complex128)
    k = np.arange(-half, half + 1, dtype=np.float64)
    for ip in range(4):
        B[ip * n: (ip + 1) * n, ip * n: (ip + 1) * n] -= np.diag(1j * k)
        for jp in range(4):
            e = jac[ip][jp]
            if isinstance(e, float):
                if e == 0.0:
                    continue
                B[ip * n: (ip + 1) * n, jp * n: (jp + 1) * n] += omega * e * np.eye(n)
            else:
                mid, _ = conv_block(e, modes, modes, None)
                B[ip * n: (ip + 1) * n, jp * n: (jp + 1) * n] += omega * mid
    return B


def solve_bundle(ctx: MapContext, gamma, omega: float, alpha: float):
    """Floquet exponent and conjugate-symmetric eigenfunction of the bundle."""
    from .spaces import cos_sin_to_exponential

    gF = cos_sin_to_exponential(gamma, ctx.weights.nu_v, strict=False)
    B = _bundle_operator(ctx, gF, complex(omega), complex(alpha))
    vals, vecs = np.linalg.eig(B)
    # want the purely real positive exponent (orientable unstable direction);
    # the genuine one is the smallest real eigenvalue clear of the trivial 0,
    # with a smooth (mode-decaying) eigenfunction
    cand = sorted(
        (v.real, k)
        for k, v in enumerate(vals)
        if abs(v.imag) < 1e-6 and v.real > 0.05
    )
    half = ctx.scheme.N_v
    n = 2 * half + 1
    for lam, kbest in cand:
        vec = vecs[:, kbest]
        comps = [vec[i * n: (i + 1) * n] for i in range(4)]
        mass = sum(np.sum(np.abs(c) ** 2) for c in comps)
        edge = max(1, half // 4)
        tail_mass = sum(
            np.sum(np.abs(c[:edge]) ** 2) + np.sum(np.abs(c[-edge:]) ** 2)
            for c in comps
        )
        if tail_mass > 1e-4 * mass:
            continue  # truncation artifact, not a smooth eigenfunction
        # symmetrize to the real eigenfunction representative: v_{-k} = conj(v_k)
        sym = [0.5 * (c + np.conj(c[::-1])) for c in comps]
        total = sum(np.sum(s) for s in sym)
        if abs(total) < 1e-12:
            sym = [0.5j * (c - np.conj(c[::-1])) for c in comps]
        lb = ctx.config.lbar - 1
        denom = np.sum(sym[lb])
        if abs(denom) < 1e-10:
            continue
        scale = ctx.config.rho / denom
        v = [
            WeightedSeq(SpaceKind.EXP_FOURIER, ctx.weights.nu_v, np.asarray(c) * scale)
            for c in sym
        ]
        return float(lam), v
    raise ShootingFailed("no real positive Floquet exponent with a smooth eigenfunction")


def solve_manifold_u(ctx: MapContext, gamma, v, lam: float, omega: float, alpha: float):
    """Higher-order Fourier-Taylor coefficients by graded linear solves."""
    from .spaces import cos_sin_to_exponential
    from .systems import psi_eval

    half = ctx.scheme.N_wF
    mmax = ctx.scheme.N_wT
    nu = ctx.weights.nu_w
    gF = cos_sin_to_exponential(gamma, nu, strict=False)
    w = []
    for i in range(4):
        mid = np.zeros((2 * half + 1, mmax + 1), dtype=np.complex128)
        gsrc = gF[i].mid
        hg = (gsrc.size - 1) // 2
        mid[half - hg: half + hg + 1, 0] = gsrc
        vsrc = v[i].mid
        hv = (vsrc.size - 1) // 2
        mid[half - hv: half + hv + 1, 1] = vsrc
        w.append(WeightedSeq(SpaceKind.FOURIER_TAYLOR, nu, mid))
    gF_v = cos_sin_to_exponential(gamma, ctx.weights.nu_v, strict=False)
    # homological operator: diag(i n + lam m) - omega Conv(DPsi(gamma^F))
    modes = list(range(-half, half + 1))
    n = len(modes)
    jacm = np.zeros((4 * n, 4 * n), dtype=np.complex128)
    jac = psi_jacobian(ctx.problem, gF, complex(alpha))
    for ip in range(4):
        for jp in range(4):
            e = jac[ip][jp]
            if isinstance(e, float):
                if e == 0.0:
                    continue
                jacm[ip * n: (ip + 1) * n, jp * n: (jp + 1) * n] += e * np.eye(n)
            else:
                mid, _ = conv_block(e, modes, modes, None)
                jacm[ip * n: (ip + 1) * n, jp * n: (jp + 1) * n] += mid
    kdiag = np.tile(1j * np.arange(-half, half + 1, dtype=np.float64), 4)
    for m in range(2, mmax + 1):
        wme = [WeightedSeq(SpaceKind.FOURIER_TAYLOR, nu, wi.mid.copy()) for wi in w]
        for wi in wme:
            wi.mid[:, m:] = 0.0
        psi = psi_eval(ctx.problem, wme, complex(alpha))
        rhs = np.zeros(4 * n, dtype=np.complex128)
        for i in range(4):
            s = psi[i]
            sm = s.mid if isinstance(s, WeightedSeq) else None
            if sm is None:
                continue
            hs = (sm.shape[0] - 1) // 2
            cols = sm.shape[1]
            if m < cols:
                lo = max(-half, -hs)
                hi = min(half, hs)
                rhs[i * n + (lo + half): i * n + (hi + half) + 1] = omega * sm[
                    lo + hs: hi + hs + 1, m
                ]
        A = np.diag(kdiag + lam * m) - omega * jacm
        slice_m = np.linalg.solve(A, rhs)
        for i in range(4):
            w[i].mid[:, m] = slice_m[i * n: (i + 1) * n]
    return w


def solve_manifold_s(ctx: MapContext, xi, alpha: float):
    """Taylor coefficients of the stable manifold by graded 4x4 solves."""
    from .systems import dpsi_origin, psi_eval

    npmax = ctx.scheme.N_p
    nu = ctx.weights.nu_p
    lam1, lam2 = complex(xi[0]), complex(xi[5])
    xi1 = np.array(xi[1:5], dtype=np.complex128)
    xi2 = np.array(xi[6:10], dtype=np.complex128)
    p = [
        WeightedSeq(SpaceKind.TAYLOR2, nu,
                    np.zeros((npmax + 1, npmax + 1), dtype=np.complex128))
        for _ in range(4)
    ]
    for i in range(4):
        p[i].mid[1, 0] = xi1[i]
        p[i].mid[0, 1] = xi2[i]
    A0 = np.array(dpsi_origin(ctx.problem, complex(alpha)), dtype=np.complex128)
    for deg in range(2, npmax + 1):
        psi = psi_eval(ctx.problem, p, complex(alpha))
        for nmode in range(deg + 1):
            mmode = deg - nmode
            rhs = np.zeros(4, dtype=np.complex128)
            for i in range(4):
                sm = psi[i].mid
                if nmode < sm.shape[0] and mmode < sm.shape[1]:
                    rhs[i] = sm[nmode, mmode]
            A = (lam1 * nmode + lam2 * mmode) * np.eye(4) - A0
            sol = np.linalg.solve(A, rhs)
            for i in range(4):
                p[i].mid[nmode, mmode] = sol[i]
    return p


def _psi_np(problem, alpha: float):
    terms1 = problem.nonlinearity.f1
    terms2 = problem.nonlinearity.f2

    def f(t, u):
        u1, u2, u3, u4 = u
        f1 = sum(t_.coeff_float * alpha**t_.ca * u1**t_.cu * u3**t_.cv for t_ in terms1)
        f2 = sum(t_.coeff_float * alpha**t_.ca * u1**t_.cu * u3**t_.cv for t_ in terms2)
        return [u2, f1, u4, f2]

    return f


def _wu_point(ctx: MapContext, w, theta: float, sigma0: float) -> np.ndarray:
    from .maps import _wu_eval_component

    th1, th2 = math.cos(theta), math.sin(theta)
    return np.array(
        [complex(_wu_eval_component(w[i], th1, th2, sigma0)).real for i in range(4)]
    )


def initial_guess(
    ctx: MapContext,
    alpha0: float,
    omega_grid=None,
    amp_grid=None,
    mean_grid=(0.0, 0.4, 0.8),
    newton_tol: float = 1e-12,
    verbose: bool = False,
) -> tuple[HeteroclinicState, MapContext]:
    """Full 29-component starting point at a fixed parameter value.

    Continues the numerically computed periodic orbit, bundle and manifolds
    into a shooting fit of the connecting segment, then polishes everything
    with Newton at fixed alpha.  The connection may leave through either
    side of the manifold cylinder; the side is selected by the sign of the
    bundle normalization, so the returned context carries the (possibly
    sign-flipped) configuration actually used.
    """
    lo, hi = ctx.problem.alpha_range_hint
    if not (lo <= alpha0 <= hi):
        raise ShootingFailed(f"alpha0={alpha0} outside the range hint [{lo}, {hi}]")
    if omega_grid is None:
        omega_grid = np.arange(0.85, 1.21, 0.05)
    if amp_grid is None:
        amp_grid = (0.3, 0.5, 0.8, 1.1)

    from dataclasses import replace as dc_replace

    for rho_sign in (1.0, -1.0):
        cfg = ctx.config if rho_sign > 0 else dc_replace(
            ctx.config, rho=-ctx.config.rho
        )
        cctx = MapContext(ctx.problem, ctx.scheme, ctx.weights, cfg)
        best = None
        for omega in omega_grid:
            cand = _try_connection(cctx, alpha0, float(omega), amp_grid, mean_grid, verbose)
            if cand is not None and (best is None or cand[0] < best[0]):
                best = cand
        if best is None:
            continue
        # refine omega by golden section on the shooting miss
        miss, omega, payload = best
        a, b = omega - 0.05, omega + 0.05
        evals = {omega: best}

        def at(m):
            if m not in evals:
                c = _try_connection(cctx, alpha0, float(m), amp_grid, mean_grid, verbose)
                evals[m] = c if c is not None else (np.inf, m, None)
            return evals[m]

        for _ in range(20):
            m1 = a + 0.382 * (b - a)
            m2 = a + 0.618 * (b - a)
            if at(m1)[0] < at(m2)[0]:
                b = m2
            else:
                a = m1
            if min(evals[m1][0], evals[m2][0]) < 2e-6:
                break
        candidates = sorted((v for v in evals.values() if v[2] is not None),
                            key=lambda t: t[0])
        for cand in candidates[:4]:
            if not np.isfinite(cand[0]) or cand[0] > 0.05:
                continue
            state = _assemble_guess(cctx, alpha0, *cand[2])
            if verbose:
                print(f"  assembling at omega={cand[1]:.6f}, miss={cand[0]:.2e}, "
                      f"rho={cfg.rho}", flush=True)
            try:
                refined = newton_refine(cctx, state, tol=newton_tol, max_iter=40,
                                        fixed_alpha=True)
            except (NewtonDiverged, SingularJacobian):
                continue
            g_norm = float(np.sum(np.abs(refined.gamma[0].mid)))
            if g_norm < 0.1 or refined.L_c.real < 1.0:
                continue  # collapsed onto a trivial-branch zero
            return refined, cctx
    raise ShootingFailed("no near-connection found on either manifold side")


def _try_connection(ctx, alpha0, omega, amp_grid, mean_grid, verbose):
    """One shooting attempt; returns (miss, omega, assemble_payload)."""
    orbits = {}
    for amp in amp_grid:
        for mean in mean_grid:
            try:
                gamma = solve_periodic_orbit(ctx, alpha0, omega, amp, mean)
            except (NewtonDiverged, SingularJacobian):
                continue
            nrm = float(np.sum(np.abs(gamma[0].mid)))
            if nrm > 0.05:
                orbits.setdefault(round(nrm, 6), gamma)
    found = None
    for nrm in sorted(orbits, reverse=True):  # prefer the large-amplitude roll
        try:
            lam, v = solve_bundle(ctx, orbits[nrm], omega, alpha0)
        except ShootingFailed:
            continue
        found = (orbits[nrm], lam, v)
        break
    if found is None:
        return None
    gamma, lam, v = found
    w = solve_manifold_u(ctx, gamma, v, lam, omega, alpha0)
    stable, unstable = equilibrium_spectrum_hint(ctx.problem, alpha0)
    lam1, xi1 = stable[0]
    # normalize the eigenvectors by the pinned component
    xi1 = xi1 * (ctx.config.rho1 / xi1[ctx.config.kbar1 - 1])
    xi2 = np.conj(xi1) * (ctx.config.rho2 / np.conj(xi1)[ctx.config.kbar2 - 1])
    xi = [lam1, *xi1, np.conj(lam1), *xi2]
    p = solve_manifold_s(ctx, xi, alpha0)
    hit = _shoot(ctx, w, p, xi, alpha0, omega, verbose)
    if hit is None:
        return None
    miss, theta, L_c, sig, traj_fit = hit
    if L_c is None:
        return miss, omega, None
    payload = (gamma, lam, v, w, omega, theta, L_c, sig, traj_fit, xi, p)
    return miss, omega, payload


def _p_point(p, s1: float, s2: float) -> np.ndarray:
    """Real 4-vector P(s1 + i s2, s1 - i s2) from conjugate-symmetric data."""
    z1, z2 = complex(s1, s2), complex(s1, -s2)
    rows, cols = p[0].mid.shape
    pw1 = z1 ** np.arange(rows)
    pw2 = z2 ** np.arange(cols)
    return np.array([np.real(pw1 @ pc.mid @ pw2) for pc in p])


def _p_jac(p, s1: float, s2: float) -> np.ndarray:
    """Real 4x2 Jacobian of the stable-manifold chart at (s1, s2)."""
    z1, z2 = complex(s1, s2), complex(s1, -s2)
    rows, cols = p[0].mid.shape
    n_ = np.arange(rows)[:, None]
    m_ = np.arange(cols)[None, :]
    pw1 = z1 ** np.arange(rows)
    pw2 = z2 ** np.arange(cols)
    pw1m = z1 ** np.maximum(np.arange(rows) - 1, 0)
    pw2m = z2 ** np.maximum(np.arange(cols) - 1, 0)
    out = np.zeros((4, 2))
    for i, pc in enumerate(p):
        t1 = np.sum(pc.mid * n_ * pw1m[:, None] * pw2[None, :])
        t2 = np.sum(pc.mid * m_ * pw1[:, None] * pw2m[None, :])
        out[i, 0] = (t1 + t2).real
        out[i, 1] = (1j * (t1 - t2)).real
    return out


def _invert_chart(p, u: np.ndarray, sig0: np.ndarray, iters: int = 25):
    """Gauss-Newton least squares for P(sigma) ~ u; returns (sigma, residual)."""
    s = np.asarray(sig0, dtype=np.float64).copy()
    for _ in range(iters):
        r = _p_point(p, s[0], s[1]) - u
        J = _p_jac(p, s[0], s[1])
        step, *_ = np.linalg.lstsq(J, -r, rcond=None)
        s = s + step
        if np.linalg.norm(step) < 1e-14:
            break
    r = _p_point(p, s[0], s[1]) - u
    return s, float(np.linalg.norm(r))


def _extract_crossing(ctx, p, Vinv, sol, chart_cap, target2):
    """Walk the chart radius along the trajectory; return (t, sigma) at the
    first downward crossing of the sigma circle."""
    ts = np.linspace(0, sol.t[-1], 1500)
    us = sol.sol(ts)
    dist = np.linalg.norm(us, axis=0)
    kmin = int(np.argmin(dist))
    if ts[kmin] <= 0.5 or dist[kmin] > 0.6 * chart_cap:
        return None
    # walk backwards from the closest approach while inside the chart
    sg = None
    rad_prev = None
    k_cross = None
    start = kmin
    c_lin = (Vinv @ us[:, kmin])[0]
    seed = np.array([c_lin.real, c_lin.imag])
    radii = {}
    k = kmin
    while k >= 0 and dist[k] <= chart_cap:
        sg, res = _invert_chart(p, us[:, k], seed if sg is None else sg)
        radii[k] = sg[0] ** 2 + sg[1] ** 2
        if radii[k] > target2:
            k_cross = k  # first point (going backward) outside the circle
            break
        k -= 1
    if k_cross is None or k_cross == kmin:
        return None
    lo, hi = ts[k_cross], ts[k_cross + 1]
    sg, _ = _invert_chart(p, us[:, k_cross], seed)
    for _ in range(50):
        tm = 0.5 * (lo + hi)
        sg, _res = _invert_chart(p, sol.sol(tm), sg)
        if sg[0] ** 2 + sg[1] ** 2 > target2:
            lo = tm
        else:
            hi = tm
    t_end = 0.5 * (lo + hi)
    sg, _res = _invert_chart(p, sol.sol(t_end), sg)
    return float(t_end), (float(sg[0]), float(sg[1]))


def _shoot(ctx, w, p, xi, alpha0, omega, verbose, n_theta=48, t_max=30.0):
    """Optimize theta; return (miss, theta, L_c, sigma, a_fit).

    The miss is the transversal defect from the stable-manifold chart at the
    crossing of the sigma circle |sigma|^2 = radius_constraint; when the
    trajectory never reaches the chart, the closest approach to the origin
    (plus an offset) steers the outer frequency search instead.
    """
    f = _psi_np(ctx.problem, alpha0)
    xi1 = np.array(xi[1:5], dtype=np.complex128)
    xi2 = np.array(xi[6:10], dtype=np.complex128)
    from .systems import equilibrium_spectrum_hint

    stable, unstable = equilibrium_spectrum_hint(ctx.problem, alpha0)
    V = np.column_stack([xi1, xi2, unstable[0][1], np.conj(unstable[0][1])])
    Vinv = np.linalg.inv(V)
    target2 = ctx.config.radius_constraint
    r_esc = 6.0 * max(1.0, float(np.linalg.norm(_wu_point(ctx, w, 0.0, ctx.config.sigma0))))

    def escape(t, u):
        return float(np.dot(u, u) - r_esc**2)

    escape.terminal = True
    escape.direction = 1.0

    def integrate(theta, fine=False):
        u0 = _wu_point(ctx, w, theta, ctx.config.sigma0)
        rtol = 1e-11 if fine else 1e-9
        return solve_ivp(f, (0.0, t_max), u0, rtol=rtol, atol=rtol * 1e-2,
                         dense_output=True, events=escape)

    # validity radius of the stable-manifold chart at the target circle
    angles = np.linspace(0, 2 * math.pi, 24, endpoint=False)
    tr = math.sqrt(target2)
    chart_extent = max(
        float(np.linalg.norm(_p_point(p, tr * math.cos(a), tr * math.sin(a))))
        for a in angles
    )
    chart_cap = 1.4 * chart_extent

    def coarse(theta):
        """Closest approach to the origin: smooth, wide funnel basin."""
        sol = integrate(theta)
        ts = np.linspace(0, sol.t[-1], 900)
        dist = np.linalg.norm(sol.sol(ts), axis=0)
        k = int(np.argmax(ts > 0.25)) if sol.t[-1] > 0.25 else 0
        return float(np.min(dist[k:]))

    def fine_obj(theta, fine=False, want_sol=False):
        """Gauss-Newton chart defect at the closest approach, gated to
        genuine descents into the chart."""
        sol = integrate(theta, fine)
        ts = np.linspace(0, sol.t[-1], 900)
        us = sol.sol(ts)
        dist = np.linalg.norm(us, axis=0)
        kmin = int(np.argmin(dist))
        val = float(dist[kmin]) + 10.0
        if ts[kmin] > 0.5 and dist[kmin] < 0.8 * chart_extent:
            c_lin = (Vinv @ us[:, kmin])[0]
            sg, res = _invert_chart(p, us[:, kmin],
                                    np.array([c_lin.real, c_lin.imag]))
            if sg[0] ** 2 + sg[1] ** 2 <= 1.0:
                val = float(res)
        if want_sol:
            return val, sol
        return val

    thetas = np.linspace(0.0, 2.0 * math.pi, n_theta, endpoint=False)
    scores = []
    for th in thetas:
        try:
            scores.append((coarse(th), th))
        except Exception:
            scores.append((np.inf, th))
    scores.sort(key=lambda t: t[0])
    best_d, best_th = scores[0]
    if not np.isfinite(best_d):
        return None
    span = 2.0 * math.pi / n_theta
    a, b = best_th - span, best_th + span
    for _ in range(22):
        m1 = a + 0.382 * (b - a)
        m2 = a + 0.618 * (b - a)
        if coarse(m1) < coarse(m2):
            b = m2
        else:
            a = m1
    mid_th = 0.5 * (a + b)
    width = max(b - a, 1e-7)
    a, b = mid_th - 8 * width, mid_th + 8 * width
    for _ in range(30):
        m1 = a + 0.382 * (b - a)
        m2 = a + 0.618 * (b - a)
        if fine_obj(m1) < fine_obj(m2):
            b = m2
        else:
            a = m1
        if (b - a) < 1e-12:
            break
    theta = 0.5 * (a + b)
    miss, sol = fine_obj(theta, fine=True, want_sol=True)
    if verbose:
        print(f"    shoot omega={omega:.4f}: theta={theta:.4f} miss={miss:.3e}")
    ext = _extract_crossing(ctx, p, Vinv, sol, chart_cap, target2)
    if ext is None:
        return miss, theta, None, None, None
    t_end, sig = ext
    L_c = float(t_end)
    if L_c <= 1.0:
        return miss, theta, None, None, None
    # Chebyshev fit of the trajectory over [0, L_c]
    n_a = ctx.scheme.N_a
    snodes = lobatto_nodes(n_a)
    tt = (snodes + 1.0) * (L_c / 2.0)
    uu = sol.sol(tt)  # (4, n_a+1)
    afit = fit_values(uu.T, n_out=n_a)  # (n_a+1, 4)
    return miss, theta, L_c, sig, afit


def _assemble_guess(ctx, alpha0, gamma, lam, v, w, omega, theta, L_c, sig,
                    afit, xi, p):
    nu_a = ctx.weights.nu_a
    a = [
        WeightedSeq(SpaceKind.CHEBYSHEV, nu_a, afit[:, i].astype(np.complex128))
        for i in range(4)
    ]
    return HeteroclinicState(
        alpha=complex(alpha0),
        gamma=[g.copy() for g in gamma],
        lam=complex(lam),
        v=[s.copy() for s in v],
        w=[s.copy() for s in w],
        L_c=complex(L_c),
        theta1=complex(math.cos(theta)),
        theta2=complex(math.sin(theta)),
        sigma1=complex(sig[0]),
        sigma2=complex(sig[1]),
        omega=complex(omega),
        a=a,
        xi=list(xi),
        p=[s.copy() for s in p],
    )
