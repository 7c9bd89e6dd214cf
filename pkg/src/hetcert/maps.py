"""The zero-finding system for heteroclinic loops and its Jacobian blocks.

Residual rows, by block index (matching the unknown layout so the system is
square):

    1      Q        pseudo-arclength row
    2-5    Gamma    periodic orbit (cosine/sine Fourier)
    6      V0       bundle normalization
    7-10   V        unstable Floquet bundle (exponential Fourier)
    11-14  W        unstable-manifold coefficients (Fourier-Taylor)
    15-18  H        endpoint on the stable manifold (4 scalars)
    19-20  J        sigma-circle and theta-circle constraints
    21-24  G        connecting-segment BVP (Chebyshev)
    25     E        stable eigenpairs at the origin (K^10)
    26-29  P        stable-manifold coefficients (two-variable Taylor)

Every map is evaluated either numerically (plain complex) or rigorously
(interval scalars, radius-carrying sequences); both share one code path.
Residuals are returned in a state-shaped container whose block i holds
row i, with full convolution overflow kept (the tail part feeds the
residual bound of the validator).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .intervals import CInterval, Interval
from .spaces import (
    DomainViolation,
    Parity,
    SpaceKind,
    SpaceWeights,
    TruncationScheme,
    WeightedSeq,
    cos_sin_to_exponential,
    eval_series,
    is_rigorous,
    seq_add,
    seq_scale,
)
from .state import (
    A_BLOCKS,
    GAMMA_BLOCKS,
    MASK_BLOCKS,
    P_BLOCKS,
    SCALAR_BLOCKS,
    V_BLOCKS,
    W_BLOCKS,
    XI_BLOCK,
    HeteroclinicState,
    SolverConfig,
    StateLayout,
    TangentVector,
)
from .systems import (
    ProblemDefinition,
    diff_terms,
    dpsi_origin,
    eval_terms,
    psi_eval,
    psi_jacobian,
)

__all__ = [
    "MapContext",
    "map_gamma",
    "map_bundle",
    "map_manifold_u",
    "map_eigenpairs",
    "map_manifold_s",
    "map_orbit",
    "map_endpoint",
    "map_constraints",
    "assemble_f",
    "assemble_F",
    "q_row",
    "jacobian_blocks",
    "flat_jacobian",
    "residual_norms",
]


@dataclass
class MapContext:
    problem: ProblemDefinition
    scheme: TruncationScheme
    weights: SpaceWeights
    config: SolverConfig

    def __post_init__(self) -> None:
        self.layout = StateLayout(self.scheme, self.weights)

    @property
    def degree(self) -> int:
        return self.problem.degree


# ---------------------------------------------------------------------------
# scalar/sequence helpers shared by the numerical and rigorous paths
# ---------------------------------------------------------------------------


def _is_iv(x) -> bool:
    return isinstance(x, (CInterval, Interval))


def _ci(x) -> CInterval:
    if isinstance(x, CInterval):
        return x
    if isinstance(x, Interval):
        return CInterval(x, Interval.point(0.0))
    return CInterval.point(complex(x))


def _sc(x) -> tuple[complex, float]:
    """Midpoint and (modulus) radius of a scalar."""
    if isinstance(x, CInterval):
        return x.mid, x.re.rad + x.im.rad
    if isinstance(x, Interval):
        return complex(x.mid, 0.0), x.rad
    return complex(x), 0.0


def _smul(a, b):
    if _is_iv(a) or _is_iv(b):
        return _ci(a) * _ci(b)
    return complex(a) * complex(b)


def _sadd(a, b):
    if _is_iv(a) or _is_iv(b):
        return _ci(a) + _ci(b)
    return complex(a) + complex(b)


def _ssub(a, b):
    return _sadd(a, _smul(b, -1.0))


def _seq_arrays(x: WeightedSeq) -> tuple[np.ndarray, np.ndarray | None]:
    if x.is_exact():
        return x.mid, None
    r1, r2 = x.rad_arrays()
    return x.mid, r1 + r2


def _mk_seq(kind, nu, mid, rad, parity=Parity.COS) -> WeightedSeq:
    if rad is None:
        return WeightedSeq(kind, nu, mid, parity=parity)
    return WeightedSeq(kind, nu, mid, rad, rad.copy(), parity)


def _diag_apply(x: WeightedSeq, dmid: np.ndarray, drad, parity_out=None) -> WeightedSeq:
    """Mode-wise multiply by a diagonal with midpoints dmid and radius drad."""
    mid, rad = _seq_arrays(x)
    out_mid = mid * dmid
    if rad is None and (drad is None or np.all(np.asarray(drad) == 0.0)):
        rig_in = not x.is_exact()
        out_rad = None if not rig_in else np.zeros(out_mid.shape)
    else:
        rad = np.zeros(mid.shape) if rad is None else rad
        dr = np.zeros(out_mid.shape) if drad is None else np.broadcast_to(drad, out_mid.shape)
        out_rad = (
            np.abs(mid) * dr
            + rad * (np.abs(dmid) + dr)
            + np.abs(out_mid) * 1e-15
            + 5e-324
        ) * (1.0 + 1e-14)
    return _mk_seq(x.kind, x.weight, out_mid, out_rad,
                   parity_out if parity_out is not None else x.parity)


def _seq_sub(a: WeightedSeq, b: WeightedSeq) -> WeightedSeq:
    return seq_add(a, seq_scale(b, -1.0))


def _cheb_endpoint(a: WeightedSeq, sign: int):
    """a(+1) = a0 + 2 sum a_n, or a(-1) = a0 + 2 sum (-1)^n a_n."""
    mid, rad = _seq_arrays(a)
    n = np.arange(mid.size)
    fac = np.where(n == 0, 1.0, 2.0) * (np.float64(sign) ** n)
    if rad is None:
        return complex(np.sum(mid * fac))
    acc = _ci(0.0)
    for k in range(mid.size):
        c = CInterval(
            Interval.from_mid_rad(mid[k].real, float(rad[k])),
            Interval.from_mid_rad(mid[k].imag, float(rad[k])),
        )
        acc = acc + c * float(fac[k])
    return acc


def _wu_eval_component(w: WeightedSeq, th1, th2, sigma0: float):
    """W evaluated on the level set: sum w_{n,m} (t1 + sgn(n) i t2)^|n| s0^m."""
    if _is_iv(th1) or _is_iv(th2) or not w.is_exact():
        t1 = _ci(th1)
        t2 = _ci(th2)
        return eval_series(w, (t1, t2, CInterval.point(complex(sigma0, 0.0))))
    half = w.halfwidth
    t1, t2 = complex(th1), complex(th2)
    zp, zm = t1 + 1j * t2, t1 - 1j * t2
    acc = 0.0 + 0.0j
    spows = sigma0 ** np.arange(w.mid.shape[1])
    for n in range(-half, half + 1):
        base = (zp if n >= 0 else zm) ** abs(n)
        acc += base * np.sum(w.mid[n + half, :] * spows)
    return acc


def _p_eval_component(p: WeightedSeq, s1, s2):
    """P evaluated at (s1 + i s2, s1 - i s2)."""
    if _is_iv(s1) or _is_iv(s2) or not p.is_exact():
        z1 = _ci(s1) + CInterval(Interval.point(0.0), Interval.point(1.0)) * _ci(s2)
        z2 = _ci(s1) - CInterval(Interval.point(0.0), Interval.point(1.0)) * _ci(s2)
        return eval_series(p, (z1, z2))
    z1 = complex(s1) + 1j * complex(s2)
    z2 = complex(s1) - 1j * complex(s2)
    rows, cols = p.mid.shape
    acc = 0.0 + 0.0j
    pw1 = z1 ** np.arange(rows)
    pw2 = z2 ** np.arange(cols)
    acc = pw1 @ p.mid @ pw2
    return acc


# ---------------------------------------------------------------------------
# component maps (residuals)
# ---------------------------------------------------------------------------


def map_gamma(ctx: MapContext, gamma, omega, alpha) -> list[WeightedSeq]:
    """Periodic-orbit residual: k gamma_k plus/minus omega Psi(gamma)_k."""
    psi = psi_eval(ctx.problem, gamma, alpha)
    out = []
    for i in range(4):
        g = gamma[i]
        k = np.arange(g.mid.size, dtype=np.float64)
        flipped = Parity.SIN if g.parity is Parity.COS else Parity.COS
        lead = _diag_apply(g, k.astype(np.complex128), None, parity_out=flipped)
        sign = 1.0 if i % 2 == 0 else -1.0
        out.append(seq_add(lead, seq_scale(psi[i], _smul(omega, sign))))
    return out


def _bundle_jacobian(ctx: MapContext, gamma, alpha):
    gF = cos_sin_to_exponential(gamma, ctx.weights.nu_v, strict=False)
    jac = psi_jacobian(ctx.problem, gF, alpha)
    return gF, jac


def _jac_apply(jac, vecs, row: int, nu: float, kind: SpaceKind):
    """(jac @ vecs)[row] where jac entries are 0.0, 1.0 or sequences."""
    acc = None
    for j in range(4):
        e = jac[row][j]
        if isinstance(e, float) and e == 0.0:
            continue
        term = vecs[j] if isinstance(e, float) else _conv_pad(e, vecs[j])
        acc = term if acc is None else seq_add(acc, term)
    if acc is None:
        z = np.zeros(1, dtype=np.complex128)
        return WeightedSeq(kind, nu, z)
    return acc


def _conv_pad(a: WeightedSeq, b: WeightedSeq) -> WeightedSeq:
    from .spaces import convolve

    return convolve(a, b)


def map_bundle(ctx: MapContext, gamma, v, lam, omega, alpha):
    """Floquet-bundle residual (normalization row first)."""
    gF, jac = _bundle_jacobian(ctx, gamma, alpha)
    lbar = ctx.config.lbar - 1
    mid, rad = _seq_arrays(v[lbar])
    if rad is None:
        v0 = complex(np.sum(mid)) - ctx.config.rho
    else:
        acc = _ci(0.0)
        for k in range(mid.size):
            acc = acc + CInterval(
                Interval.from_mid_rad(mid[k].real, float(rad[k])),
                Interval.from_mid_rad(mid[k].imag, float(rad[k])),
            )
        v0 = acc - _ci(ctx.config.rho)
    rows = []
    lam_mid, lam_rad = _sc(lam)
    for i in range(4):
        half = v[i].halfwidth
        k = np.arange(-half, half + 1, dtype=np.float64)
        dmid = 1j * k + lam_mid
        lead = _diag_apply(v[i], dmid, lam_rad if lam_rad else None)
        conv = _jac_apply(jac, v, i, ctx.weights.nu_v, SpaceKind.EXP_FOURIER)
        rows.append(seq_add(lead, seq_scale(conv, _smul(omega, -1.0))))
    return v0, rows


def _ft_pad_embed(src_mid, src_rad, half_out, col: int, ncols: int, kind_nu):
    """Embed a one-axis sequence into column ``col`` of a Fourier-Taylor grid."""
    mid = np.zeros((2 * half_out + 1, ncols), dtype=np.complex128)
    rad = None
    n_in = src_mid.size
    half_in = (n_in - 1) // 2
    mid[half_out - half_in: half_out + half_in + 1, col] = src_mid
    if src_rad is not None:
        rad = np.zeros(mid.shape)
        rad[half_out - half_in: half_out + half_in + 1, col] = src_rad
    return mid, rad


def map_manifold_u(ctx: MapContext, gamma, v, lam, w, omega, alpha) -> list[WeightedSeq]:
    """Invariance-equation residual of the unstable-manifold coefficients."""
    gF = cos_sin_to_exponential(gamma, ctx.weights.nu_w, strict=False)
    psi = psi_eval(ctx.problem, w, alpha)
    lam_mid, lam_rad = _sc(lam)
    out = []
    for i in range(4):
        s = psi[i]
        s_mid, s_rad = _seq_arrays(s)
        rows, cols = s_mid.shape
        halfs = (rows - 1) // 2
        wm, wr = _seq_arrays(w[i])
        half_w = w[i].halfwidth
        ncols_w = w[i].mid.shape[1]
        # residual container sized to the nonlinearity's support
        R_half = max(halfs, half_w)
        R_cols = max(cols, ncols_w)
        n_ax = np.arange(-R_half, R_half + 1, dtype=np.float64)[:, None]
        m_ax = np.arange(R_cols, dtype=np.float64)[None, :]
        wm_p, wr_p = _ft_pad_grid(wm, wr, R_half, R_cols)
        s_mid_p, s_rad_p = _ft_pad_grid(s_mid, s_rad, R_half, R_cols)
        rig = (wr is not None) or (s_rad is not None) or _is_iv(lam) or _is_iv(omega)

        dmid = 1j * n_ax + lam_mid * m_ax
        om_mid, om_rad = _sc(omega)
        res_mid = dmid * wm_p - om_mid * s_mid_p
        # pinned Taylor rows m = 0, 1
        gm, gr = _seq_arrays(gF[i])
        vm, vr = _seq_arrays(v[i])
        g_p, grp = _ft_pad_embed(gm, gr, R_half, 0, 1, None)
        v_p, vrp = _ft_pad_embed(vm, vr, R_half, 0, 1, None)
        res_mid[:, 0] = wm_p[:, 0] - g_p[:, 0]
        if R_cols > 1:
            res_mid[:, 1] = wm_p[:, 1] - v_p[:, 0]
        if not rig:
            out.append(WeightedSeq(SpaceKind.FOURIER_TAYLOR, ctx.weights.nu_w, res_mid))
            continue
        wr_p = np.zeros(res_mid.shape) if wr_p is None else wr_p
        s_rad_p = np.zeros(res_mid.shape) if s_rad_p is None else s_rad_p
        drad = lam_rad * m_ax * np.ones(res_mid.shape)
        rad = (
            np.abs(wm_p) * drad
            + wr_p * (np.abs(dmid) + drad)
            + abs(om_mid) * s_rad_p
            + om_rad * (np.abs(s_mid_p) + s_rad_p)
            + np.abs(res_mid) * 2e-15
            + 5e-324
        ) * (1.0 + 1e-14)
        rad[:, 0] = (wr_p[:, 0] + (0.0 if grp is None else grp[:, 0])
                     + np.abs(res_mid[:, 0]) * 1e-15) * (1.0 + 1e-14)
        if R_cols > 1:
            rad[:, 1] = (wr_p[:, 1] + (0.0 if vrp is None else vrp[:, 0])
                         + np.abs(res_mid[:, 1]) * 1e-15) * (1.0 + 1e-14)
        out.append(WeightedSeq(SpaceKind.FOURIER_TAYLOR, ctx.weights.nu_w, res_mid, rad, rad.copy()))
    return out


def _ft_pad_grid(mid, rad, half_out, cols_out):
    rows_out = 2 * half_out + 1
    half_in = (mid.shape[0] - 1) // 2
    out = np.zeros((rows_out, cols_out), dtype=np.complex128)
    out[half_out - half_in: half_out + half_in + 1, : mid.shape[1]] = mid
    orad = None
    if rad is not None:
        orad = np.zeros((rows_out, cols_out))
        orad[half_out - half_in: half_out + half_in + 1, : mid.shape[1]] = rad
    return out, orad


def map_eigenpairs(ctx: MapContext, xi, alpha) -> list:
    """Eigen-residuals and normalization rows for the stable pair at 0."""
    rig = _is_iv(alpha) or any(_is_iv(z) for z in xi)
    A0 = dpsi_origin(ctx.problem, alpha, rigorous=rig)
    lam1, lam2 = xi[0], xi[5]
    xi1, xi2 = xi[1:5], xi[6:10]
    rows = []
    for lam_i, xi_i, kbar, rho_i in (
        (lam1, xi1, ctx.config.kbar1, ctx.config.rho1),
        (lam2, xi2, ctx.config.kbar2, ctx.config.rho2),
    ):
        for r in range(4):
            acc = _smul(xi_i[r], _smul(lam_i, -1.0))
            for c in range(4):
                acc = _sadd(acc, _smul(A0[r][c], xi_i[c]))
            rows.append(acc)
        rows.append(_ssub(xi_i[kbar - 1], rho_i))
    return rows


def map_manifold_s(ctx: MapContext, xi, p, alpha) -> list[WeightedSeq]:
    """Invariance-equation residual of the stable-manifold coefficients."""
    psi = psi_eval(ctx.problem, p, alpha)
    lam1_m, lam1_r = _sc(xi[0])
    lam2_m, lam2_r = _sc(xi[5])
    out = []
    for i in range(4):
        s_mid, s_rad = _seq_arrays(psi[i])
        pm, pr = _seq_arrays(p[i])
        rows = max(s_mid.shape[0], pm.shape[0])
        cols = max(s_mid.shape[1], pm.shape[1])
        n_ax = np.arange(rows, dtype=np.float64)[:, None]
        m_ax = np.arange(cols, dtype=np.float64)[None, :]
        pm_p = np.zeros((rows, cols), dtype=np.complex128)
        pm_p[: pm.shape[0], : pm.shape[1]] = pm
        s_p = np.zeros((rows, cols), dtype=np.complex128)
        s_p[: s_mid.shape[0], : s_mid.shape[1]] = s_mid
        rig = (pr is not None) or (s_rad is not None) or _is_iv(xi[0]) or _is_iv(alpha)
        dmid = lam1_m * n_ax + lam2_m * m_ax
        res = dmid * pm_p - s_p
        xi1_m = [_sc(z)[0] for z in xi[1:5]]
        xi2_m = [_sc(z)[0] for z in xi[6:10]]
        res[0, 0] = pm_p[0, 0]
        res[1, 0] = pm_p[1, 0] - xi1_m[i]
        res[0, 1] = pm_p[0, 1] - xi2_m[i]
        if not rig:
            out.append(WeightedSeq(SpaceKind.TAYLOR2, ctx.weights.nu_p, res))
            continue
        pr_p = np.zeros(res.shape)
        if pr is not None:
            pr_p[: pr.shape[0], : pr.shape[1]] = pr
        sr_p = np.zeros(res.shape)
        if s_rad is not None:
            sr_p[: s_rad.shape[0], : s_rad.shape[1]] = s_rad
        drad = lam1_r * n_ax + lam2_r * m_ax
        rad = (
            np.abs(pm_p) * drad
            + pr_p * (np.abs(dmid) + drad)
            + sr_p
            + np.abs(res) * 2e-15
            + 5e-324
        ) * (1.0 + 1e-14)
        xi1_r = [_sc(z)[1] for z in xi[1:5]]
        xi2_r = [_sc(z)[1] for z in xi[6:10]]
        rad[0, 0] = pr_p[0, 0] * (1 + 1e-14)
        rad[1, 0] = (pr_p[1, 0] + xi1_r[i] + abs(res[1, 0]) * 1e-15) * (1 + 1e-14)
        rad[0, 1] = (pr_p[0, 1] + xi2_r[i] + abs(res[0, 1]) * 1e-15) * (1 + 1e-14)
        out.append(WeightedSeq(SpaceKind.TAYLOR2, ctx.weights.nu_p, res, rad, rad.copy()))
    return out


def map_orbit(ctx: MapContext, w, L_c, theta1, theta2, a, alpha) -> list[WeightedSeq]:
    """Chebyshev residual of the rescaled connecting-segment BVP."""
    psi = psi_eval(ctx.problem, a, alpha)
    half_lc = _smul(L_c, 0.5)
    out = []
    for i in range(4):
        s = psi[i]
        s_mid, s_rad = _seq_arrays(s)
        am, ar = _seq_arrays(a[i])
        L = max(s_mid.size + 2, am.size + 1)
        sm = np.zeros(L + 1, dtype=np.complex128)
        sm[: s_mid.size] = s_mid
        amp = np.zeros(L, dtype=np.complex128)
        amp[: am.size] = am
        rig = (ar is not None) or (s_rad is not None) or _is_iv(L_c) or _is_iv(theta1)
        n = np.arange(1, L, dtype=np.float64)
        lc_m, lc_r = _sc(half_lc)
        res = np.zeros(L, dtype=np.complex128)
        res[1:] = 2.0 * n * amp[1:] + lc_m * (sm[2: L + 1] - sm[0: L - 1])
        wu = _wu_eval_component(w[i], theta1, theta2, ctx.config.sigma0)
        bnd = _cheb_endpoint(a[i], -1)
        row0 = _ssub(wu, bnd)
        if not rig:
            res[0] = complex(row0)
            out.append(WeightedSeq(SpaceKind.CHEBYSHEV, ctx.weights.nu_a, res))
            continue
        row0 = _ci(row0)
        res[0] = row0.mid
        srp = np.zeros(L + 1)
        if s_rad is not None:
            srp[: s_rad.size] = s_rad
        arp = np.zeros(L)
        if ar is not None:
            arp[: ar.size] = ar
        rad = np.zeros(L)
        shift_mid = np.abs(sm[2: L + 1]) + np.abs(sm[0: L - 1])
        shift_rad = srp[2: L + 1] + srp[0: L - 1]
        rad[1:] = (
            2.0 * n * arp[1:]
            + abs(lc_m) * shift_rad
            + lc_r * (shift_mid + shift_rad)
            + np.abs(res[1:]) * 2e-15
            + 5e-324
        ) * (1.0 + 1e-14)
        rad[0] = max(row0.re.rad, row0.im.rad) * (1 + 4e-16) + 5e-324
        out.append(WeightedSeq(SpaceKind.CHEBYSHEV, ctx.weights.nu_a, res, rad, rad.copy()))
    return out


def map_endpoint(ctx: MapContext, sigma1, sigma2, a, p) -> list:
    """Endpoint-on-stable-manifold residual (4 scalars)."""
    s1m, _ = _sc(sigma1)
    s2m, _ = _sc(sigma2)
    if abs(s1m) ** 2 + abs(s2m) ** 2 >= 1.0:
        raise DomainViolation("sigma outside the unit polydisc")
    rows = []
    for i in range(4):
        pe = _p_eval_component(p[i], sigma1, sigma2)
        ae = _cheb_endpoint(a[i], +1)
        rows.append(_ssub(pe, ae))
    return rows


def map_constraints(ctx: MapContext, sigma1, sigma2, theta1, theta2) -> list:
    """(radius_constraint - s1^2 - s2^2, 1 - t1^2 - t2^2)."""
    rc = ctx.config.radius_constraint
    j1 = _ssub(rc, _sadd(_smul(sigma1, sigma1), _smul(sigma2, sigma2)))
    j2 = _ssub(1.0, _sadd(_smul(theta1, theta1), _smul(theta2, theta2)))
    return [j1, j2]


def assemble_f(ctx: MapContext, x: HeteroclinicState) -> HeteroclinicState:
    """Stack all residual rows in a state-shaped container (Q slot zero)."""
    gam = map_gamma(ctx, x.gamma, x.omega, x.alpha)
    v0, vres = map_bundle(ctx, x.gamma, x.v, x.lam, x.omega, x.alpha)
    wres = map_manifold_u(ctx, x.gamma, x.v, x.lam, x.w, x.omega, x.alpha)
    hres = map_endpoint(ctx, x.sigma1, x.sigma2, x.a, x.p)
    jres = map_constraints(ctx, x.sigma1, x.sigma2, x.theta1, x.theta2)
    gres = map_orbit(ctx, x.w, x.L_c, x.theta1, x.theta2, x.a, x.alpha)
    eres = map_eigenpairs(ctx, x.xi, x.alpha)
    pres = map_manifold_s(ctx, x.xi, x.p, x.alpha)
    zero = _ci(0.0) if _is_iv(x.alpha) else 0.0 + 0.0j
    return HeteroclinicState(
        alpha=zero,
        gamma=gam,
        lam=v0,
        v=vres,
        w=wres,
        L_c=hres[0],
        theta1=hres[1],
        theta2=hres[2],
        sigma1=hres[3],
        sigma2=jres[0],
        omega=jres[1],
        a=gres,
        xi=eres,
        p=pres,
    )


def q_row(ctx: MapContext, x: HeteroclinicState, base: HeteroclinicState,
          tangent: TangentVector):
    """Signed arclength displacement (x - base) . eta over the masked blocks."""
    acc = None
    for i in MASK_BLOCKS:
        if i in SCALAR_BLOCKS:
            term = _smul(_ssub(x.block(i), base.block(i)), tangent.state.block(i))
        else:
            xs, xr = _seq_arrays(x.block(i))
            bs, br = _seq_arrays(base.block(i))
            es, er = _seq_arrays(tangent.state.block(i))
            n = max(xs.size, bs.size, es.size)

            def pad(arr, rad):
                m = np.zeros(n, dtype=np.complex128)
                m[: arr.size] = arr
                r = np.zeros(n)
                if rad is not None:
                    r[: rad.size] = rad
                return m, r

            xm, xrr = pad(xs, xr)
            bm, brr = pad(bs, br)
            em, err = pad(es, er)
            dm = xm - bm
            dr = xrr + brr
            if xr is None and br is None and er is None:
                term = complex(np.sum(dm * em))
            else:
                mid = np.sum(dm * em)
                rad = float(
                    np.sum(np.abs(dm) * err + dr * (np.abs(em) + err))
                    + abs(mid) * n * 2e-16
                    + 1e-320
                ) * (1 + 1e-12)
                term = CInterval(
                    Interval.from_mid_rad(mid.real, rad),
                    Interval.from_mid_rad(mid.imag, rad),
                )
        acc = term if acc is None else _sadd(acc, term)
    return acc


def assemble_F(ctx: MapContext, x: HeteroclinicState, base: HeteroclinicState,
               tangent: TangentVector) -> HeteroclinicState:
    """Extended residual: Q in the alpha slot, f elsewhere."""
    res = assemble_f(ctx, x)
    res.alpha = q_row(ctx, x, base, tangent)
    return res


def residual_norms(ctx: MapContext, res: HeteroclinicState) -> np.ndarray:
    """Per-block norm upper bounds of a residual container."""
    out = np.zeros(29)
    for i in range(1, 30):
        out[i - 1] = ctx.layout.block_norm(res, i).hi
    return out
