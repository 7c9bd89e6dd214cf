"""Block Jacobian of the extended zero-finding map.

Each nonzero block (i, j) of DF is one of
  * a mode-diagonal part (the linear spectral terms),
  * a discrete-convolution operator by a finite multiplier sequence,
  * a pinned/boundary row structure (manifold Taylor pins, Chebyshev
    endpoint rows, evaluation functionals), or
  * a small dense matrix (eigenpair block, scalar constraints).

The builders produce midpoint matrices plus optional radius matrices, so the
same code path serves the numerical Newton solver and the rigorous operator
assembly of the validator.  Convolution blocks are built by vectorized index
lookups into padded multiplier arrays, never by applying the operator
column-by-column.
"""

from __future__ import annotations

import numpy as np

from .intervals import CInterval, Interval
from .spaces import Parity, SpaceKind, WeightedSeq, cos_sin_to_exponential
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
    StateLayout,
    TangentVector,
)
from .systems import diff_terms, dpsi_origin, eval_terms, psi_eval, psi_jacobian
from .maps import MapContext, _is_iv, _sc, _seq_arrays

__all__ = ["jacobian_blocks", "flat_jacobian", "conv_block", "multiplier_seqs"]


# ---------------------------------------------------------------------------
# multiplier lookup tables
# ---------------------------------------------------------------------------


def _lookup_1d_twosided(z_mid, z_rad, dn):
    half = (z_mid.size - 1) // 2
    ok = np.abs(dn) <= half
    idx = np.clip(dn + half, 0, z_mid.size - 1)
    mid = np.where(ok, z_mid[idx], 0.0)
    rad = None if z_rad is None else np.where(ok, z_rad[idx], 0.0)
    return mid, rad


def _lookup_1d_parity(z_mid, z_rad, parity: Parity, dn):
    kmax = z_mid.size - 1
    ok = np.abs(dn) <= kmax
    idx = np.clip(np.abs(dn), 0, kmax)
    s = np.sign(dn) if parity is Parity.SIN else 1.0
    mid = np.where(ok, z_mid[idx] * s, 0.0)
    rad = None if z_rad is None else np.where(ok, z_rad[idx], 0.0)
    return mid, rad


def _lookup_2d(z_mid, z_rad, dn, dm, twosided_rows: bool):
    rows, cols = z_mid.shape
    if twosided_rows:
        half = (rows - 1) // 2
        okn = np.abs(dn) <= half
        ridx = np.clip(dn + half, 0, rows - 1)
    else:
        okn = (dn >= 0) & (dn < rows)
        ridx = np.clip(dn, 0, rows - 1)
    okm = (dm >= 0) & (dm < cols)
    cidx = np.clip(dm, 0, cols - 1)
    ok = okn & okm
    mid = np.where(ok, z_mid[ridx, cidx], 0.0)
    rad = None if z_rad is None else np.where(ok, z_rad[ridx, cidx], 0.0)
    return mid, rad


def _col_branches(col_modes, col_parity: Parity | None):
    """Two-sided positions and factors realizing a one-sided column lift."""
    if col_parity is None:  # genuinely two-sided or 2-d input: no folding
        l = np.asarray(col_modes)
        return [(l, np.ones(l.size))]
    l = np.asarray(col_modes)
    if col_parity is Parity.COS:
        fplus = np.ones(l.size)
        fminus = np.where(l >= 1, 1.0, 0.0)
    else:
        fplus = np.where(l >= 1, 1.0, 0.0)
        fminus = np.where(l >= 1, -1.0, 0.0)
    return [(l, fplus), (-l, fminus)]


def conv_block(
    z: WeightedSeq,
    row_modes,
    col_modes,
    col_parity: Parity | None,
    shifts=((0, 1.0),),
    row_mask=None,
):
    """Matrix of h -> sum_shifts c_s * (z * lift(h))_{row + s}.

    ``row_modes``/``col_modes`` are mode lists (ints, or (n, m) pairs for the
    2-d kinds); ``col_parity`` folds one-sided cosine/sine inputs;
    ``shifts`` is a list of (offset, scalar); ``row_mask`` (bool per row)
    restricts the rows the operator writes.
    """
    z_mid, z_rad = _seq_arrays(z)
    rig = z_rad is not None or any(_is_iv(c) for _, c in shifts)
    if rig and z_rad is None:
        z_rad = np.zeros(z_mid.shape)
    two_d = z_mid.ndim == 2
    nr, nc = len(row_modes), len(col_modes)
    mid = np.zeros((nr, nc), dtype=np.complex128)
    rad = np.zeros((nr, nc)) if rig else None

    if two_d:
        rn = np.asarray([m[0] for m in row_modes])[:, None]
        rm = np.asarray([m[1] for m in row_modes])[:, None]
        cn = np.asarray([m[0] for m in col_modes])[None, :]
        cm = np.asarray([m[1] for m in col_modes])[None, :]
        twosided = z.kind is SpaceKind.FOURIER_TAYLOR
        for off, c in shifts:
            cm_, cr_ = _sc(c)
            m, r = _lookup_2d(z_mid, z_rad, rn - cn + off, rm - cm, twosided)
            mid += cm_ * m
            if rig:
                rad += abs(cm_) * r + cr_ * (np.abs(m) + r)
    else:
        rvals = np.asarray(row_modes)[:, None]
        sign_total = 1.0
        if z.kind in (SpaceKind.COSINE_FOURIER, SpaceKind.CHEBYSHEV):
            if z.parity is Parity.SIN and col_parity is Parity.SIN:
                sign_total = -1.0
            look = lambda dn: _lookup_1d_parity(z_mid, z_rad, z.parity, dn)
        else:
            look = lambda dn: _lookup_1d_twosided(z_mid, z_rad, dn)
        for off, c in shifts:
            cm_, cr_ = _sc(c)
            for pos, fac in _col_branches(col_modes, col_parity):
                m, r = look(rvals + off - pos[None, :])
                m = m * fac[None, :]
                mid += cm_ * sign_total * m
                if rig:
                    rr = (r if r is not None else 0.0) * np.abs(fac[None, :])
                    rad += abs(cm_) * rr + cr_ * (np.abs(m) + rr)
    if rig:
        rad = (rad + np.abs(mid) * 4e-15 + 5e-324) * (1 + 1e-14)
    if row_mask is not None:
        mid[~row_mask, :] = 0.0
        if rig:
            rad[~row_mask, :] = 0.0
    return mid, rad


# ---------------------------------------------------------------------------
# block metadata helpers
# ---------------------------------------------------------------------------


def _mode_arrays(layout: StateLayout, i: int):
    modes = layout.modes[i]
    if isinstance(modes[0], tuple):
        return np.asarray([m[0] for m in modes]), np.asarray([m[1] for m in modes])
    return np.asarray(modes), None


def _col_parity(j: int) -> Parity | None:
    if j in GAMMA_BLOCKS:
        return Parity.COS if j in (2, 4) else Parity.SIN
    if j in A_BLOCKS:
        return Parity.COS
    return None


def _strip2(layout: StateLayout, i: int, s: WeightedSeq):
    """Column vector (mid, rad) of a sequence restricted to block i's modes."""
    modes = layout.modes[i]
    mid = np.zeros((len(modes), 1), dtype=np.complex128)
    m_arr, r_arr = _seq_arrays(s)
    rad = None if r_arr is None else np.zeros((len(modes), 1))
    for k, idx in enumerate(modes):
        try:
            si = s._storage_index(idx)
        except IndexError:
            continue
        mid[k, 0] = m_arr[si]
        if rad is not None:
            rad[k, 0] = r_arr[si]
    return mid, rad


def _add_blocks(dst, key, mid, rad):
    if key in dst:
        m0, r0 = dst[key]
        mid = m0 + mid
        if r0 is not None or rad is not None:
            r0 = np.zeros(m0.shape) if r0 is None else r0
            rad = np.zeros(mid.shape) if rad is None else rad
            rad = (r0 + rad + np.abs(mid) * 2e-16) * (1 + 1e-15)
        dst[key] = (mid, rad)
    else:
        dst[key] = (mid, rad)


def _diag_block(layout, i, dmid, drad, rig):
    n = layout.dims[i]
    mid = np.zeros((n, n), dtype=np.complex128)
    np.fill_diagonal(mid, dmid)
    rad = None
    if rig:
        rad = np.zeros((n, n))
        if drad is not None:
            np.fill_diagonal(rad, drad)
    return mid, rad


# ---------------------------------------------------------------------------
# per-row-group multipliers (shared with the validator's tail bounds)
# ---------------------------------------------------------------------------


def multiplier_seqs(ctx: MapContext, x: HeteroclinicState) -> dict:
    """Convolution multipliers z_{i,j} of DF's sequence-to-sequence blocks.

    Keys are (i, j); values are (seq z, shifts) with shifts the row-offset
    structure.  These define both the finite Jacobian blocks and the tail
    operator bounds.
    """
    out = {}
    nl = ctx.problem.nonlinearity
    wts = ctx.weights
    # Gamma rows: (-1)^(i'+1) omega d(Psi_i')/d(gamma_j')
    jac_g = psi_jacobian(ctx.problem, x.gamma, x.alpha)
    for ip in range(4):
        sign = 1.0 if ip % 2 == 0 else -1.0
        for jp in range(4):
            e = jac_g[ip][jp]
            if isinstance(e, float):
                if e == 0.0:
                    continue
                kind = SpaceKind.COSINE_FOURIER
                z = WeightedSeq(kind, wts.nu_gamma,
                                np.array([e], dtype=np.complex128))
            else:
                z = e
            from .spaces import seq_scale

            out[(2 + ip, 2 + jp)] = (seq_scale(z, _mul_sc(x.omega, sign)), ((0, 1.0),))
    # V rows: -omega * DPsi(gamma^F)
    gF = cos_sin_to_exponential(x.gamma, wts.nu_v, strict=False)
    jac_v = psi_jacobian(ctx.problem, gF, x.alpha)
    for ip in range(4):
        for jp in range(4):
            e = jac_v[ip][jp]
            if isinstance(e, float):
                if e == 0.0:
                    continue
                z = WeightedSeq(SpaceKind.EXP_FOURIER, wts.nu_v,
                                np.array([e], dtype=np.complex128))
            else:
                z = e
            from .spaces import seq_scale

            out[(7 + ip, 7 + jp)] = (seq_scale(z, _mul_sc(x.omega, -1.0)), ((0, 1.0),))
    # V rows vs gamma: -omega * (second derivatives * v), acting through the
    # cosine-to-exponential embedding
    hess = _hessian_times_v(ctx, gF, x.v, x.alpha, x.omega, wts.nu_v)
    for (ip, jp), z in hess.items():
        out[(7 + ip, 2 + jp)] = (z, ((0, 1.0),))
    # W rows: -omega * DPsi(w) on Taylor rows m >= 2
    jac_w = psi_jacobian(ctx.problem, x.w, x.alpha)
    for ip in range(4):
        for jp in range(4):
            e = jac_w[ip][jp]
            if isinstance(e, float):
                if e == 0.0:
                    continue
                z = WeightedSeq(SpaceKind.FOURIER_TAYLOR, wts.nu_w,
                                np.array([[e]], dtype=np.complex128))
            else:
                z = e
            from .spaces import seq_scale

            out[(11 + ip, 11 + jp)] = (seq_scale(z, _mul_sc(x.omega, -1.0)), ((0, 1.0),))
    # G rows: (L_c/2) [ (z*h)_{n+1} - (z*h)_{n-1} ], z = DPsi(a)
    jac_a = psi_jacobian(ctx.problem, x.a, x.alpha)
    half_lc = _mul_sc(x.L_c, 0.5)
    neg_half_lc = _mul_sc(x.L_c, -0.5)
    for ip in range(4):
        for jp in range(4):
            e = jac_a[ip][jp]
            if isinstance(e, float):
                if e == 0.0:
                    continue
                z = WeightedSeq(SpaceKind.CHEBYSHEV, wts.nu_a,
                                np.array([e], dtype=np.complex128))
            else:
                z = e
            out[(21 + ip, 21 + jp)] = (z, ((1, half_lc), (-1, neg_half_lc)))
    # P rows: -DPsi(p) on rows n+m >= 2
    jac_p = psi_jacobian(ctx.problem, x.p, x.alpha)
    for ip in range(4):
        for jp in range(4):
            e = jac_p[ip][jp]
            if isinstance(e, float):
                if e == 0.0:
                    continue
                z = WeightedSeq(SpaceKind.TAYLOR2, wts.nu_p,
                                np.array([[e]], dtype=np.complex128))
            else:
                z = e
            from .spaces import seq_scale

            out[(26 + ip, 26 + jp)] = (seq_scale(z, -1.0), ((0, 1.0),))
    return out


def _mul_sc(a, c):
    if _is_iv(a):
        return CInterval.coerce(a) * c if not isinstance(c, (CInterval, Interval)) else CInterval.coerce(a) * CInterval.coerce(c)
    if _is_iv(c):
        return CInterval.coerce(c) * a
    return complex(a) * c


def _hessian_times_v(ctx, gF, v, alpha, omega, nu):
    """Multipliers of D_gamma(V rows): -omega sum_j'' d2f/du du'' (gF) * v_j''.

    Only the f-rows (2nd and 4th components) are nonzero; columns are the
    u- and v- (first and third) gamma components.
    """
    from .spaces import seq_add, seq_scale

    nlf = {1: ctx.problem.nonlinearity.f1, 3: ctx.problem.nonlinearity.f2}
    out = {}
    for ip, terms in ((1, nlf[1]), (3, nlf[3])):
        for jp, var in ((0, "u"), (2, "v")):
            # d/d gamma_{jp} of [df/du * v1 + df/dv * v3]
            acc = None
            for vcomp, var2 in ((v[0], "u"), (v[2], "v")):
                tt = diff_terms(diff_terms(terms, var2), var)
                if not tt:
                    continue
                g = eval_terms(tt, gF[0], gF[2], alpha)
                if isinstance(g, WeightedSeq):
                    term = _conv(g, vcomp)
                else:
                    term = seq_scale(vcomp, g)
                acc = term if acc is None else seq_add(acc, term)
            if acc is not None:
                out[(ip, jp)] = seq_scale(acc, _mul_sc(omega, -1.0))
    return out


def _conv(a, b):
    from .spaces import convolve

    return convolve(a, b)


# ---------------------------------------------------------------------------
# the full block Jacobian
# ---------------------------------------------------------------------------


def jacobian_blocks(ctx: MapContext, x: HeteroclinicState,
                    tangent: TangentVector | None = None) -> dict:
    """All nonzero blocks pi_N D_{x_j} F_i pi^N as (mid, rad|None) arrays.

    Row/column bases follow the canonical mode ordering of the layout.  The
    Q row (block 1) is present when a tangent is supplied.
    """
    L = ctx.layout
    rig = _is_iv(x.alpha)
    blocks: dict = {}
    mults = multiplier_seqs(ctx, x)
    wts = ctx.weights

    # ---- Q row --------------------------------------------------------
    if tangent is not None:
        for j in MASK_BLOCKS:
            if j in SCALAR_BLOCKS:
                tm, tr = _sc(tangent.state.block(j))
                mid = np.array([[tm]])
                rad = np.array([[tr]]) if rig else None
            else:
                cm, cr = _strip2(L, j, tangent.state.block(j))
                mid = cm.T
                rad = None if (cr is None or not rig) else cr.T
            if rig and rad is None:
                rad = np.zeros(mid.shape)
            _add_blocks(blocks, (1, j), mid, rad)

    # ---- Gamma rows (2..5) ---------------------------------------------
    psi_g = psi_eval(ctx.problem, x.gamma, x.alpha)
    jac_g = psi_jacobian(ctx.problem, x.gamma, x.alpha)
    nl = ctx.problem.nonlinearity
    for ip in range(4):
        i = 2 + ip
        sign = 1.0 if ip % 2 == 0 else -1.0
        kvals = np.asarray(L.modes[i], dtype=np.complex128)
        _add_blocks(blocks, (i, i), *_diag_block(L, i, kvals, None, rig))
        for jp in range(4):
            key = (i, 2 + jp)
            e = jac_g[ip][jp]
            if isinstance(e, float):
                if e == 0.0:
                    continue
                # literal identity coupling: the index-0 coefficient of the
                # sine-coded components is pinned through these rows
                c = _mul_sc(x.omega, sign * e)
                cm, cr = _sc(c)
                mid, rad = _diag_block(L, i, cm, cr if rig else None, rig)
                _add_blocks(blocks, key, mid, rad)
            elif key in mults:
                z, shifts = mults[key]
                mid, rad = conv_block(z, L.modes[i], L.modes[key[1]], _col_parity(key[1]), shifts)
                _add_blocks(blocks, key, mid, rad)
        # alpha column
        terms = {1: diff_terms(nl.f1, "alpha"), 3: diff_terms(nl.f2, "alpha")}.get(ip)
        if terms:
            dseq = eval_terms(terms, x.gamma[0], x.gamma[2], x.alpha)
            col = _scale_col(L, i, dseq, _mul_sc(x.omega, sign), rig)
            _add_blocks(blocks, (i, 1), *col)
        # omega column
        col = _scale_col(L, i, psi_g[ip], sign, rig)
        _add_blocks(blocks, (i, 20), *col)

    # ---- V0 row (6) ------------------------------------------------------
    jv = 6 + ctx.config.lbar
    ones = np.ones((1, L.dims[jv]), dtype=np.complex128)
    _add_blocks(blocks, (6, jv), ones, np.zeros(ones.shape) if rig else None)

    # ---- V rows (7..10) --------------------------------------------------
    gF = cos_sin_to_exponential(x.gamma, wts.nu_v, strict=False)
    jac_v = psi_jacobian(ctx.problem, gF, x.alpha)
    lam_m, lam_r = _sc(x.lam)
    for ip in range(4):
        i = 7 + ip
        kv = np.asarray(L.modes[i], dtype=np.float64)
        _add_blocks(blocks, (i, i),
                    *_diag_block(L, i, 1j * kv + lam_m, lam_r if rig else None, rig))
        for jp in range(4):
            key = (i, 7 + jp)
            if key in mults:
                z, shifts = mults[key]
                mid, rad = conv_block(z, L.modes[i], L.modes[key[1]], None, shifts)
                _add_blocks(blocks, key, mid, rad)
            gkey = (i, 2 + jp)
            if gkey in mults:
                z, shifts = mults[gkey]
                mid, rad = conv_block(z, L.modes[i], L.modes[gkey[1]], _col_parity(gkey[1]), shifts)
                _add_blocks(blocks, gkey, mid, rad)
        # lambda column: v_i'
        _add_blocks(blocks, (i, 6), *_scale_col(L, i, x.v[ip], 1.0, rig))
        # omega column: -(DPsi(gF) v)_i'
        acc = _jac_row_apply(jac_v, x.v, ip, wts.nu_v, SpaceKind.EXP_FOURIER)
        if acc is not None:
            _add_blocks(blocks, (i, 20), *_scale_col(L, i, acc, -1.0, rig))
        # alpha column: -omega (d_alpha DPsi(gF) v)_i'
        dterms = {1: nl.f1, 3: nl.f2}.get(ip)
        if dterms is not None:
            acc = None
            for vcomp, var in ((x.v[0], "u"), (x.v[2], "v")):
                tt = diff_terms(diff_terms(dterms, var), "alpha")
                if not tt:
                    continue
                g = eval_terms(tt, gF[0], gF[2], x.alpha)
                term = _conv(g, vcomp) if isinstance(g, WeightedSeq) else _sseq(vcomp, g)
                acc = term if acc is None else _aseq(acc, term)
            if acc is not None:
                _add_blocks(blocks, (i, 1), *_scale_col(L, i, acc, _mul_sc(x.omega, -1.0), rig))

    # ---- W rows (11..14) --------------------------------------------------
    psi_w = psi_eval(ctx.problem, x.w, x.alpha)
    rn, rm = _mode_arrays(L, 11)
    wmask = rm >= 2  # rows m >= 2 carry the invariance equation
    for ip in range(4):
        i = 11 + ip
        dmid = np.where(wmask, 1j * rn + lam_m * rm, 1.0).astype(np.complex128)
        drad = (lam_r * rm * wmask) if rig else None
        _add_blocks(blocks, (i, i), *_diag_block(L, i, dmid, drad, rig))
        key = (i, i)
        if key in mults:
            z, shifts = mults[key]
            mid, rad = conv_block(z, L.modes[i], L.modes[i], None, shifts, row_mask=wmask)
            _add_blocks(blocks, key, mid, rad)
        for jp in range(4):
            if jp == ip:
                continue
            key = (i, 11 + jp)
            if key in mults:
                z, shifts = mults[key]
                mid, rad = conv_block(z, L.modes[i], L.modes[key[1]], None, shifts, row_mask=wmask)
                _add_blocks(blocks, key, mid, rad)
        # pinned rows m=0 vs gamma, m=1 vs v
        _add_blocks(blocks, (i, 2 + ip), *_pin_block(L, i, 2 + ip, rm, rn, 0, rig))
        _add_blocks(blocks, (i, 7 + ip), *_pin_block(L, i, 7 + ip, rm, rn, 1, rig))
        # lambda column: m * w_{(n,m)} on rows m >= 2
        wm_col, wr_col = _strip2(L, i, x.w[ip])
        mid = wm_col * (rm * wmask)[:, None]
        rad = None if (wr_col is None or not rig) else wr_col * (rm * wmask)[:, None]
        if rig and rad is None:
            rad = np.zeros(mid.shape)
        _add_blocks(blocks, (i, 6), mid, rad)
        # omega column: -Psi_i(w) on rows m >= 2
        mid, rad = _strip2(L, i, psi_w[ip])
        mid = -mid * wmask[:, None]
        rad = None if (rad is None or not rig) else rad * wmask[:, None]
        if rig and rad is None:
            rad = np.zeros(mid.shape)
        _add_blocks(blocks, (i, 20), mid, rad)
        # alpha column: -omega d_alpha Psi_i(w) on rows m >= 2
        aterms = {1: diff_terms(nl.f1, "alpha"), 3: diff_terms(nl.f2, "alpha")}.get(ip)
        if aterms:
            dseq = eval_terms(aterms, x.w[0], x.w[2], x.alpha)
            mid, rad = _scale_col(L, i, dseq, _mul_sc(x.omega, -1.0), rig)
            mid = mid * wmask[:, None]
            if rad is not None:
                rad = rad * wmask[:, None]
            _add_blocks(blocks, (i, 1), mid, rad)

    # ---- H rows (15..18) ---------------------------------------------------
    for ip in range(4):
        i = 15 + ip
        # a column: -(1, 2, 2, ...) (Chebyshev value at +1)
        na = L.dims[21 + ip]
        row = -np.ones((1, na), dtype=np.complex128)
        row[0, 1:] = -2.0
        _add_blocks(blocks, (i, 21 + ip), row, np.zeros(row.shape) if rig else None)
        # p column: entries z1^n z2^m
        pm = _p_power_row(L, 26 + ip, x.sigma1, x.sigma2, rig)
        _add_blocks(blocks, (i, 26 + ip), *pm)
        # sigma columns
        d1, d2 = _h_sigma_derivs(L, x.p[ip], x.sigma1, x.sigma2, rig)
        _add_blocks(blocks, (i, 18), *d1)
        _add_blocks(blocks, (i, 19), *d2)

    # ---- J rows (19, 20) -----------------------------------------------------
    for (i, j, val) in (
        (19, 18, _mul_sc(x.sigma1, -2.0)),
        (19, 19, _mul_sc(x.sigma2, -2.0)),
        (20, 16, _mul_sc(x.theta1, -2.0)),
        (20, 17, _mul_sc(x.theta2, -2.0)),
    ):
        vm, vr = _sc(val)
        _add_blocks(blocks, (i, j), np.array([[vm]]),
                    np.array([[vr]]) if rig else None)

    # ---- G rows (21..24) ------------------------------------------------------
    psi_a = psi_eval(ctx.problem, x.a, x.alpha)
    for ip in range(4):
        i = 21 + ip
        nvals = np.asarray(L.modes[i], dtype=np.float64)
        diag = 2.0 * nvals
        diag[0] = 0.0
        _add_blocks(blocks, (i, i), *_diag_block(L, i, diag.astype(np.complex128), None, rig))
        gmask = nvals >= 1
        for jp in range(4):
            key = (i, 21 + jp)
            if key in mults:
                z, shifts = mults[key]
                mid, rad = conv_block(z, L.modes[i], L.modes[key[1]], Parity.COS,
                                      shifts, row_mask=gmask)
                _add_blocks(blocks, key, mid, rad)
        # boundary row 0 vs a_i: -(1, 2(-1)^1, 2(-1)^2, ...)
        na = L.dims[i]
        brow = np.zeros((na, na), dtype=np.complex128)
        signs = (-1.0) ** np.arange(na)
        brow[0, :] = -2.0 * signs
        brow[0, 0] = -1.0
        _add_blocks(blocks, (i, i), brow, np.zeros(brow.shape) if rig else None)
        # boundary row 0 vs w_i: evaluation functional on the level set
        _add_blocks(blocks, (i, 11 + ip),
                    *_wu_deriv_row(L, i, 11 + ip, x.theta1, x.theta2, ctx.config.sigma0, rig))
        # theta columns (row 0 only)
        t1, t2 = _wu_theta_derivs(L, i, x.w[ip], x.theta1, x.theta2, ctx.config.sigma0, rig)
        _add_blocks(blocks, (i, 16), *t1)
        _add_blocks(blocks, (i, 17), *t2)
        # L_c column: (1/2)(S_{n+1} - S_{n-1}) on rows n >= 1
        _add_blocks(blocks, (i, 15), *_lc_col(L, i, psi_a[ip], rig))
        # alpha column
        aterms = {1: diff_terms(nl.f1, "alpha"), 3: diff_terms(nl.f2, "alpha")}.get(ip)
        if aterms:
            dseq = eval_terms(aterms, x.a[0], x.a[2], x.alpha)
            mid, rad = _lc_col(L, i, dseq, rig)
            lm, lr = _sc(x.L_c)
            nm = mid * lm
            nr = None
            if rig:
                rad = np.zeros(mid.shape) if rad is None else rad
                nr = (np.abs(mid) * lr + rad * (abs(lm) + lr)
                      + np.abs(nm) * 2e-16) * (1 + 1e-15)
            _add_blocks(blocks, (i, 1), nm, nr)

    # ---- E row (25) -------------------------------------------------------------
    _add_blocks(blocks, (25, 25), *_eig_block(ctx, x, rig))
    _add_blocks(blocks, (25, 1), *_eig_alpha_col(ctx, x, rig))

    # ---- P rows (26..29) -----------------------------------------------------------
    rn_p, rm_p = _mode_arrays(L, 26)
    pmask = (rn_p + rm_p) >= 2
    l1m, l1r = _sc(x.xi[0])
    l2m, l2r = _sc(x.xi[5])
    for ip in range(4):
        i = 26 + ip
        dmid = np.where(pmask, l1m * rn_p + l2m * rm_p, 1.0).astype(np.complex128)
        drad = ((l1r * rn_p + l2r * rm_p) * pmask) if rig else None
        _add_blocks(blocks, (i, i), *_diag_block(L, i, dmid, drad, rig))
        for jp in range(4):
            key = (i, 26 + jp)
            if key in mults:
                z, shifts = mults[key]
                mid, rad = conv_block(z, L.modes[i], L.modes[key[1]], None, shifts, row_mask=pmask)
                _add_blocks(blocks, key, mid, rad)
        # xi columns
        _add_blocks(blocks, (i, 25), *_p_xi_block(L, i, ip, x.p[ip], rn_p, rm_p, pmask, rig))
        # alpha column: -d_alpha Psi_i(p) on rows n+m >= 2
        aterms = {1: diff_terms(nl.f1, "alpha"), 3: diff_terms(nl.f2, "alpha")}.get(ip)
        if aterms:
            dseq = eval_terms(aterms, x.p[0], x.p[2], x.alpha)
            mid, rad = _scale_col(L, i, dseq, -1.0, rig)
            mid = mid * pmask[:, None]
            if rad is not None:
                rad = rad * pmask[:, None]
            _add_blocks(blocks, (i, 1), mid, rad)

    return blocks


def _sseq(s, c):
    from .spaces import seq_scale

    return seq_scale(s, c)


def _aseq(a, b):
    from .spaces import seq_add

    return seq_add(a, b)


def _jac_row_apply(jac, vecs, row, nu, kind):
    acc = None
    for j in range(4):
        e = jac[row][j]
        if isinstance(e, float):
            if e == 0.0:
                continue
            term = vecs[j]
        else:
            term = _conv(e, vecs[j])
        acc = term if acc is None else _aseq(acc, term)
    return acc


def _scale_col(layout, i, seq, c, rig):
    s = _sseq(seq, c) if not (isinstance(c, float) and c == 1.0) else seq
    mid, rad = _strip2(layout, i, s)
    if rig and rad is None:
        rad = np.zeros(mid.shape)
    if not rig:
        rad = None
    return mid, rad


def _pin_block(layout, i, j, rm, rn, taylor_row, rig):
    """Rows (n, taylor_row): w - embed(source); derivative wrt source = -E."""
    modes_i = layout.modes[i]
    modes_j = layout.modes[j]
    mid = np.zeros((len(modes_i), len(modes_j)), dtype=np.complex128)
    col_of = {m: k for k, m in enumerate(modes_j)}
    sine = j in (3, 5)
    for r, (n, m) in enumerate(modes_i):
        if m != taylor_row:
            continue
        if j in GAMMA_BLOCKS:
            l = abs(n)
            if l in col_of:
                if sine:
                    if n != 0:
                        mid[r, col_of[l]] = 1j * np.sign(n)
                else:
                    mid[r, col_of[l]] = -1.0
        else:  # v column: direct index match
            if n in col_of:
                mid[r, col_of[n]] = -1.0
    return mid, np.zeros(mid.shape) if rig else None


def _p_power_row(layout, j, sigma1, sigma2, rig):
    """Row of z1^n z2^m over the p modes (H vs p block)."""
    modes = layout.modes[j]
    npmax = max(n for n, m in modes) + 1
    if rig:
        i_unit = CInterval(Interval.point(0.0), Interval.point(1.0))
        z1 = CInterval.coerce(_ival(sigma1)) + i_unit * CInterval.coerce(_ival(sigma2))
        z2 = CInterval.coerce(_ival(sigma1)) - i_unit * CInterval.coerce(_ival(sigma2))
        p1 = [CInterval.point(1.0 + 0j)]
        p2 = [CInterval.point(1.0 + 0j)]
        for _ in range(npmax):
            p1.append(p1[-1] * z1)
            p2.append(p2[-1] * z2)
        mid = np.zeros((1, len(modes)), dtype=np.complex128)
        rad = np.zeros((1, len(modes)))
        for k, (n, m) in enumerate(modes):
            val = p1[n] * p2[m]
            mid[0, k] = val.mid
            rad[0, k] = max(val.re.rad, val.im.rad)
        return mid, rad
    z1 = complex(sigma1) + 1j * complex(sigma2)
    z2 = complex(sigma1) - 1j * complex(sigma2)
    mid = np.array([[z1**n * z2**m for n, m in modes]], dtype=np.complex128)
    return mid, None


def _ival(x):
    return x if _is_iv(x) else CInterval.point(complex(x))


def _h_sigma_derivs(layout, p, sigma1, sigma2, rig):
    """d/d sigma1 and d/d sigma2 of P(s1 + i s2, s1 - i s2)."""
    pm, pr = _seq_arrays(p)
    rows, cols = pm.shape
    if rig:
        i_unit = CInterval(Interval.point(0.0), Interval.point(1.0))
        z1 = CInterval.coerce(_ival(sigma1)) + i_unit * CInterval.coerce(_ival(sigma2))
        z2 = CInterval.coerce(_ival(sigma1)) - i_unit * CInterval.coerce(_ival(sigma2))
        p1 = [CInterval.point(1.0 + 0j)]
        p2 = [CInterval.point(1.0 + 0j)]
        for _ in range(max(rows, cols)):
            p1.append(p1[-1] * z1)
            p2.append(p2[-1] * z2)
        d1 = CInterval.point(0.0 + 0j)
        d2 = CInterval.point(0.0 + 0j)
        for n in range(rows):
            for m in range(cols):
                c = CInterval(
                    Interval.from_mid_rad(pm[n, m].real, 0.0 if pr is None else float(pr[n, m])),
                    Interval.from_mid_rad(pm[n, m].imag, 0.0 if pr is None else float(pr[n, m])),
                )
                if n > 0:
                    t = c * float(n) * p1[n - 1] * p2[m]
                    d1 = d1 + t
                    d2 = d2 + t * i_unit
                if m > 0:
                    t = c * float(m) * p1[n] * p2[m - 1]
                    d1 = d1 + t
                    d2 = d2 - t * i_unit
        out = []
        for d in (d1, d2):
            out.append((np.array([[d.mid]]), np.array([[max(d.re.rad, d.im.rad)]])))
        return out
    z1 = complex(sigma1) + 1j * complex(sigma2)
    z2 = complex(sigma1) - 1j * complex(sigma2)
    n_ = np.arange(rows)[:, None]
    m_ = np.arange(cols)[None, :]
    pw1 = z1 ** np.arange(rows)
    pw2 = z2 ** np.arange(cols)
    pw1m = z1 ** np.maximum(np.arange(rows) - 1, 0)
    pw2m = z2 ** np.maximum(np.arange(cols) - 1, 0)
    t1 = np.sum(pm * n_ * pw1m[:, None] * pw2[None, :])
    t2 = np.sum(pm * m_ * pw1[:, None] * pw2m[None, :])
    return (
        (np.array([[t1 + t2]]), None),
        (np.array([[1j * (t1 - t2)]]), None),
    )


def _wu_deriv_row(layout, i, j, theta1, theta2, sigma0, rig):
    """G row 0 wrt w: entries (t1 + sgn(n) i t2)^|n| s0^m (other rows zero)."""
    modes = layout.modes[j]
    nr = layout.dims[i]
    nmax = max(abs(n) for n, m in modes)
    mmax = max(m for n, m in modes)
    mid = np.zeros((nr, len(modes)), dtype=np.complex128)
    if rig:
        i_unit = CInterval(Interval.point(0.0), Interval.point(1.0))
        zp = CInterval.coerce(_ival(theta1)) + i_unit * CInterval.coerce(_ival(theta2))
        zm = CInterval.coerce(_ival(theta1)) - i_unit * CInterval.coerce(_ival(theta2))
        pp = [CInterval.point(1.0 + 0j)]
        pmn = [CInterval.point(1.0 + 0j)]
        for _ in range(nmax):
            pp.append(pp[-1] * zp)
            pmn.append(pmn[-1] * zm)
        s0 = [CInterval.point(1.0 + 0j)]
        for _ in range(mmax):
            s0.append(s0[-1] * CInterval.point(complex(sigma0)))
        rad = np.zeros((nr, len(modes)))
        for k, (n, m) in enumerate(modes):
            base = pp[abs(n)] if n >= 0 else pmn[abs(n)]
            val = base * s0[m]
            mid[0, k] = val.mid
            rad[0, k] = max(val.re.rad, val.im.rad)
        return mid, rad
    zp = complex(theta1) + 1j * complex(theta2)
    zm = complex(theta1) - 1j * complex(theta2)
    mid[0, :] = [(zp if n >= 0 else zm) ** abs(n) * sigma0**m for n, m in modes]
    return mid, None


def _wu_theta_derivs(layout, i, w, theta1, theta2, sigma0, rig):
    """d/d theta of the level-set evaluation (only row 0 of the G block)."""
    wm, wr = _seq_arrays(w)
    half = (wm.shape[0] - 1) // 2
    cols = wm.shape[1]
    nr = layout.dims[i]
    if rig:
        i_unit = CInterval(Interval.point(0.0), Interval.point(1.0))
        zp = CInterval.coerce(_ival(theta1)) + i_unit * CInterval.coerce(_ival(theta2))
        zm = CInterval.coerce(_ival(theta1)) - i_unit * CInterval.coerce(_ival(theta2))
        pow_p = [CInterval.point(1.0 + 0j)]
        pow_m = [CInterval.point(1.0 + 0j)]
        for _ in range(half):
            pow_p.append(pow_p[-1] * zp)
            pow_m.append(pow_m[-1] * zm)
        d1 = CInterval.point(0.0 + 0j)
        d2 = CInterval.point(0.0 + 0j)
        s0 = [CInterval.point(1.0 + 0j)]
        for _ in range(cols - 1):
            s0.append(s0[-1] * CInterval.point(complex(sigma0)))
        for n in range(-half, half + 1):
            if n == 0:
                continue
            base = pow_p[abs(n) - 1] if n >= 0 else pow_m[abs(n) - 1]
            sgn = 1.0 if n >= 0 else -1.0
            for m in range(cols):
                c = CInterval(
                    Interval.from_mid_rad(wm[n + half, m].real, 0.0 if wr is None else float(wr[n + half, m])),
                    Interval.from_mid_rad(wm[n + half, m].imag, 0.0 if wr is None else float(wr[n + half, m])),
                )
                t = c * float(abs(n)) * base * s0[m]
                d1 = d1 + t
                d2 = d2 + t * i_unit * sgn
        cols_out = []
        for d in (d1, d2):
            mid = np.zeros((nr, 1), dtype=np.complex128)
            rad = np.zeros((nr, 1))
            mid[0, 0] = d.mid
            rad[0, 0] = max(d.re.rad, d.im.rad)
            cols_out.append((mid, rad))
        return cols_out
    zp = complex(theta1) + 1j * complex(theta2)
    zm = complex(theta1) - 1j * complex(theta2)
    d1 = 0.0j
    d2 = 0.0j
    spows = sigma0 ** np.arange(cols)
    for n in range(-half, half + 1):
        if n == 0:
            continue
        base = (zp if n >= 0 else zm) ** (abs(n) - 1)
        sgn = 1.0 if n >= 0 else -1.0
        row = np.sum(wm[n + half, :] * spows)
        d1 += abs(n) * base * row
        d2 += abs(n) * base * row * 1j * sgn
    m1 = np.zeros((nr, 1), dtype=np.complex128)
    m2 = np.zeros((nr, 1), dtype=np.complex128)
    m1[0, 0] = d1
    m2[0, 0] = d2
    return (m1, None), (m2, None)


def _lc_col(layout, i, s, rig):
    """Column (1/2)(S_{n+1} - S_{n-1}) over rows n >= 1 of a G block."""
    sm, sr = _seq_arrays(s)
    nr = layout.dims[i]
    mid = np.zeros((nr, 1), dtype=np.complex128)
    rad = np.zeros((nr, 1)) if rig else None
    for r in range(1, nr):
        up = sm[r + 1] if r + 1 < sm.size else 0.0
        dn = sm[r - 1] if r - 1 < sm.size else 0.0
        mid[r, 0] = 0.5 * (up - dn)
        if rig and sr is not None:
            ur = sr[r + 1] if r + 1 < sr.size else 0.0
            dr = sr[r - 1] if r - 1 < sr.size else 0.0
            rad[r, 0] = (0.5 * (ur + dr) + abs(mid[r, 0]) * 2e-16) * (1 + 1e-15)
    return mid, rad


def _eig_block(ctx, x, rig):
    """10x10 derivative of the eigenpair residual wrt the xi block."""
    A0 = dpsi_origin(ctx.problem, x.alpha, rigorous=rig)
    mid = np.zeros((10, 10), dtype=np.complex128)
    rad = np.zeros((10, 10)) if rig else None

    def put(r, c, val):
        vm, vr = _sc(val)
        mid[r, c] = vm
        if rig:
            rad[r, c] = vr

    for blk, (lam, xi_v, kbar) in enumerate(
        ((x.xi[0], x.xi[1:5], ctx.config.kbar1), (x.xi[5], x.xi[6:10], ctx.config.kbar2))
    ):
        r0 = 5 * blk
        c_lam = 5 * blk
        for r in range(4):
            put(r0 + r, c_lam, _mul_sc(xi_v[r], -1.0))
            for c in range(4):
                term = A0[r][c]
                if r == c:
                    term = _sub_sc(term, lam)
                put(r0 + r, c_lam + 1 + c, term)
        put(r0 + 4, c_lam + kbar, 1.0)
    return mid, rad


def _sub_sc(a, b):
    if _is_iv(a) or _is_iv(b):
        return CInterval.coerce(_ival(a)) - CInterval.coerce(_ival(b))
    return complex(a) - complex(b)


def _eig_alpha_col(ctx, x, rig):
    """d/d alpha of the eigen-residual: (d_alpha A0) xi_i rows."""
    nl = ctx.problem.nonlinearity

    def daterms(terms):
        return diff_terms(terms, "alpha")

    rows = {
        1: (daterms(diff_terms(nl.f1, "u")), daterms(diff_terms(nl.f1, "v"))),
        3: (daterms(diff_terms(nl.f2, "u")), daterms(diff_terms(nl.f2, "v"))),
    }

    def at0(terms):
        acc = _ival(0.0) if rig else 0.0 + 0.0j
        for t in terms:
            if t.cu == 0 and t.cv == 0:
                if rig:
                    acc = acc + CInterval(t.coeff_interval, Interval.point(0.0)) * (
                        CInterval.coerce(_ival(x.alpha)) ** t.ca
                    )
                else:
                    acc = acc + t.coeff_float * complex(x.alpha) ** t.ca
        return acc

    mid = np.zeros((10, 1), dtype=np.complex128)
    rad = np.zeros((10, 1)) if rig else None
    for blk, xi_v in enumerate((x.xi[1:5], x.xi[6:10])):
        r0 = 5 * blk
        for r, terms_pair in rows.items():
            du, dv = terms_pair
            acc = _ival(0.0) if rig else 0.0 + 0.0j
            if du:
                acc = _add_sc(acc, _mul_sc(xi_v[0], at0(du)))
            if dv:
                acc = _add_sc(acc, _mul_sc(xi_v[2], at0(dv)))
            vm, vr = _sc(acc)
            mid[r0 + r, 0] = vm
            if rig:
                rad[r0 + r, 0] = vr
    return mid, rad


def _add_sc(a, b):
    if _is_iv(a) or _is_iv(b):
        return CInterval.coerce(_ival(a)) + CInterval.coerce(_ival(b))
    return complex(a) + complex(b)


def _p_xi_block(layout, i, ip, p, rn, rm, pmask, rig):
    """P rows wrt the xi block: eigenvector pins and the lambda diagonals."""
    modes = layout.modes[i]
    pm, pr = _seq_arrays(p)
    mid = np.zeros((len(modes), 10), dtype=np.complex128)
    rad = np.zeros((len(modes), 10)) if rig else None
    for r, (n, m) in enumerate(modes):
        if (n, m) == (1, 0):
            mid[r, 1 + ip] = -1.0
        elif (n, m) == (0, 1):
            mid[r, 6 + ip] = -1.0
        elif n + m >= 2:
            if n < pm.shape[0] and m < pm.shape[1]:
                mid[r, 0] = n * pm[n, m]
                mid[r, 5] = m * pm[n, m]
                if rig and pr is not None:
                    rad[r, 0] = n * pr[n, m]
                    rad[r, 5] = m * pr[n, m]
    return mid, rad


# ---------------------------------------------------------------------------
# flat assembly
# ---------------------------------------------------------------------------


def flat_jacobian(ctx: MapContext, x: HeteroclinicState,
                  tangent: TangentVector | None = None) -> np.ndarray:
    """Full finite Jacobian as one complex matrix (numerical midpoints)."""
    L = ctx.layout
    n = L.total
    out = np.zeros((n, n), dtype=np.complex128)
    for (i, j), (mid, _rad) in jacobian_blocks(ctx, x, tangent).items():
        out[L.slice_of(i), L.slice_of(j)] += mid
    return out
