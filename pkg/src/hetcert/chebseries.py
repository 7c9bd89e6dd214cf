"""Chebyshev interpolation in the branch parameter s.

Conventions match the coefficient spaces: a series is c0 + 2 sum_{n>=1} c_n
T_n(s), nodes are Chebyshev-Lobatto points ordered from s = -1 to s = +1 so
segment endpoints are grid points.  The FFT grid follows the power-of-two
scheme N_FFT = 2^ceil(log2(2 N_s + 1)), n_FFT = N_FFT/2 + 1.

Float paths use numpy's real FFT; the rigorous path is a dense
cosine-transform with interval weights (the grids in s are small, so the
O(n^2) transform is cheap and avoids enclosure inflation from a radix
recursion).
"""

from __future__ import annotations

import math

import numpy as np

from .intervals import Interval, PI
from .ivmatrix import _gamma, up_scale

__all__ = [
    "fft_grid_sizes",
    "lobatto_nodes",
    "lobatto_nodes_interval",
    "fit_values",
    "eval_cheb",
    "cheb_diff",
    "rigorous_fit",
    "rigorous_eval_weights",
    "cos_table_interval",
]


class GridSizeMismatch(ValueError):
    """Sample count does not match the declared FFT grid."""


def fft_grid_sizes(n_s: int) -> tuple[int, int]:
    """(N_FFT, n_FFT) for a degree-n_s fit: N_FFT = 2^ceil(log2(2 n_s + 1))."""
    if n_s == 0:
        return 1, 1
    nfft = 2 ** math.ceil(math.log2(2 * n_s + 1))
    return nfft, nfft // 2 + 1


def lobatto_nodes(n: int) -> np.ndarray:
    """n+1 Chebyshev-Lobatto points, ascending from -1 to 1."""
    if n == 0:
        return np.array([0.0])
    k = np.arange(n + 1)
    return -np.cos(np.pi * k / n)


def lobatto_nodes_interval(n: int) -> list[Interval]:
    """Interval enclosures of the Lobatto nodes (same order)."""
    if n == 0:
        return [Interval.point(0.0)]
    out = []
    for k in range(n + 1):
        if k == 0:
            out.append(Interval.point(-1.0))
        elif 2 * k == n:
            out.append(Interval.point(0.0))
        elif k == n:
            out.append(Interval.point(1.0))
        else:
            ang = PI * k * (1.0 / n) if (n & (n - 1)) == 0 else PI * k / n
            out.append(-(ang.cos()))
    return out


def fit_values(values: np.ndarray, n_out: int | None = None) -> np.ndarray:
    """Chebyshev coefficients from Lobatto samples (float path).

    ``values`` has the node axis first (ascending nodes); returns
    coefficients c_0..c_m in the c0 + 2 sum convention, truncated to
    ``n_out + 1`` entries when requested.
    """
    vals = np.asarray(values)
    n = vals.shape[0] - 1
    if n == 0:
        coef = vals.copy()
        return coef if n_out is None else _pad_trunc(coef, n_out + 1)
    # reorder to theta_j = pi j / n (descending s) and mirror to the circle
    by_theta = vals[::-1]
    mirror = np.concatenate([by_theta, by_theta[n - 1:0:-1]], axis=0)
    spec = np.fft.fft(mirror, axis=0) / (2 * n)
    coef = spec[: n + 1].copy()
    coef[n] /= 2.0  # the +/- n modes alias on the 2n grid
    if not np.iscomplexobj(vals):
        coef = coef.real
    return coef if n_out is None else _pad_trunc(coef, n_out + 1)


def _pad_trunc(coef: np.ndarray, m: int) -> np.ndarray:
    if coef.shape[0] >= m:
        return coef[:m]
    pad = np.zeros((m - coef.shape[0],) + coef.shape[1:], dtype=coef.dtype)
    return np.concatenate([coef, pad], axis=0)


def eval_cheb(coef: np.ndarray, s: float) -> np.ndarray:
    """Evaluate c0 + 2 sum c_n T_n(s) along the leading axis (float path)."""
    coef = np.asarray(coef)
    n = coef.shape[0]
    t = np.cos(np.arange(n) * math.acos(float(np.clip(s, -1.0, 1.0))))
    fac = np.where(np.arange(n) == 0, 1.0, 2.0) * t
    return np.tensordot(fac, coef, axes=(0, 0))


def cheb_diff(coef: np.ndarray) -> np.ndarray:
    """Derivative coefficients in the same convention (float path)."""
    coef = np.asarray(coef)
    n = coef.shape[0] - 1
    if n <= 0:
        return np.zeros_like(coef)
    a = coef.copy()
    a[1:] *= 2.0  # plain T_n convention
    d = np.zeros_like(a)
    for k in range(n - 1, -1, -1):
        nxt = d[k + 2] if k + 2 <= n else 0.0 * a[0]
        d[k] = nxt + 2.0 * (k + 1) * a[k + 1]
    d[0] = d[0] / 2.0
    out = d.copy()
    out[1:] /= 2.0
    return out


# ---------------------------------------------------------------------------
# rigorous transforms
# ---------------------------------------------------------------------------


def cos_table_interval(n: int) -> tuple[np.ndarray, np.ndarray]:
    """(mid, rad) enclosures of cos(pi j k / n) for j, k = 0..n."""
    mid = np.zeros((n + 1, n + 1))
    rad = np.zeros((n + 1, n + 1))
    for j in range(n + 1):
        for k in range(n + 1):
            c = ((PI * (j * k)) / n).cos() if n > 0 else Interval.point(1.0)
            mid[j, k] = c.mid
            rad[j, k] = c.rad
    return mid, rad


def rigorous_eval_weights(n: int, s: Interval) -> tuple[np.ndarray, np.ndarray]:
    """Enclosures of the factors (1, 2 T_1(s), ..., 2 T_n(s))."""
    mid = np.zeros(n + 1)
    rad = np.zeros(n + 1)
    mid[0] = 1.0
    if n == 0:
        return mid, rad
    in_domain = -1.0 <= s.lo and s.hi <= 1.0
    tprev = Interval.point(1.0)
    tcur = s
    for k in range(1, n + 1):
        v = tcur * 2
        mid[k] = v.mid
        rad[k] = v.rad
        tnext = s * tcur * 2 - tprev
        if in_domain:
            tnext = tnext.intersect(Interval(-1.0, 1.0))
        tprev, tcur = tcur, tnext
    return mid, rad


def rigorous_fit(values_mid: np.ndarray, values_rad: np.ndarray | None):
    """Interval Chebyshev coefficients from Lobatto samples.

    Exact for polynomials of degree <= n sampled on the n+1 Lobatto nodes;
    node axis first, ascending nodes.  Returns (mid, rad).
    """
    vals = np.asarray(values_mid)
    n = vals.shape[0] - 1
    if values_rad is None:
        values_rad = np.zeros(vals.shape)
    if n == 0:
        return vals.copy(), values_rad.copy()
    cmid, crad = cos_table_interval(n)
    # c_k = (1/n) [ 1/2 (f(theta_0) + (-1)^k f(theta_n)) + sum' f_j cos(pi j k/n) ],
    # with theta_j = pi j / n, i.e. descending s; halve the k = 0, n outputs.
    by_theta_m = vals[::-1]
    by_theta_r = np.asarray(values_rad)[::-1]
    wt = cmid.copy()
    wtr = crad.copy()
    wt[0, :] *= 0.5
    wtr[0, :] *= 0.5
    wt[n, :] *= 0.5
    wtr[n, :] *= 0.5
    flat_m = by_theta_m.reshape(n + 1, -1)
    flat_r = by_theta_r.reshape(n + 1, -1)
    out_m = wt.T @ flat_m
    absf = np.abs(flat_m) + flat_r
    awt = np.abs(wt.T)
    flops = awt @ np.abs(flat_m) * _gamma(n + 4)
    out_r = up_scale(wtr.T @ absf + awt @ flat_r + flops, n + 6)
    out_m /= n
    out_r = up_scale(out_r / n + np.abs(out_m) * 4e-16, 4)
    out_m[n] *= 0.5  # +/- n modes alias on the circle grid
    out_r[n] *= 0.5
    shape = (n + 1,) + vals.shape[1:]
    return out_m.reshape(shape), out_r.reshape(shape)
