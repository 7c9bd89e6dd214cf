"""Phase tracing around a certified loop and the snaking dichotomy.

The connection angle is carried by the certified components (theta1, theta2)
of each segment: enclosures on a sample grid are widened by the segment's
validated radius, consecutive rotation increments are enclosed through
arctangent (requiring each increment below a quarter turn, with automatic
densification), and the summed lift must close up to an exact integer
number of full turns.  Nonzero winding forces interlaced snaking curves;
zero winding forces a stack of isolas.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .continuation import BranchSegment, LoopAtlas
from .intervals import Interval, PI, TWO_PI
from .maps import MapContext
from .state import MASK_BLOCKS, SCALAR_BLOCKS, XI_BLOCK, TangentVector
from .validation import Certificate

__all__ = [
    "PhaseTrace",
    "Verdict",
    "LiftingAmbiguous",
    "NotCertified",
    "phase_winding",
    "check_hypotheses",
    "classify",
]


class LiftingAmbiguous(RuntimeError):
    """A rotation increment enclosure spans a quarter turn or more."""


class NotCertified(RuntimeError):
    """Phase tracing demands a certificate for every segment."""


@dataclass
class PhaseTrace:
    """Lifted-angle samples around the loop and the certified winding."""

    samples_per_segment: int
    theta1: list  # [lo, hi] enclosures, flattened along the loop
    theta2: list
    lifted: list  # lifted angle enclosures
    winding: int
    total_turn: list  # [lo, hi] of theta(1) - theta(0)

    def to_json(self) -> dict:
        return {
            "samples_per_segment": self.samples_per_segment,
            "theta1": self.theta1,
            "theta2": self.theta2,
            "lifted": self.lifted,
            "winding": self.winding,
            "total_turn": self.total_turn,
        }


@dataclass
class Verdict:
    kind: str  # "Snaking" | "StackedIsolas"
    winding: int
    alpha_interval: list
    certificates: list
    checklist: dict

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "winding": self.winding,
            "alpha_interval": self.alpha_interval,
            "certificates": self.certificates,
            "hypothesis_checklist": self.checklist,
        }


def _theta_enclosures(ctx: MapContext, seg: BranchSegment, cert: Certificate,
                      n_samples: int):
    """(theta1, theta2) interval pairs at n_samples parameters in [-1, 1)."""
    from .chebseries import rigorous_eval_weights

    i16 = ctx.layout.slice_of(16).start
    i17 = ctx.layout.slice_of(17).start
    mu = cert.mu
    pad1 = cert.r0 / mu[15]
    pad2 = cert.r0 / mu[16]
    out = []
    for k in range(n_samples):
        s = Interval.point(-1.0 + 2.0 * k / n_samples)
        wm, wr = rigorous_eval_weights(seg.n_s, s)
        c1 = seg.coeffs[:, i16]
        c2 = seg.coeffs[:, i17]
        t1m = float(np.sum(wm * c1.real))
        t1r = float(np.sum(wr * np.abs(c1)) + np.sum(np.abs(c1.imag))
                    + abs(t1m) * 1e-14) + pad1
        t2m = float(np.sum(wm * c2.real))
        t2r = float(np.sum(wr * np.abs(c2)) + np.sum(np.abs(c2.imag))
                    + abs(t2m) * 1e-14) + pad2
        out.append((Interval.from_mid_rad(t1m, t1r), Interval.from_mid_rad(t2m, t2r)))
    return out


def phase_winding(ctx: MapContext, atlas: LoopAtlas, certificates: list[Certificate],
                  max_density: int = 1024) -> PhaseTrace:
    """Rigorous lifted-angle trace around a certified loop.

    Consecutive rotation increments are computed as atan(cross/dot) on
    certified (theta1, theta2) enclosures; the sample density doubles until
    every increment enclosure stays below a quarter turn.  The total lift
    must enclose exactly one integer multiple of 2 pi.
    """
    if len(certificates) != len(atlas.segments):
        raise NotCertified(
            f"{len(atlas.segments)} segments but {len(certificates)} certificates")
    by_id = {c.segment_id: c for c in certificates}
    n = 8
    while n <= max_density:
        try:
            return _trace_at_density(ctx, atlas, by_id, n)
        except LiftingAmbiguous:
            n *= 2
    raise LiftingAmbiguous(f"no valid lifting up to {max_density} samples per segment")


def _trace_at_density(ctx, atlas, by_id, n) -> PhaseTrace:
    pts = []
    for seg in atlas.segments:
        cert = by_id.get(seg.segment_id)
        if cert is None:
            raise NotCertified(f"segment {seg.segment_id} lacks a certificate")
        pts.extend(_theta_enclosures(ctx, seg, cert, n))
    # close the loop
    pts.append(pts[0])
    total = Interval.point(0.0)
    lifted = [Interval.point(0.0)]
    for (a1, a2), (b1, b2) in zip(pts[:-1], pts[1:]):
        dot = a1 * b1 + a2 * b2
        cross = a1 * b2 - a2 * b1
        if not dot.is_strictly_positive():
            raise LiftingAmbiguous("increment may reach a quarter turn")
        inc = (cross / dot).atan()
        total = total + inc
        lifted.append(total)
    two_pi = TWO_PI
    ratio = total / two_pi
    k_lo = math.ceil(ratio.lo - 1e-12)
    k_hi = math.floor(ratio.hi + 1e-12)
    if k_lo != k_hi:
        raise LiftingAmbiguous(
            f"total turn {total} does not isolate an integer winding")
    winding = int(k_lo)
    # the closed loop must return to the same angle: ratio encloses an integer
    return PhaseTrace(
        samples_per_segment=n,
        theta1=[[p[0].lo, p[0].hi] for p in pts[:-1]],
        theta2=[[p[1].lo, p[1].hi] for p in pts[:-1]],
        lifted=[[v.lo, v.hi] for v in lifted],
        winding=winding,
        total_turn=[total.lo, total.hi],
    )


# ---------------------------------------------------------------------------
# hypothesis checklist
# ---------------------------------------------------------------------------


def check_hypotheses(ctx: MapContext, atlas: LoopAtlas,
                     certificates: list[Certificate]) -> dict:
    """Machine-checked preconditions of the snaking/isola dichotomy.

    Items: every segment certified; exact endpoint joining (states and
    tangents); tangent mask structure; negative smoothness margins; the
    origin hyperbolic along the whole loop; Floquet exponent positive.
    """
    out: dict = {}
    by_id = {c.segment_id: c for c in certificates}
    segs = atlas.segments
    out["loop_closed"] = bool(atlas.closed)
    out["all_segments_certified"] = all(
        s.segment_id in by_id for s in segs)
    join_ok = True
    for k, seg in enumerate(segs):
        nxt = segs[(k + 1) % len(segs)]
        if not (np.array_equal(seg.node_states[-1], nxt.node_states[0])
                and np.array_equal(seg.node_tangents[-1], nxt.node_tangents[0])):
            join_ok = False
    out["joining_exact"] = join_ok and len(segs) > 0
    mask_ok = True
    L = ctx.layout
    for seg in segs:
        for row in seg.tangent_coeffs:
            t = TangentVector(L.unflatten(row))
            if not t.check_mask(L, tol=0.0):
                mask_ok = False
    out["tangent_mask"] = mask_ok
    smooth_ok = True
    for s in segs:
        c = by_id.get(s.segment_id)
        if c is None or (s.n_s > 0 and (c.smooth_margin is None
                                        or c.smooth_margin[1] >= 0.0)):
            smooth_ok = False
    out["smoothness"] = smooth_ok
    # spectral items, widened by each segment's validated radius
    hyp_ok = True
    floq_ok = True
    for seg in segs:
        c = by_id.get(seg.segment_id)
        if c is None:
            hyp_ok = floq_ok = False
            continue
        pad25 = c.r0 / c.mu[24]
        pad6 = c.r0 / c.mu[5]
        re1 = _re_range(ctx, seg, XI_BLOCK, 0)
        re2 = _re_range(ctx, seg, XI_BLOCK, 5)
        if re1.hi + pad25 >= 0.0 or re2.hi + pad25 >= 0.0:
            hyp_ok = False
        lam = _re_range(ctx, seg, 6, 0)
        if lam.lo - pad6 <= 0.0:
            floq_ok = False
    out["origin_hyperbolic"] = hyp_ok
    out["floquet_positive"] = floq_ok
    out["all_pass"] = all(bool(v) for v in out.values())
    return out


def _re_range(ctx: MapContext, seg: BranchSegment, block: int, entry: int) -> Interval:
    sl = ctx.layout.slice_of(block)
    col = seg.coeffs[:, sl.start + entry]
    pad = float(2.0 * np.sum(np.abs(col[1:])) * (1 + 1e-12)) + abs(float(col[0].imag))
    base = float(col[0].real)
    return Interval(base - pad, base + pad)


def alpha_interval(ctx: MapContext, atlas: LoopAtlas,
                   certificates: list[Certificate]) -> Interval:
    by_id = {c.segment_id: c for c in certificates}
    lo, hi = math.inf, -math.inf
    for seg in atlas.segments:
        c = by_id[seg.segment_id]
        rng = _re_range(ctx, seg, 1, 0)
        pad = c.r0 / c.mu[0]
        lo = min(lo, rng.lo - pad)
        hi = max(hi, rng.hi + pad)
    return Interval(lo, hi)


def classify(ctx: MapContext, atlas: LoopAtlas, certificates: list[Certificate],
             trace: PhaseTrace | None = None) -> Verdict:
    """The forcing dichotomy on a certified loop."""
    checklist = check_hypotheses(ctx, atlas, certificates)
    if trace is None:
        trace = phase_winding(ctx, atlas, certificates)
    kind = "Snaking" if trace.winding != 0 else "StackedIsolas"
    a_rng = alpha_interval(ctx, atlas, certificates)
    return Verdict(
        kind=kind,
        winding=trace.winding,
        alpha_interval=[a_rng.lo, a_rng.hi],
        certificates=[c.segment_id for c in certificates],
        checklist=checklist,
    )
