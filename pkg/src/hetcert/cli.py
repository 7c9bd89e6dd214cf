"""Command-line pipeline: find, continue, validate, classify, prove, audit.

Stages write self-contained artifacts (state.json, branch/*.json,
certificates/*.json, trace.csv, verdict.json, plots/*.csv); `prove` chains
the stages and skips any whose outputs already exist when --resume is set.
`audit` re-verifies the scalar certificate implications from the stored
fields alone.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, make_context
from .continuation import (
    BranchSegment,
    LoopAtlas,
    build_segment,
    close_loop,
    initial_guess,
    newton_refine,
    tangent_update,
)
from .intervals import Interval
from .maps import MapContext
from .phase import PhaseTrace, classify, phase_winding
from .state import HeteroclinicState
from .validation import Certificate, ValidationOptions, validate_segment

__all__ = ["main", "cmd_prove", "cmd_audit", "audit_certificate"]


def _out(cfg: RunConfig) -> Path:
    p = Path(cfg.out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def cmd_find(cfg: RunConfig, verbose: bool = True) -> Path:
    """Initial heteroclinic point at alpha0 (shooting + Newton)."""
    ctx = make_context(cfg)
    x, used_ctx = initial_guess(ctx, cfg.alpha0, verbose=verbose)
    out = _out(cfg)
    doc = {"state": x.to_json(), "config_used": used_ctx.config.to_dict()}
    path = out / "state.json"
    path.write_text(json.dumps(doc))
    if verbose:
        print(f"wrote {path}")
    return path


def _load_state(cfg: RunConfig):
    doc = json.loads((_out(cfg) / "state.json").read_text())
    from .state import SolverConfig

    used = SolverConfig(**doc["config_used"])
    ctx = MapContext(cfg.problem_def(), cfg.scheme(), cfg.space_weights(), used)
    return ctx, HeteroclinicState.from_json(doc["state"])


def cmd_continue(cfg: RunConfig, verbose: bool = True) -> Path:
    """Pseudo-arclength continuation into a segment atlas per the plan."""
    ctx, x = _load_state(cfg)
    x = newton_refine(ctx, x, tol=cfg.newton_tol, fixed_alpha=True)
    tan = tangent_update(ctx, x)
    segs = []
    for k, arc in enumerate(cfg.arclengths):
        if verbose:
            print(f"segment {k}: arclength {arc}", flush=True)
        seg, x, tan = build_segment(ctx, x, tan, arc, n_s=cfg.n_s,
                                    tol=cfg.newton_tol, max_leg=cfg.step_max,
                                    segment_id=k)
        segs.append(seg)
    atlas = LoopAtlas(segs, closed=False)
    branch_dir = _out(cfg) / "branch"
    atlas.save(branch_dir)
    if verbose:
        print(f"wrote {branch_dir}")
    return branch_dir


def cmd_close(cfg: RunConfig, gap_tol: float = 1e-6, verbose: bool = True):
    ctx, _ = _load_state(cfg)
    atlas = LoopAtlas.load(_out(cfg) / "branch")
    atlas = close_loop(ctx, atlas, gap_tol=gap_tol)
    atlas.save(_out(cfg) / "branch")
    if verbose:
        print("loop closed")


def _validate_one(args):
    cfg_values, seg_doc = args
    cfg = RunConfig(values=cfg_values)
    ctx, _ = _load_state(cfg)
    seg = BranchSegment.from_json(seg_doc)
    opts = ValidationOptions(z_min=cfg.z_min, r_max=cfg.r_max,
                             fast_z0=(cfg.precision == "double"))
    cert = validate_segment(ctx, seg, opts)
    return cert.to_json()


def cmd_validate(cfg: RunConfig, verbose: bool = True) -> Path:
    """Certify every segment (independent segments run on the worker pool)."""
    atlas = LoopAtlas.load(_out(cfg) / "branch")
    cert_dir = _out(cfg) / "certificates"
    cert_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(cfg.values, seg.to_json()) for seg in atlas.segments]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            docs = list(pool.map(_validate_one, jobs))
    else:
        docs = []
        for j in jobs:
            if verbose:
                print(f"validating segment {j[1]['segment_id']}", flush=True)
            docs.append(_validate_one(j))
    for doc in docs:
        (cert_dir / f"certificate_{doc['segment_id']:03d}.json").write_text(
            json.dumps(doc))
    if verbose:
        print(f"wrote {cert_dir}")
    return cert_dir


def _load_certs(cfg: RunConfig) -> list[Certificate]:
    cert_dir = _out(cfg) / "certificates"
    return [Certificate.from_json(json.loads(p.read_text()))
            for p in sorted(cert_dir.glob("certificate_*.json"))]


def cmd_classify(cfg: RunConfig, verbose: bool = True) -> Path:
    """Phase trace, verdict and plot data from certified segments."""
    ctx, _ = _load_state(cfg)
    atlas = LoopAtlas.load(_out(cfg) / "branch")
    certs = _load_certs(cfg)
    trace = phase_winding(ctx, atlas, certs)
    verdict = classify(ctx, atlas, certs, trace)
    out = _out(cfg)
    (out / "verdict.json").write_text(json.dumps(verdict.to_json(), indent=1))
    _write_trace_csv(out / "trace.csv", trace)
    _write_plots(ctx, out, atlas, trace)
    if verbose:
        print(f"verdict: {verdict.kind} (winding {verdict.winding})")
    return out / "verdict.json"


def _write_trace_csv(path: Path, trace: PhaseTrace) -> None:
    with path.open("w") as fh:
        fh.write("index,theta1_lo,theta1_hi,theta2_lo,theta2_hi,lift_lo,lift_hi\n")
        for k, (t1, t2, lf) in enumerate(zip(trace.theta1, trace.theta2,
                                             trace.lifted[:-1])):
            fh.write(f"{k},{t1[0]},{t1[1]},{t2[0]},{t2[1]},{lf[0]},{lf[1]}\n")


def _write_plots(ctx: MapContext, out: Path, atlas: LoopAtlas,
                 trace: PhaseTrace) -> None:
    """alpha vs arclength, angle vs arclength, alpha vs angle (midpoints)."""
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    i_alpha = ctx.layout.slice_of(1).start
    arc = 0.0
    rows = []
    n = trace.samples_per_segment
    k_global = 0
    for seg in atlas.segments:
        for k in range(n):
            s = -1.0 + 2.0 * k / n
            st = seg.state_at(s)
            alpha = st[i_alpha].real
            lift = 0.5 * (trace.lifted[k_global][0] + trace.lifted[k_global][1])
            rows.append((arc + (s + 1.0) / 2.0 * seg.arclength, alpha, lift))
            k_global += 1
        arc += seg.arclength
    with (plots / "alpha_vs_arclength.csv").open("w") as fh:
        fh.write("arclength,alpha\n")
        for a, al, _ in rows:
            fh.write(f"{a},{al}\n")
    with (plots / "theta_vs_arclength.csv").open("w") as fh:
        fh.write("arclength,theta_lift\n")
        for a, _, th in rows:
            fh.write(f"{a},{th}\n")
    with (plots / "alpha_vs_theta.csv").open("w") as fh:
        fh.write("theta_lift,alpha\n")
        for _, al, th in rows:
            fh.write(f"{th},{al}\n")


def cmd_prove(cfg: RunConfig, resume: bool = False, verbose: bool = True) -> dict:
    """find -> continue -> close -> validate -> classify, resumable."""
    out = _out(cfg)
    stages = []
    if not (resume and (out / "state.json").exists()):
        stages.append("find")
    if not (resume and (out / "branch" / "atlas.json").exists()):
        stages.append("continue")
    if not (resume and (out / "certificates").exists()
            and list((out / "certificates").glob("certificate_*.json"))):
        stages.append("validate")
    stages.append("classify")
    if "find" in stages:
        cmd_find(cfg, verbose)
    if "continue" in stages:
        cmd_continue(cfg, verbose)
        cmd_close(cfg, verbose=verbose)
    if "validate" in stages:
        cmd_validate(cfg, verbose)
    cmd_classify(cfg, verbose)
    return json.loads((out / "verdict.json").read_text())


# ---------------------------------------------------------------------------
# audit: offline re-verification from stored fields alone
# ---------------------------------------------------------------------------


def audit_certificate(doc: dict) -> tuple[bool, list[str]]:
    """Re-check the scalar implications of one certificate document.

    Uses only stored fields: p(r0) < 0 in interval arithmetic, Z0 + Z1 < 1,
    r0 > Y0, a negative smoothness margin when present, and positive weights.
    """
    problems = []
    try:
        r0 = float(doc["r0"])
        y0 = Interval(*map(float, doc["Y0"]))
        z0 = Interval(*map(float, doc["Z0"]))
        z1 = Interval(*map(float, doc["Z1"]))
        z2 = [Interval(*map(float, c)) for c in doc["Z2_coeffs"]]
        mu = [float(v) for v in doc["mu"]]
    except (KeyError, TypeError, ValueError) as e:
        return False, [f"schema: {e}"]
    if r0 <= 0:
        problems.append("r0 <= 0")
    if any(m <= 0 for m in mu) or len(mu) != 29:
        problems.append("weights must be 29 positive reals")
    if z0.hi + z1.hi >= 1.0:
        problems.append(f"Z0 + Z1 = {z0.hi + z1.hi:.6f} >= 1")
    if r0 <= y0.hi:
        problems.append("r0 <= Y0")
    # p(r0) = Z2(r0) r0^2 - (1 - Z0 - Z1) r0 + Y0 < 0, outward rounded
    ri = Interval.point(r0)
    z2v = Interval.point(0.0)
    for c in reversed(z2):
        z2v = z2v * ri + c
    p = z2v * ri * ri - (Interval.point(1.0) - z0 - z1) * ri + y0
    if not p.hi < 0.0:
        problems.append(f"p(r0) not certified negative (upper {p.hi:.3e})")
    sm = doc.get("smooth_margin")
    if sm is not None and not float(sm[1]) < 0.0:
        problems.append("smoothness margin not negative")
    return (not problems), problems


def cmd_audit(paths: list[str], verbose: bool = True) -> bool:
    """Audit certificate files; prints one pass/fail line per file."""
    all_ok = True
    for p in paths:
        doc = json.loads(Path(p).read_text())
        ok, problems = audit_certificate(doc)
        all_ok &= ok
        if verbose:
            status = "PASS" if ok else "FAIL"
            print(f"[{status}] {p}" + ("" if ok else f": {'; '.join(problems)}"))
    return all_ok


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--problem", help="builtin problem name")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="segment validation parallelism")
    p.add_argument("--precision", choices=("double", "extended"),
                   help="midpoint product precision for the Z0 bound")
    p.add_argument("--quiet", action="store_true")


def _cfg_from(args) -> RunConfig:
    overrides = {
        "problem": args.problem,
        "out": args.out,
        "workers": args.workers,
        "precision": args.precision,
    }
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="hetcert",
        description="validated heteroclinic loops and the snaking dichotomy",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name in ("find", "continue", "validate", "classify", "prove"):
        p = sub.add_parser(name)
        _add_common(p)
        if name == "prove":
            p.add_argument("--resume", action="store_true",
                           help="skip stages whose artifacts exist")
    pa = sub.add_parser("audit")
    pa.add_argument("paths", nargs="+", help="certificate JSON files")
    pa.add_argument("--quiet", action="store_true")
    args = ap.parse_args(argv)
    verbose = not getattr(args, "quiet", False)
    if args.cmd == "audit":
        return 0 if cmd_audit(args.paths, verbose) else 1
    cfg = _cfg_from(args)
    if args.cmd == "find":
        cmd_find(cfg, verbose)
    elif args.cmd == "continue":
        cmd_continue(cfg, verbose)
        cmd_close(cfg, verbose=verbose)
    elif args.cmd == "validate":
        cmd_validate(cfg, verbose)
    elif args.cmd == "classify":
        cmd_classify(cfg, verbose)
    elif args.cmd == "prove":
        cmd_prove(cfg, resume=args.resume, verbose=verbose)
    return 0


if __name__ == "__main__":
    sys.exit(main())
