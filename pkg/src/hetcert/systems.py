"""Reversible second-order polynomial systems and their first-order form.

A problem is a pair of polynomials f1, f2 in (u, v, alpha) with exact
rational coefficients, standing for u'' = f1(u, v, alpha), v'' = f2(u, v,
alpha).  The first-order field on (u1, u2, u3, u4) = (u, u', v, v') is

    Psi(u, alpha) = (u2, f1(u1, u3, alpha), u4, f2(u1, u3, alpha)),

which anticommutes with the reversor R = diag(1, -1, 1, -1) by construction
(f1, f2 never see u2, u4).  The generic evaluators work over any algebra
supplying ring operations: plain complex scalars, scalar intervals, or any
WeightedSeq convolution algebra, so one code path serves the periodic orbit,
bundle, manifold, boundary-value and eigenvalue maps alike.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .intervals import CInterval, Interval
from .spaces import (
    SpaceKind,
    WeightedSeq,
    convolve,
    seq_add,
    seq_scale,
    unit_seq,
)

__all__ = [
    "PolyTerm",
    "PolyNonlinearity",
    "ProblemDefinition",
    "HyperbolicityFailure",
    "psi_eval",
    "psi_jacobian",
    "builtin_swift_hohenberg",
    "builtin_gray_scott",
    "builtin_problem",
    "load_problem_file",
    "equilibrium_spectrum_hint",
    "diff_terms",
    "eval_terms",
    "alg_mul",
    "alg_add",
    "alg_scale",
    "alg_one_like",
]


class HyperbolicityFailure(ValueError):
    """A numerical eigenvalue real part is too close to zero."""


@dataclass(frozen=True)
class PolyTerm:
    """coeff * u^cu * v^cv * alpha^ca with exact rational coeff."""

    cu: int
    cv: int
    ca: int
    num: int
    den: int = 1

    @property
    def coeff_float(self) -> float:
        return self.num / self.den

    @property
    def coeff_interval(self) -> Interval:
        return Interval.point(float(self.num)) / Interval.point(float(self.den))

    @property
    def total_degree(self) -> int:
        return self.cu + self.cv + self.ca


@dataclass(frozen=True)
class PolyNonlinearity:
    """Right-hand sides f1, f2 of the second-order system."""

    f1: tuple[PolyTerm, ...]
    f2: tuple[PolyTerm, ...]

    def __post_init__(self) -> None:
        for name, terms in (("f1", self.f1), ("f2", self.f2)):
            for t in terms:
                if t.cu == 0 and t.cv == 0:
                    raise ValueError(f"{name} has a term independent of (u, v); "
                                     "the origin would not be an equilibrium")
                if t.den == 0:
                    raise ValueError("zero denominator")

    @property
    def max_degree(self) -> int:
        return max(t.total_degree for t in self.f1 + self.f2)


@dataclass(frozen=True)
class ProblemDefinition:
    nonlinearity: PolyNonlinearity
    name: str
    alpha_range_hint: tuple[float, float]
    orientable_hint: bool = True

    @property
    def degree(self) -> int:
        """Max polynomial degree of the vector field (alpha included)."""
        return self.nonlinearity.max_degree


# ---------------------------------------------------------------------------
# generic polynomial algebra
# ---------------------------------------------------------------------------


def alg_one_like(x):
    if isinstance(x, WeightedSeq):
        idx = (0, 0) if x.kind in (SpaceKind.FOURIER_TAYLOR, SpaceKind.TAYLOR2) else 0
        return unit_seq(x.kind, idx, x.weight)
    if isinstance(x, CInterval):
        return CInterval.point(1.0 + 0.0j)
    return 1.0 + 0.0j


def alg_mul(a, b):
    if isinstance(a, WeightedSeq) and isinstance(b, WeightedSeq):
        return convolve(a, b)
    if isinstance(a, WeightedSeq):
        return seq_scale(a, b)
    if isinstance(b, WeightedSeq):
        return seq_scale(b, a)
    return CInterval.coerce(a) * b if isinstance(a, CInterval) or isinstance(b, CInterval) else a * b


alg_scale = seq_scale


def alg_add(a, b):
    if isinstance(a, WeightedSeq) and isinstance(b, WeightedSeq):
        return seq_add(a, b)
    if isinstance(a, CInterval) or isinstance(b, CInterval):
        return CInterval.coerce(a) + CInterval.coerce(b)
    return a + b


def _alg_pow(x, n: int, one):
    if n == 0:
        return one
    out = x
    for _ in range(n - 1):
        out = alg_mul(out, x)
    return out


def eval_terms(terms, u, v, alpha, one=None):
    """Evaluate a term list at algebra elements u, v and scalar alpha.

    Uses interval coefficients when alpha is an interval or the sequences
    carry radii; float coefficients otherwise.
    """
    rigorous = isinstance(alpha, (CInterval, Interval)) or any(
        isinstance(x, WeightedSeq) and not x.is_exact() for x in (u, v)
    )
    if one is None:
        one = alg_one_like(u)
    acc = None
    for t in terms:
        if rigorous:
            c = CInterval(t.coeff_interval, Interval.point(0.0))
            apow = CInterval.coerce(alpha) ** t.ca if t.ca else CInterval.point(1.0 + 0j)
            scal = c * apow
        else:
            a = complex(alpha)
            scal = t.coeff_float * (a**t.ca)
        if t.cu == 0 and t.cv == 0:
            term_val = alg_mul(one, scal)
        elif t.cu == 0:
            term_val = alg_mul(_alg_pow(v, t.cv, one), scal)
        elif t.cv == 0:
            term_val = alg_mul(_alg_pow(u, t.cu, one), scal)
        else:
            term_val = alg_mul(alg_mul(_alg_pow(u, t.cu, one), _alg_pow(v, t.cv, one)), scal)
        acc = term_val if acc is None else alg_add(acc, term_val)
    if acc is None:
        return alg_mul(one, 0.0 + 0.0j)
    return acc


def diff_terms(terms, var: str) -> tuple[PolyTerm, ...]:
    """Partial derivative of a term list; var in {'u', 'v', 'alpha'}."""
    out = []
    for t in terms:
        if var == "u" and t.cu > 0:
            out.append(PolyTerm(t.cu - 1, t.cv, t.ca, t.num * t.cu, t.den))
        elif var == "v" and t.cv > 0:
            out.append(PolyTerm(t.cu, t.cv - 1, t.ca, t.num * t.cv, t.den))
        elif var == "alpha" and t.ca > 0:
            out.append(PolyTerm(t.cu, t.cv, t.ca - 1, t.num * t.ca, t.den))
    return tuple(out)


# ---------------------------------------------------------------------------
# the first-order field
# ---------------------------------------------------------------------------


def psi_eval(problem: ProblemDefinition, u, alpha):
    """Componentwise Psi over the operand algebra (4-tuple in, 4-tuple out)."""
    u1, u2, u3, u4 = u
    f1 = eval_terms(problem.nonlinearity.f1, u1, u3, alpha)
    f2 = eval_terms(problem.nonlinearity.f2, u1, u3, alpha)
    return (u2, f1, u4, f2)


def psi_jacobian(problem: ProblemDefinition, u, alpha):
    """4x4 Jacobian D_u Psi over the algebra.

    Entries are algebra elements; the structural zeros and ones are plain
    scalars 0 and 1 (callers decide how to lift them).
    """
    u1, _, u3, _ = u
    nl = problem.nonlinearity
    d11 = eval_terms(diff_terms(nl.f1, "u"), u1, u3, alpha) if diff_terms(nl.f1, "u") else None
    d13 = eval_terms(diff_terms(nl.f1, "v"), u1, u3, alpha) if diff_terms(nl.f1, "v") else None
    d21 = eval_terms(diff_terms(nl.f2, "u"), u1, u3, alpha) if diff_terms(nl.f2, "u") else None
    d23 = eval_terms(diff_terms(nl.f2, "v"), u1, u3, alpha) if diff_terms(nl.f2, "v") else None
    zero, one = 0.0, 1.0
    return [
        [zero, one, zero, zero],
        [d11 if d11 is not None else zero, zero, d13 if d13 is not None else zero, zero],
        [zero, zero, zero, one],
        [d21 if d21 is not None else zero, zero, d23 if d23 is not None else zero, zero],
    ]


def dpsi_origin(problem: ProblemDefinition, alpha, rigorous: bool = False):
    """D_u Psi(0, alpha) as a 4x4 array of scalars (complex or CInterval)."""
    zero = CInterval.point(0.0 + 0j) if rigorous else 0.0 + 0.0j
    one = CInterval.point(1.0 + 0j) if rigorous else 1.0 + 0.0j
    a = CInterval.coerce(alpha) if rigorous else complex(alpha)

    def at0(terms):
        acc = zero
        for t in terms:
            if t.cu == 0 and t.cv == 0:
                if rigorous:
                    acc = acc + CInterval(t.coeff_interval, Interval.point(0.0)) * (a**t.ca)
                else:
                    acc = acc + t.coeff_float * (a**t.ca)
        return acc

    nl = problem.nonlinearity
    return [
        [zero, one, zero, zero],
        [at0(diff_terms(nl.f1, "u")), zero, at0(diff_terms(nl.f1, "v")), zero],
        [zero, zero, zero, one],
        [at0(diff_terms(nl.f2, "u")), zero, at0(diff_terms(nl.f2, "v")), zero],
    ]


def equilibrium_spectrum_hint(problem: ProblemDefinition, alpha, tol: float = 1e-8):
    """Numerical eigenpairs of D_u Psi(0, alpha), (stable pair, unstable pair).

    Non-rigorous: seeds the eigenpair block of the zero-finding problem.
    """
    a = alpha.mid if isinstance(alpha, (Interval, CInterval)) else float(alpha)
    jac = np.array(dpsi_origin(problem, complex(a)), dtype=np.complex128)
    vals, vecs = np.linalg.eig(jac)
    if np.any(np.abs(vals.real) < tol):
        raise HyperbolicityFailure(f"eigenvalue near the imaginary axis at alpha={a}")
    order = np.argsort(vals.real)
    stable = [(vals[i], vecs[:, i]) for i in order[:2]]
    unstable = [(vals[i], vecs[:, i]) for i in order[2:]]
    if stable[0][0].real >= 0 or unstable[0][0].real <= 0:
        raise HyperbolicityFailure("origin is not a 2-2 saddle")
    # put the eigenvalue with positive imaginary part first, for a stable order
    stable.sort(key=lambda ev: -ev[0].imag)
    unstable.sort(key=lambda ev: -ev[0].imag)
    return stable, unstable


# ---------------------------------------------------------------------------
# built-in problems
# ---------------------------------------------------------------------------


def builtin_swift_hohenberg() -> ProblemDefinition:
    """Cubic-quadratic Swift-Hohenberg steady states:
    u'' = v, v'' = -(alpha+1) u + 2 u^2 - u^3 - 2 v."""
    f1 = (PolyTerm(0, 1, 0, 1),)
    f2 = (
        PolyTerm(1, 0, 1, -1),
        PolyTerm(1, 0, 0, -1),
        PolyTerm(2, 0, 0, 2),
        PolyTerm(3, 0, 0, -1),
        PolyTerm(0, 1, 0, -2),
    )
    return ProblemDefinition(
        nonlinearity=PolyNonlinearity(f1=f1, f2=f2),
        name="swift_hohenberg",
        alpha_range_hint=(0.24, 0.50),
        orientable_hint=True,
    )


def builtin_gray_scott() -> ProblemDefinition:
    """Translated and rescaled Gray-Scott steady states:
    9 u'' = v^2/2 + alpha (u + v + u v^2) + alpha^2 u v + alpha^3 u,
      v'' = -v^2/2 - alpha (v/2 + u v^2) - 2 alpha^2 u v - alpha^3 u."""
    f1 = (
        PolyTerm(0, 2, 0, 1, 18),
        PolyTerm(1, 0, 1, 1, 9),
        PolyTerm(0, 1, 1, 1, 9),
        PolyTerm(1, 2, 1, 1, 9),
        PolyTerm(1, 1, 2, 1, 9),
        PolyTerm(1, 0, 3, 1, 9),
    )
    f2 = (
        PolyTerm(0, 2, 0, -1, 2),
        PolyTerm(0, 1, 1, -1, 2),
        PolyTerm(1, 2, 1, -1),
        PolyTerm(1, 1, 2, -2),
        PolyTerm(1, 0, 3, -1),
    )
    return ProblemDefinition(
        nonlinearity=PolyNonlinearity(f1=f1, f2=f2),
        name="gray_scott",
        alpha_range_hint=(1.10, 1.30),
        orientable_hint=True,
    )


_BUILTINS = {
    "swift_hohenberg": builtin_swift_hohenberg,
    "gray_scott": builtin_gray_scott,
}


def builtin_problem(name: str) -> ProblemDefinition:
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown builtin problem {name!r}; "
                       f"available: {sorted(_BUILTINS)}") from None


def load_problem_file(path: str | Path) -> ProblemDefinition:
    """Load a problem from a declarative JSON term file.

    Schema: {"name": str, "f1": [[cu, cv, ca, num, den], ...], "f2": [...],
    "alpha_range": [lo, hi], "orientable": bool}.
    """
    doc = json.loads(Path(path).read_text())

    def terms(rows):
        out = []
        for row in rows:
            cu, cv, ca, num = row[:4]
            den = row[4] if len(row) > 4 else 1
            out.append(PolyTerm(int(cu), int(cv), int(ca), int(num), int(den)))
        return tuple(out)

    return ProblemDefinition(
        nonlinearity=PolyNonlinearity(f1=terms(doc["f1"]), f2=terms(doc["f2"])),
        name=str(doc.get("name", Path(path).stem)),
        alpha_range_hint=tuple(doc.get("alpha_range", (0.0, 1.0))),
        orientable_hint=bool(doc.get("orientable", True)),
    )
