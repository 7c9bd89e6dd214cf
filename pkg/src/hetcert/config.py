"""Run configuration: a flat key = value text format.

Unknown keys are rejected; all defaults mirror the built-in experiment
setups (geometric weights 1.4 / 1.1, segment order 15).  Example::

    problem = swift_hohenberg
    alpha0 = 0.35
    N_gamma = 20
    N_v = 20
    N_wF = 25
    N_wT = 12
    N_a = 60
    N_p = 15
    n_s = 15
    arclength_plan = 1.5, 2.5, 2.5, 2.0, 2.5, 1.6
    workers = 1
    out = ./runs/sh
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .spaces import SpaceWeights, TruncationScheme
from .state import SolverConfig
from .systems import ProblemDefinition, builtin_problem, load_problem_file

__all__ = ["RunConfig", "load_config", "make_context"]

_DEFAULTS = {
    "problem": "swift_hohenberg",
    "problem_file": "",
    "alpha0": 0.35,
    "nu_gamma": 1.4,
    "nu_v": 1.4,
    "nu_w": 1.4,
    "nu_p": 1.4,
    "nu_a": 1.1,
    "N_gamma": 20,
    "N_v": 20,
    "N_wF": 25,
    "N_wT": 12,
    "N_a": 60,
    "N_p": 15,
    "n_s": 15,
    "sigma0": 0.5,
    "rho": 0.3,
    "lbar": 1,
    "rho1": 0.3,
    "rho2": 0.3,
    "kbar1": 1,
    "kbar2": 1,
    "radius_constraint": 0.95,
    "arclength_plan": "1.5",
    "step_max": 0.25,
    "newton_tol": 1e-12,
    "z_min": 0.4,
    "r_max": 1e-3,
    "precision": "double",
    "workers": 1,
    "out": "./hetcert-out",
    "doubled_orbit": 0,
}

_INT_KEYS = {"N_gamma", "N_v", "N_wF", "N_wT", "N_a", "N_p", "n_s",
             "lbar", "kbar1", "kbar2", "workers", "doubled_orbit"}
_FLOAT_KEYS = {"alpha0", "nu_gamma", "nu_v", "nu_w", "nu_p", "nu_a", "sigma0",
               "rho", "rho1", "rho2", "radius_constraint", "step_max",
               "newton_tol", "z_min", "r_max"}


@dataclass
class RunConfig:
    values: dict

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    @property
    def arclengths(self) -> list[float]:
        raw = str(self.values["arclength_plan"])
        return [float(tok) for tok in raw.replace(",", " ").split()]

    def problem_def(self) -> ProblemDefinition:
        if self.values["problem_file"]:
            return load_problem_file(self.values["problem_file"])
        return builtin_problem(self.values["problem"])

    def scheme(self) -> TruncationScheme:
        v = self.values
        return TruncationScheme(N_gamma=v["N_gamma"], N_v=v["N_v"], N_wF=v["N_wF"],
                                N_wT=v["N_wT"], N_a=v["N_a"], N_p=v["N_p"])

    def space_weights(self) -> SpaceWeights:
        v = self.values
        return SpaceWeights(nu_gamma=v["nu_gamma"], nu_v=v["nu_v"], nu_w=v["nu_w"],
                            nu_p=v["nu_p"], nu_a=v["nu_a"])

    def solver_config(self) -> SolverConfig:
        v = self.values
        return SolverConfig(sigma0=v["sigma0"], rho=v["rho"], lbar=v["lbar"],
                            rho1=v["rho1"], rho2=v["rho2"], kbar1=v["kbar1"],
                            kbar2=v["kbar2"], radius_constraint=v["radius_constraint"])

    def to_text(self) -> str:
        return "\n".join(f"{k} = {v}" for k, v in self.values.items()) + "\n"


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    vals = dict(_DEFAULTS)
    if path is not None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = body.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _DEFAULTS:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            vals[key] = val
    if overrides:
        for key, val in overrides.items():
            if val is None:
                continue
            if key not in _DEFAULTS:
                raise ValueError(f"unknown config key {key!r}")
            vals[key] = val
    for k in _INT_KEYS:
        vals[k] = int(vals[k])
    for k in _FLOAT_KEYS:
        vals[k] = float(vals[k])
    if vals["precision"] not in ("double", "extended"):
        raise ValueError("precision must be 'double' or 'extended'")
    if vals["workers"] < 1:
        raise ValueError("workers must be >= 1")
    return RunConfig(values=vals)


def make_context(cfg: RunConfig):
    from .maps import MapContext

    return MapContext(cfg.problem_def(), cfg.scheme(), cfg.space_weights(),
                      cfg.solver_config())
