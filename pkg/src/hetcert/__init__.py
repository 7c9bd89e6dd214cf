"""Validated continuation and certification of heteroclinic loops in
reversible second-order systems, with the snaking/isola dichotomy."""

__version__ = "0.1.0"
