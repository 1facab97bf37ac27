"""Potential catalog, domains, critical points and hypothesis checks."""

from .catalog import CATALOG, default_bump, default_pair, make_case, make_field, make_perturbation
from .critical import CriticalPoint, boundary_critical_points, find_critical_points
from .domains import Annulus, Disc, DomainPair, Interval, IntervalUnion
from .fields import ScalarField, bump, constant, eval_field
from .hypotheses import HypothesisReport, Tolerances, check_hypotheses, cvmax, kappa

__all__ = [
    "CATALOG", "default_bump", "default_pair", "make_case", "make_field", "make_perturbation",
    "CriticalPoint", "boundary_critical_points", "find_critical_points",
    "Annulus", "Disc", "DomainPair", "Interval", "IntervalUnion",
    "ScalarField", "bump", "constant", "eval_field",
    "HypothesisReport", "Tolerances", "check_hypotheses", "cvmax", "kappa",
]
