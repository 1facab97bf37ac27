"""Checks of the standing assumptions on a triple (f, inner domain, outer domain)."""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, asdict

import numpy as np
from scipy import optimize

from ..errors import EmptyCriticalSet
from .critical import (CriticalPoint, boundary_critical_points, find_critical_points,
                       seed_grid)
from .domains import DomainPair
from .fields import ScalarField

__all__ = ["Tolerances", "HypothesisReport", "check_hypotheses", "kappa", "cvmax",
           "min_on_boundary", "min_on_domain"]


@dataclass(frozen=True)
class Tolerances:
    """Pass/fail thresholds.

    ``grad_floor``, ``eig_floor`` and ``separation`` are lower bounds a
    quantity must exceed; ``slack`` is subtracted from the right-hand side of
    the inequalities.  Loosening means smaller floors and larger slack, which
    can only turn failures into passes.
    """

    grad_floor: float = 1e-8
    eig_floor: float = 1e-6
    separation: float = 1e-6
    slack: float = 0.0

    def loosened(self, factor: float) -> "Tolerances":
        return Tolerances(self.grad_floor / factor, self.eig_floor / factor,
                          self.separation / factor, self.slack * factor + (factor - 1) * 1e-12)


@dataclass
class HypothesisReport:
    hyp0_ok: bool
    hyp3_ok: bool
    morse_ok: bool
    distinctness_ok: bool
    cvmax_condition_ok: bool
    conddag_ok: bool | None
    c0_margin: float
    kappa_f: float
    cvmax: float
    witnesses: dict = dc_field(default_factory=dict)
    critical_points: list = dc_field(default_factory=list, repr=False)
    boundary_points: list = dc_field(default_factory=list, repr=False)
    conddag_lhs: float | None = None
    conddag_rhs: float | None = None
    conddag_heuristic: bool = False

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items()
             if k not in ("critical_points", "boundary_points")}
        d["critical_points"] = [c.to_dict() for c in self.critical_points]
        d["boundary_points"] = [c.to_dict() for c in self.boundary_points]
        return _jsonable(d)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _boundary_values(field, domain, n=4096):
    bs = domain.boundary(n)
    pts = bs.points if field.dim == 2 else bs.points[:, 0]
    return bs, np.atleast_1d(field.value(pts)), np.atleast_2d(field.gradient(pts))


def min_on_boundary(field: ScalarField, domain, n: int = 4096) -> tuple[float, np.ndarray]:
    """Minimum of f over the boundary, refined along the angle in 2D."""
    bs, v, _ = _boundary_values(field, domain, n)
    k = int(np.argmin(v))
    if field.dim == 1 or not hasattr(domain, "point_at"):
        return float(v[k]), bs.points[k]
    dt = 2 * np.pi / n
    res = optimize.minimize_scalar(lambda t: field.value(domain.point_at(t)[0]),
                                   bounds=(bs.param[k] - dt, bs.param[k] + dt), method="bounded",
                                   options={"xatol": 1e-12})
    x = domain.point_at(res.x)[0]
    return float(min(res.fun, v[k])), x


def min_on_domain(field: ScalarField, domain, spacing: float) -> tuple[float, np.ndarray]:
    """Minimum of f over the closed domain: lattice scan then local descent."""
    pts = np.concatenate([seed_grid(domain, spacing), domain.boundary(4096 if field.dim == 2 else None).points])
    v = field.value_fn(pts)
    k = int(np.argmin(v))
    x0 = pts[k]
    lo, hi = x0 - spacing, x0 + spacing
    res = optimize.minimize(lambda x: field.value(x), x0, jac=lambda x: np.atleast_1d(field.gradient(x)),
                            bounds=list(zip(lo, hi)), method="L-BFGS-B",
                            options={"ftol": 1e-15, "gtol": 1e-14})
    inside = np.atleast_1d(domain.sdf(res.x if field.dim == 2 else res.x[0]))[0] <= 0
    if inside and res.fun < v[k]:
        return float(res.fun), res.x
    return float(v[k]), x0


def kappa(field: ScalarField, omega_plus, grid_spacing: float) -> float:
    """Exit barrier: min of f on the outer boundary minus min of f on the outer domain."""
    return min_on_boundary(field, omega_plus)[0] - min_on_domain(field, omega_plus, grid_spacing)[0]


def cvmax(field: ScalarField, omega_minus, grid_spacing: float,
          points: list[CriticalPoint] | None = None) -> float:
    """Largest critical value of f in the inner domain."""
    pts = find_critical_points(field, omega_minus, grid_spacing) if points is None else points
    pts = [c for c in pts if c.kind in ("interior", "component")]
    if not pts:
        raise EmptyCriticalSet("no critical points in the domain")
    return max(c.value for c in pts)


def _pairwise_distinct(vals, sep):
    vals = np.sort(np.asarray(vals, dtype=float))
    if len(vals) < 2:
        return True, None
    gaps = np.diff(vals)
    k = int(np.argmin(gaps))
    return bool(gaps[k] > sep), (float(vals[k]), float(vals[k + 1]))


def check_hypotheses(field: ScalarField, pair: DomainPair, grid_spacing: float,
                     tolerances: Tolerances | None = None) -> HypothesisReport:
    """Evaluate the assumptions on sampling grids and report each with witnesses.

    ``conddag_ok`` is left as ``None``; :func:`wittenexit.agmon.check_conddag`
    fills it in.
    """
    tol = tolerances or Tolerances()
    W: dict = {}
    cps = find_critical_points(field, pair.minus, grid_spacing)
    interior = [c for c in cps if c.kind in ("interior", "component")]

    # gradient does not vanish on the closed shell
    shell_pts = np.concatenate([seed_grid(pair.shell(), grid_spacing, closed=True),
                                pair.minus.boundary(4096 if field.dim == 2 else None).points,
                                pair.plus.boundary(4096 if field.dim == 2 else None).points])
    gn = np.linalg.norm(field.gradient_fn(shell_pts), axis=1)
    k = int(np.argmin(gn))
    shell_ok = bool(gn[k] > tol.grad_floor)
    W["shell_min_grad"] = {"point": shell_pts[k], "value": float(gn[k])}

    bs, vm, gm = _boundary_values(field, pair.minus)
    dn = np.sum(gm * bs.normals, axis=1)
    k = int(np.argmin(dn))
    dn_ok = bool(dn[k] > -tol.slack)
    W["inner_min_normal_derivative"] = {"point": bs.points[k], "value": float(dn[k])}

    min_bm, xbm = min_on_boundary(field, pair.minus)
    min_bp, xbp = min_on_boundary(field, pair.plus)
    order_ok = bool(min_bp >= min_bm - tol.slack)
    W["boundary_minima"] = {"outer": float(min_bp), "outer_point": xbp,
                            "inner": float(min_bm), "inner_point": xbm}
    hyp0_ok = shell_ok and dn_ok and order_ok

    if interior:
        cv = max(c.value for c in interior)
        top = max(interior, key=lambda c: c.value)
        W["cvmax_point"] = top.location
    else:
        cv = float("nan")
    c0 = float(min_bp - cv) if interior else float("nan")
    hyp3_ok = bool(interior) and c0 > -tol.slack

    degenerate = [c for c in interior if c.kind == "component" or
                  (c.eigenvalues is not None and np.min(np.abs(c.eigenvalues)) <= tol.eig_floor)]
    morse_ok = not degenerate
    if degenerate:
        W["degenerate"] = [c.location for c in degenerate]

    vals = [c.value for c in interior]
    span = (max(vals) - min(vals)) if len(vals) > 1 else 1.0
    sep = tol.separation * max(span, 1e-300)
    d1, w1 = _pairwise_distinct(vals, sep)
    mins = [c for c in interior if c.index == 0]
    sads = [c for c in interior if c.index == 1]
    diffs = [s.value - m.value for s in sads for m in mins]
    d2, w2 = _pairwise_distinct(diffs, sep)
    distinct_ok = d1 and d2
    if not d1:
        W["equal_critical_values"] = w1
    if not d2:
        W["equal_barriers"] = w2

    min_m = min_on_domain(field, pair.minus, grid_spacing)[0]
    if interior:
        lhs, rhs = min_bm - cv, cv - min_m
        cvmax_ok = bool(lhs > rhs - tol.slack)
        W["cvmax_condition"] = {"lhs": float(lhs), "rhs": float(rhs)}
    else:
        cvmax_ok = False

    kap = min_bp - min_on_domain(field, pair.plus, grid_spacing)[0]
    return HypothesisReport(
        hyp0_ok=hyp0_ok, hyp3_ok=hyp3_ok, morse_ok=morse_ok, distinctness_ok=distinct_ok,
        cvmax_condition_ok=cvmax_ok, conddag_ok=None, c0_margin=c0, kappa_f=float(kap),
        cvmax=float(cv), witnesses=W, critical_points=cps,
        boundary_points=boundary_critical_points(field, pair.plus),
    )
