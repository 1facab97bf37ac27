"""Laplace integrals, leading-order exit rates, exit densities and boost factors.

All exponentials are formed after subtracting a reference value of f (by
default its minimum over the outer domain), so ratios never under- or
overflow.  Quantities that are returned on their own take an explicit
``shift`` and represent ``integral of exp(-2 (f - shift)/h)``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np
from scipy.integrate import trapezoid

from .errors import DegenerateMinimum, IllConditioned, NegativeNormalDerivative, SupportViolation
from .operator import Grid, build_grid
from .potential.critical import boundary_critical_points, find_critical_points, seed_grid
from .potential.domains import DomainPair
from .potential.fields import ScalarField
from .potential.hypotheses import _jsonable, min_on_boundary, min_on_domain
from .spectra import BoundaryDensity

__all__ = [
    "AsymptoticReport",
    "laplace_volume_integral",
    "boundary_flux_integral",
    "lambda1_asymptotic",
    "exit_density_asymptotic",
    "gaussian_mixture_weights",
    "boost_factor",
    "slope_fit",
    "laplace_bracket",
    "asymptotic_report",
    "write_series_csv",
]


def _quad_spacing(field, domain, h):
    lo, hi = domain.bbox
    ext = float(np.max(hi - lo))
    pts = seed_grid(domain, ext / 400, closed=True)
    g = float(np.max(np.linalg.norm(field.gradient_fn(pts), axis=1)))
    dx = h / (16 * g) if g > 0 else ext / 400
    floor = ext / 20000 if domain.dim == 1 else ext / 400
    return max(dx, floor)


def _volume_quadrature(field, omega, h, shift, spacing=None, grid: Grid | None = None):
    if grid is not None:
        fv = field.value_fn(grid.nodes)
        return float(np.sum(grid.weights * np.exp(-2 * (fv - shift) / h)))
    dx = spacing or _quad_spacing(field, omega, h)
    if omega.dim == 1:
        tot = 0.0
        for I in omega.components:
            n = max(int(np.ceil((I.b - I.a) / dx)), 8)
            x = np.linspace(I.a, I.b, n + 1)
            tot += trapezoid(np.exp(-2 * (field.value_fn(x[:, None]) - shift) / h), x)
        return float(tot)
    g = build_grid(omega, dx, min_nodes=2)
    return _volume_quadrature(field, omega, h, shift, grid=g)


def _minima(field, omega, spacing):
    cps = find_critical_points(field, omega, spacing)
    mins = [c for c in cps if c.kind in ("interior", "component") and c.index == 0]
    if not mins:
        raise DegenerateMinimum("no interior local minimum found")
    return mins


def laplace_volume_integral(field: ScalarField, omega, h: float, method: str = "quadrature",
                            shift: float = 0.0, spacing: float | None = None,
                            grid: Grid | None = None) -> float:
    """``int_omega exp(-2 (f - shift)/h) dx``.

    ``method="quadrature"`` integrates by the trapezoid rule (on ``grid`` if
    given).  ``method="hessian"`` sums the Laplace approximation
    ``exp(-2 (f(U) - shift)/h) (pi h)^(d/2) / sqrt(det Hess f(U))`` over the
    local minima U and raises :class:`DegenerateMinimum` if one of them is
    degenerate.
    """
    if method == "quadrature":
        return _volume_quadrature(field, omega, h, shift, spacing, grid)
    if method != "hessian":
        raise ValueError(f"unknown method {method!r}")
    sp_ = spacing or (float(np.max(omega.bbox[1] - omega.bbox[0])) / (2000 if omega.dim == 1 else 200))
    tot = 0.0
    for m in _minima(field, omega, sp_):
        if m.kind == "component" or not m.morse or m.hessian_det <= 0:
            raise DegenerateMinimum(f"degenerate minimum near {m.location.tolist()}; use quadrature")
        tot += np.exp(-2 * (m.value - shift) / h) * (np.pi * h) ** (omega.dim / 2) / np.sqrt(m.hessian_det)
    return float(tot)


def _boundary_minima(field, omega_plus):
    bps = boundary_critical_points(field, omega_plus)
    return [b for b in bps if b.boundary_index == 0]


def boundary_flux_integral(field: ScalarField, omega_plus, h: float, method: str = "quadrature",
                           shift: float = 0.0, n_samples: int = 4096) -> float:
    """``int_{boundary} 2 d_n f exp(-2 (f - shift)/h) dsigma``.

    In 1D the boundary integral is the sum over the two endpoints.  The
    Hessian form sums ``2 d_n f(U) exp(-2 (f(U) - shift)/h) (pi h)^((d-1)/2)
    / sqrt(det)`` over local minima U of f on the boundary, with the
    tangential second derivative as ``det`` (1 in 1D).
    """
    if method == "quadrature":
        bs = omega_plus.boundary(n_samples)
        pts = bs.points
        g = field.gradient_fn(pts)
        dn = np.sum(g * bs.normals, axis=1)
        fv = field.value_fn(pts)
        return float(np.sum(bs.weights * 2 * dn * np.exp(-2 * (fv - shift) / h)))
    if method != "hessian":
        raise ValueError(f"unknown method {method!r}")
    d = omega_plus.dim
    tot = 0.0
    for b in _boundary_minima(field, omega_plus):
        if b.normal_derivative <= 0:
            raise NegativeNormalDerivative(
                f"normal derivative {b.normal_derivative:.3g} <= 0 at boundary minimum {b.location.tolist()}")
        if b.hessian_det <= 0:
            raise DegenerateMinimum(f"degenerate boundary minimum at {b.location.tolist()}")
        tot += (2 * b.normal_derivative * np.exp(-2 * (b.value - shift) / h)
                * (np.pi * h) ** ((d - 1) / 2) / np.sqrt(b.hessian_det))
    return float(tot)


def _ref(field, pair_or_domain, spacing=None):
    dom = pair_or_domain.plus if isinstance(pair_or_domain, DomainPair) else pair_or_domain
    sp_ = spacing or float(np.max(dom.bbox[1] - dom.bbox[0])) / (4000 if dom.dim == 1 else 300)
    return min_on_domain(field, dom, sp_)[0]


def lambda1_asymptotic(field: ScalarField, pair: DomainPair, h: float, method: str = "flux",
                       spacing: float | None = None) -> float:
    """Leading-order first Dirichlet eigenvalue on the outer domain.

    ``flux``: ``h * int 2 d_n f e^{-2f/h} dsigma / int e^{-2f/h} dx`` by
    quadrature.  ``hessian``: the same ratio with both integrals replaced by
    their Laplace approximations.
    """
    s = _ref(field, pair)
    kind = "quadrature" if method == "flux" else "hessian"
    if method not in ("flux", "hessian"):
        raise ValueError(f"unknown method {method!r}")
    num = boundary_flux_integral(field, pair.plus, h, kind, shift=s)
    den = laplace_volume_integral(field, pair.plus, h, kind, shift=s, spacing=spacing)
    return h * num / den


def gaussian_mixture_weights(field: ScalarField, pair: DomainPair, h: float) -> tuple[list, np.ndarray]:
    """Boundary minima with positive normal derivative and their normalised weights.

    The weight of a minimum U_k is proportional to
    ``d_n f(U_k) exp(-2 (f(U_k) - min f)/h) (pi h)^((d-1)/2) / sqrt(det_k)``.
    """
    s = _ref(field, pair)
    mins = _boundary_minima(field, pair.plus)
    d = pair.dim
    logt = []
    for b in mins:
        if b.normal_derivative <= 0:
            raise NegativeNormalDerivative(f"normal derivative <= 0 at {b.location.tolist()}")
        logt.append(np.log(b.normal_derivative) - 2 * (b.value - s) / h
                    + 0.5 * (d - 1) * np.log(np.pi * h) - 0.5 * np.log(b.hessian_det))
    logt = np.array(logt)
    t = np.exp(logt - logt.max())
    return mins, t / t.sum()


def exit_density_asymptotic(field: ScalarField, pair: DomainPair, h: float, form: str = "flux",
                            n_samples: int = 4096) -> BoundaryDensity:
    """Asymptotic exit-point density on the outer boundary.

    ``flux``: ``2 d_n f exp(-2f/h)`` normalised on the boundary samples.
    ``gaussian_mixture``: a mixture of Gaussians centred at the boundary
    minima with variance ``h/(2 lambda)`` along the boundary, where lambda is
    the tangential second derivative; each is cut at 6 standard deviations
    and renormalised on the samples.
    """
    bs = pair.plus.boundary(n_samples)
    if form == "flux":
        s = _ref(field, pair)
        dn = np.sum(field.gradient_fn(bs.points) * bs.normals, axis=1)
        e = 2 * (field.value_fn(bs.points) - s) / h
        v = 2 * dn * np.exp(-(e - e.min()))
        v = np.clip(v, 0.0, None)
        return BoundaryDensity(bs.points, bs.param, v / np.sum(v * bs.weights), bs.weights)
    if form != "gaussian_mixture":
        raise ValueError(f"unknown form {form!r}")
    mins, t = gaussian_mixture_weights(field, pair, h)
    if pair.dim == 1:
        v = np.zeros(len(bs.points))
        for b, tk in zip(mins, t):
            v[int(np.argmin(np.abs(bs.points[:, 0] - b.location[0])))] += tk
        return BoundaryDensity(bs.points, bs.param, v, bs.weights)
    r = pair.plus.radius
    v = np.zeros(len(bs.points))
    for b, tk in zip(mins, t):
        lam = b.hessian_det
        sd = np.sqrt(h / (2 * lam))
        dth = np.angle(np.exp(1j * (bs.param - b.param)))
        x = r * dth
        G = np.where(np.abs(x) <= 6 * sd, np.exp(-lam * x * x / h), 0.0)
        if G.sum() == 0:
            G[int(np.argmin(np.abs(x)))] = 1.0
        v += tk * G / np.sum(G * bs.weights)
    return BoundaryDensity(bs.points, bs.param, v, bs.weights)


def _support_check(delta_f, pair, spacing):
    pts = np.concatenate([seed_grid(pair.shell(), spacing, closed=True),
                          pair.minus.boundary(4096 if pair.dim == 2 else None).points,
                          pair.plus.boundary(4096 if pair.dim == 2 else None).points])
    v = np.abs(delta_f.value_fn(pts))
    k = int(np.argmax(v))
    if v[k] > 1e-12:
        raise SupportViolation(f"delta f = {v[k]:.3g} at {pts[k].tolist()}, outside the inner domain")


def boost_factor(field: ScalarField, delta_f: ScalarField, pair: DomainPair, h: float,
                 grid: Grid | None = None, spacing: float | None = None) -> float:
    """``int exp(-2f/h) / int exp(-2(f + delta f)/h)`` over the outer domain.

    ``delta_f`` must vanish outside the inner domain.  Pass the operator grid
    to integrate on exactly the nodes used by the eigenvalue solver.
    """
    dom = pair.plus
    _support_check(delta_f, pair, spacing or float(np.max(dom.bbox[1] - dom.bbox[0])) / 2000)
    g = delta_f + field
    s = min(_ref(field, pair), _ref(g, pair))
    num = _volume_quadrature(field, dom, h, s, spacing, grid)
    den = _volume_quadrature(g, dom, h, s, spacing, grid)
    return num / den


def slope_fit(h_values, lambda1_values, prefactor_power: float = 0.0) -> tuple[float, float, float]:
    """Fit ``h log lambda1 - p h log h = a + b h`` by least squares.

    Returns ``(b, a, r2)``; ``a`` is the extrapolated limit of ``h log lambda1``
    as h -> 0.  ``prefactor_power`` p removes a known ``h^p`` prefactor.
    """
    h = np.asarray(h_values, dtype=float)
    lam = np.asarray(lambda1_values, dtype=float)
    if len(h) < 3 or len(h) != len(lam):
        raise ValueError("need at least three (h, lambda1) pairs")
    if np.any(lam <= 0) or np.any(h <= 0):
        raise ValueError("h and lambda1 must be positive")
    if h.max() / h.min() < 1.5:
        raise IllConditioned("h values span less than a factor 1.5")
    y = h * np.log(lam) - prefactor_power * h * np.log(h)
    M = np.stack([np.ones_like(h), h], axis=1)
    (a, b), *_ = np.linalg.lstsq(M, y, rcond=None)
    yhat = a + b * h
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum((y - yhat) ** 2) / ss if ss > 0 else 1.0
    return float(b), float(a), float(r2)


def laplace_bracket(field: ScalarField, omega, h: float, spacing: float | None = None) -> tuple[float, float, float]:
    """``(lower, quadrature, upper)`` for ``int exp(-2 (f - min f)/h)``.

    The upper bound is the volume of the domain.  The lower bound is
    ``h^(d/2) / C_f`` with ``C_f`` taken from the Laplace approximation at the
    global minimum with a factor 2 margin; for a flat minimum set of measure
    ``|F|`` it is ``2/|F|`` instead.
    """
    s, _ = min_on_domain(field, omega, spacing or float(np.max(omega.bbox[1] - omega.bbox[0])) / 2000)
    q = _volume_quadrature(field, omega, h, s, spacing)
    d = omega.dim
    sp_ = float(np.max(omega.bbox[1] - omega.bbox[0])) / (2000 if d == 1 else 200)
    mins = _minima(field, omega, sp_)
    glob = min(mins, key=lambda m: m.value)
    if glob.kind == "component":
        ext = glob.extent
        if d == 1:
            meas = float(ext.max() - ext.min())
        else:
            meas = len(ext) * sp_**2
        Cf = 2.0 / meas
    else:
        Cf = 2.0 * np.sqrt(glob.hessian_det) / np.pi ** (d / 2)
    return float(h ** (d / 2) / Cf), float(q), float(omega.volume)


@dataclass
class AsymptoticReport:
    h: float
    kappa_f: float
    volume_integral: dict
    boundary_flux_integral: dict
    lambda1_asym_flux: float
    lambda1_asym_hessian: float | None
    lambda1_numeric: float | None
    ratios: dict = dc_field(default_factory=dict)
    boost_factor_B: float | None = None
    shift: float = 0.0

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def asymptotic_report(field: ScalarField, pair: DomainPair, h: float,
                      lambda1_numeric: float | None = None,
                      delta_f: ScalarField | None = None) -> AsymptoticReport:
    s = _ref(field, pair)
    kap = min_on_boundary(field, pair.plus)[0] - s
    vq = laplace_volume_integral(field, pair.plus, h, "quadrature", shift=s)
    fq = boundary_flux_integral(field, pair.plus, h, "quadrature", shift=s)
    try:
        vh = laplace_volume_integral(field, pair.plus, h, "hessian", shift=s)
        fh = boundary_flux_integral(field, pair.plus, h, "hessian", shift=s)
        lh = h * fh / vh
    except (DegenerateMinimum, NegativeNormalDerivative):
        vh = fh = lh = None
    lf = h * fq / vq
    ratios = {}
    if lh is not None:
        ratios["hessian_over_flux"] = lh / lf
    if lambda1_numeric is not None:
        ratios["numeric_over_flux"] = lambda1_numeric / lf
        if lh is not None:
            ratios["numeric_over_hessian"] = lambda1_numeric / lh
    B = boost_factor(field, delta_f, pair, h) if delta_f is not None else None
    return AsymptoticReport(
        h=h, kappa_f=kap,
        volume_integral={"quadrature": vq, "hessian": vh},
        boundary_flux_integral={"quadrature": fq, "hessian": fh},
        lambda1_asym_flux=lf, lambda1_asym_hessian=lh, lambda1_numeric=lambda1_numeric,
        ratios=ratios, boost_factor_B=B, shift=s,
    )


def write_series_csv(reports: list[AsymptoticReport], path) -> None:
    cols = ["h", "lambda1_numeric", "lambda1_asym_flux", "lambda1_asym_hessian",
            "numeric_over_flux", "hessian_over_flux", "h_log_lambda1"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in reports:
            lam = r.lambda1_numeric
            row = [r.h, lam, r.lambda1_asym_flux, r.lambda1_asym_hessian,
                   r.ratios.get("numeric_over_flux"), r.ratios.get("hessian_over_flux"),
                   r.h * np.log(lam) if lam else None]
            w.writerow(["" if v is None else repr(float(v)) for v in row])
