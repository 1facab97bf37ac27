"""Named potentials with their default nested domains.

``make_field(name, params)`` builds the field; ``default_pair`` gives the
domain pair each catalog entry is designed for.
"""

from __future__ import annotations

from . import fields as F
from .domains import Disc, DomainPair, Interval

__all__ = ["CATALOG", "make_field", "default_pair", "make_case", "make_perturbation", "default_bump"]

_ALIASES = {"a+": "a_plus", "b+": "b_plus"}


def _kw(params):
    return {_ALIASES.get(k, k): v for k, v in (params or {}).items()}


def _pair_1d(minus=(-0.8, 0.8), plus=(-1.0, 1.0)):
    return DomainPair(Interval(*minus), Interval(*plus))


def _radial_pair(R):
    c = (-float(R), 0.0)
    return DomainPair(Disc(c, 2.0 * R - 1.0), Disc(c, 2.0 * R))


def _flat_pair(p):
    a, b = p.get("a_plus", -1.0), p.get("b_plus", 1.0)
    return _pair_1d((a + 0.2, b - 0.2), (a, b))


def _multiflat_pair(p):
    a, b = p.get("a_plus", -2.0), p.get("b_plus", 2.0)
    return _pair_1d((a + 0.2, b - 0.2), (a, b))


def _spline_pair(p):
    rmax = float(p["knots"][-1][0])
    return DomainPair(Disc((0.0, 0.0), 0.8 * rmax), Disc((0.0, 0.0), rmax))


CATALOG = {
    "harmonic1d": (F.harmonic1d, lambda p: _pair_1d()),
    "doublewell1d": (F.doublewell1d, lambda p: _pair_1d()),
    "triplewell1d": (F.triplewell1d, lambda p: _pair_1d()),
    "polynomial1d": (F.polynomial1d, lambda p: _pair_1d()),
    "flatbottom1d": (F.flatbottom1d, _flat_pair),
    "multiflat1d": (F.multiflat1d, _multiflat_pair),
    "fig-ok-1d": (F.fig_ok_1d, lambda p: _pair_1d()),
    "fig-notok-1d": (F.fig_notok_1d, lambda p: _pair_1d()),
    "radial2d": (F.radial2d, lambda p: _radial_pair(p.get("R", 4.0))),
    "multiwell2d": (F.multiwell2d, lambda p: _radial_pair(p.get("R", 4.0))),
    "radialspline2d": (F.radialspline2d, _spline_pair),
}


def make_field(name: str, params: dict | None = None) -> F.ScalarField:
    if name not in CATALOG:
        raise KeyError(f"unknown potential {name!r}; known: {sorted(CATALOG)}")
    return CATALOG[name][0](**_kw(params))


def default_pair(name: str, params: dict | None = None) -> DomainPair:
    return CATALOG[name][1](_kw(params))


def make_case(name: str, params: dict | None = None):
    """``(field, default DomainPair)`` for a catalog entry."""
    return make_field(name, params), default_pair(name, params)


# well-filling bumps used by the boost and hyperdynamics studies
_DEFAULT_BUMPS = {
    "doublewell1d": {"center": [-0.5], "radius": 0.25, "amplitude": 0.01},
    "harmonic1d": {"center": [0.0], "radius": 0.4, "amplitude": 0.05},
    "radial2d": {"center": [0.0, 0.0], "radius": 0.9, "amplitude": 0.05},
}


def make_perturbation(spec: dict | None) -> F.ScalarField | None:
    """Build a perturbation from ``{"type": "bump", "center", "radius", "amplitude"}``."""
    if not spec:
        return None
    kind = spec.get("type", "bump")
    if kind != "bump":
        raise KeyError(f"unknown perturbation type {kind!r}")
    return F.bump(spec["center"], spec["radius"], spec["amplitude"])


def default_bump(name: str) -> dict:
    if name not in _DEFAULT_BUMPS:
        raise KeyError(f"no default perturbation for {name!r}")
    return {"type": "bump", **_DEFAULT_BUMPS[name]}
