"""Bounded domains in one and two dimensions and nested domain pairs.

Every domain exposes a signed distance ``sdf`` (negative inside), a bounding
box, an inside test and a sampled boundary with outward unit normals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import as_points

__all__ = [
    "Interval",
    "IntervalUnion",
    "Disc",
    "Annulus",
    "BoundarySamples",
    "DomainPair",
    "domain_from_spec",
]


@dataclass(frozen=True)
class BoundarySamples:
    """Points on a boundary with outward normals and quadrature weights.

    ``param`` is the angle on a circle and the endpoint sign (-1 or +1) on an
    interval.  In 1D the weights are all one, so integrals become endpoint sums.
    """

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    param: np.ndarray


@dataclass(frozen=True)
class Interval:
    a: float
    b: float
    dim: int = 1

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"empty interval ({self.a}, {self.b})")

    def sdf(self, x):
        p, single = as_points(x, 1)
        d = np.maximum(self.a - p[:, 0], p[:, 0] - self.b)
        return float(d[0]) if single else d

    def inside(self, x):
        d = self.sdf(x)
        return d < 0

    @property
    def bbox(self):
        return np.array([self.a]), np.array([self.b])

    @property
    def diameter(self) -> float:
        return self.b - self.a

    @property
    def volume(self) -> float:
        return self.b - self.a

    @property
    def components(self):
        return (self,)

    def boundary(self, n: int | None = None) -> BoundarySamples:
        return BoundarySamples(
            points=np.array([[self.a], [self.b]]),
            normals=np.array([[-1.0], [1.0]]),
            weights=np.ones(2),
            param=np.array([-1.0, 1.0]),
        )

    def to_dict(self):
        return {"kind": "interval", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class IntervalUnion:
    """Disjoint union of open intervals, e.g. the 1D shell between nested intervals."""

    parts: tuple
    dim: int = 1

    def __post_init__(self):
        ps = sorted(self.parts, key=lambda I: I.a)
        for I, J in zip(ps, ps[1:]):
            if I.b > J.a:
                raise ValueError("intervals overlap")
        object.__setattr__(self, "parts", tuple(ps))

    def sdf(self, x):
        ds = np.stack([np.atleast_1d(I.sdf(x)) for I in self.parts])
        d = ds.min(axis=0)
        return float(d[0]) if np.ndim(x) == 0 else d

    def inside(self, x):
        return self.sdf(x) < 0

    @property
    def bbox(self):
        return np.array([self.parts[0].a]), np.array([self.parts[-1].b])

    @property
    def diameter(self) -> float:
        return min(I.diameter for I in self.parts)

    @property
    def volume(self) -> float:
        return sum(I.volume for I in self.parts)

    @property
    def components(self):
        return self.parts

    def boundary(self, n: int | None = None) -> BoundarySamples:
        bs = [I.boundary() for I in self.parts]
        return BoundarySamples(
            points=np.concatenate([b.points for b in bs]),
            normals=np.concatenate([b.normals for b in bs]),
            weights=np.concatenate([b.weights for b in bs]),
            param=np.concatenate([b.param for b in bs]),
        )

    def to_dict(self):
        return {"kind": "interval_union", "parts": [I.to_dict() for I in self.parts]}


@dataclass(frozen=True)
class Disc:
    center: tuple
    radius: float
    dim: int = 2

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def sdf(self, x):
        p, single = as_points(x, 2)
        d = np.linalg.norm(p - np.asarray(self.center), axis=1) - self.radius
        return float(d[0]) if single else d

    def inside(self, x):
        return self.sdf(x) < 0

    @property
    def bbox(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    @property
    def volume(self) -> float:
        return np.pi * self.radius**2

    @property
    def components(self):
        return (self,)

    def point_at(self, theta):
        th = np.asarray(theta, dtype=float)
        n = np.stack([np.cos(th), np.sin(th)], axis=-1)
        return np.asarray(self.center) + self.radius * n, n

    def boundary(self, n: int = 4096) -> BoundarySamples:
        th = 2.0 * np.pi * np.arange(n) / n
        pts, nrm = self.point_at(th)
        return BoundarySamples(pts, nrm, np.full(n, 2.0 * np.pi * self.radius / n), th)

    def to_dict(self):
        return {"kind": "disc", "center": list(self.center), "radius": self.radius}


@dataclass(frozen=True)
class Annulus:
    """``outer`` minus the closure of ``inner``; used for the 2D shell."""

    outer: Disc
    inner: Disc
    dim: int = 2

    def sdf(self, x):
        return np.maximum(self.outer.sdf(x), -self.inner.sdf(x))

    def inside(self, x):
        return self.sdf(x) < 0

    @property
    def bbox(self):
        return self.outer.bbox

    @property
    def diameter(self) -> float:
        c_o, c_i = np.asarray(self.outer.center), np.asarray(self.inner.center)
        return self.outer.radius - self.inner.radius - float(np.linalg.norm(c_o - c_i))

    @property
    def volume(self) -> float:
        return self.outer.volume - self.inner.volume

    @property
    def components(self):
        return (self,)

    def boundary(self, n: int = 4096) -> BoundarySamples:
        o, i = self.outer.boundary(n), self.inner.boundary(n)
        return BoundarySamples(
            np.concatenate([o.points, i.points]),
            np.concatenate([o.normals, -i.normals]),
            np.concatenate([o.weights, i.weights]),
            np.concatenate([o.param, i.param]),
        )

    def to_dict(self):
        return {"kind": "annulus", "outer": self.outer.to_dict(), "inner": self.inner.to_dict()}


@dataclass(frozen=True)
class DomainPair:
    """Nested domains with the closure of ``minus`` strictly inside ``plus``."""

    minus: object
    plus: object

    def __post_init__(self):
        if self.minus.dim != self.plus.dim:
            raise ValueError("domains of different dimension")
        if self.margin() <= 0:
            raise ValueError("closure of the inner domain is not inside the outer domain")

    @property
    def dim(self) -> int:
        return self.plus.dim

    def margin(self, n: int = 4096) -> float:
        """Smallest distance from the inner boundary to the outer boundary."""
        pts = self.minus.boundary(n).points
        return float(-np.max(self.plus.sdf(pts if self.dim == 2 else pts[:, 0])))

    def shell(self):
        """The open region between the two boundaries."""
        if self.dim == 1:
            return IntervalUnion((Interval(self.plus.a, self.minus.a),
                                  Interval(self.minus.b, self.plus.b)))
        return Annulus(self.plus, self.minus)

    def to_dict(self):
        return {"minus": self.minus.to_dict(), "plus": self.plus.to_dict()}


def domain_from_spec(spec):
    """Build a domain from a config mapping (or a bare ``[a, b]`` pair)."""
    if isinstance(spec, (list, tuple)):
        return Interval(float(spec[0]), float(spec[1]))
    kind = spec.get("kind", "interval" if "a" in spec else "disc")
    if kind == "interval":
        return Interval(float(spec["a"]), float(spec["b"]))
    if kind == "disc":
        return Disc(tuple(spec["center"]), float(spec["radius"]))
    raise ValueError(f"unknown domain kind {kind!r}")
