"""Potential fields with analytic value, gradient and Hessian evaluators.

Points follow one convention everywhere: an array whose last axis has length
``dim``.  In 1D a bare scalar or a flat array of ``n`` numbers is read as one
or ``n`` points.  Evaluators return one value per point, with the point axis
dropped for single-point input.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field, replace
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

__all__ = [
    "ScalarField",
    "as_points",
    "eval_field",
    "polynomial1d",
    "harmonic1d",
    "doublewell1d",
    "triplewell1d",
    "flatbottom1d",
    "multiflat1d",
    "fig_ok_1d",
    "fig_notok_1d",
    "radial2d",
    "multiwell2d",
    "radialspline2d",
    "bump",
    "constant",
]


def as_points(x, dim: int) -> tuple[np.ndarray, bool]:
    """Return ``(points of shape (n, dim), single)`` for any accepted input."""
    a = np.asarray(x, dtype=float)
    if dim == 1:
        if a.ndim == 0:
            return a.reshape(1, 1), True
        if a.ndim == 1:
            return a.reshape(-1, 1), False
        if a.shape[-1] != 1:
            raise ValueError(f"expected trailing axis of length 1, got {a.shape}")
        return a.reshape(-1, 1), False
    if a.ndim == 1:
        if a.shape[0] != dim:
            raise ValueError(f"expected a point of length {dim}, got {a.shape}")
        return a.reshape(1, dim), True
    if a.shape[-1] != dim:
        raise ValueError(f"expected trailing axis of length {dim}, got {a.shape}")
    return a.reshape(-1, dim), False


@dataclass(frozen=True)
class ScalarField:
    """A smooth potential on R^dim.

    The three callables act on arrays of shape ``(n, dim)`` and return arrays
    of shape ``(n,)``, ``(n, dim)`` and ``(n, dim, dim)``.
    """

    name: str
    dim: int
    value_fn: Callable[[np.ndarray], np.ndarray]
    gradient_fn: Callable[[np.ndarray], np.ndarray]
    hessian_fn: Callable[[np.ndarray], np.ndarray]
    params: dict = dc_field(default_factory=dict)
    smoothness_note: str = "C-infinity"
    # optional compact description of a 1D gradient for compiled samplers:
    # (descending coefficients of f', array of (center, radius, amplitude) bumps)
    kernel: tuple | None = dc_field(default=None, compare=False, repr=False)

    def value(self, x):
        p, single = as_points(x, self.dim)
        v = self.value_fn(p)
        return float(v[0]) if single else v

    def gradient(self, x):
        p, single = as_points(x, self.dim)
        g = self.gradient_fn(p)
        return g[0] if single else g

    def hessian(self, x):
        p, single = as_points(x, self.dim)
        H = self.hessian_fn(p)
        return H[0] if single else H

    def grad_norm(self, x):
        p, single = as_points(x, self.dim)
        n = np.linalg.norm(self.gradient_fn(p), axis=1)
        return float(n[0]) if single else n

    def __add__(self, other: "ScalarField") -> "ScalarField":
        if not isinstance(other, ScalarField):
            return NotImplemented
        if other.dim != self.dim:
            raise ValueError("cannot add fields of different dimension")
        a, b = self, other
        note = a.smoothness_note if a.smoothness_note == b.smoothness_note else (
            f"{a.smoothness_note}; {b.smoothness_note}")
        return ScalarField(
            name=f"{a.name}+{b.name}",
            dim=a.dim,
            value_fn=lambda p: a.value_fn(p) + b.value_fn(p),
            gradient_fn=lambda p: a.gradient_fn(p) + b.gradient_fn(p),
            hessian_fn=lambda p: a.hessian_fn(p) + b.hessian_fn(p),
            params={"terms": [a.params, b.params]},
            smoothness_note=note,
            kernel=_add_kernels(a.kernel, b.kernel),
        )

    def negated(self) -> "ScalarField":
        a = self
        return ScalarField(
            name=f"-{a.name}",
            dim=a.dim,
            value_fn=lambda p: -a.value_fn(p),
            gradient_fn=lambda p: -a.gradient_fn(p),
            hessian_fn=lambda p: -a.hessian_fn(p),
            params=dict(a.params),
            smoothness_note=a.smoothness_note,
        )

    def shifted(self, c: float) -> "ScalarField":
        """``f - c``; used to normalise before exponentiating."""
        a = self
        return ScalarField(
            name=a.name,
            dim=a.dim,
            value_fn=lambda p: a.value_fn(p) - c,
            gradient_fn=a.gradient_fn,
            hessian_fn=a.hessian_fn,
            params=dict(a.params),
            smoothness_note=a.smoothness_note,
            kernel=a.kernel,
        )


def _add_kernels(k1, k2):
    if k1 is None or k2 is None:
        return None
    c1, b1 = k1
    c2, b2 = k2
    n = max(len(c1), len(c2))
    c = np.zeros(n)
    c[n - len(c1):] += c1
    c[n - len(c2):] += c2
    return c, np.concatenate([b1, b2])


def eval_field(field: ScalarField, x):
    """Value, gradient and Hessian of ``field`` at a single point ``x``."""
    if not np.all(np.isfinite(np.asarray(x, dtype=float))):
        raise ValueError("evaluation point must be finite")
    return field.value(x), field.gradient(x), field.hessian(x)


# ---------------------------------------------------------------------------
# 1D fields


def _from_1d(name, f, df, d2f, params, note="C-infinity") -> ScalarField:
    return ScalarField(
        name=name,
        dim=1,
        value_fn=lambda p: f(p[:, 0]),
        gradient_fn=lambda p: df(p[:, 0])[:, None],
        hessian_fn=lambda p: d2f(p[:, 0])[:, None, None],
        params=params,
        smoothness_note=note,
    )


def _horner(P: Polynomial):
    # plain Horner loop; much cheaper than Polynomial.__call__ on short arrays
    c = [float(v) for v in P.coef[::-1]]

    def ev(x):
        y = np.full(np.shape(x), c[0])
        for a in c[1:]:
            y = y * x + a
        return y

    return ev


def polynomial1d(coeffs, name: str = "polynomial1d") -> ScalarField:
    """Polynomial with ascending coefficients ``c0 + c1 x + c2 x^2 + ...``."""
    P = Polynomial(np.asarray(coeffs, dtype=float))
    dP, d2P = P.deriv(1), P.deriv(2)
    f = _from_1d(name, _horner(P), _horner(dP), _horner(d2P), {"coeffs": [float(c) for c in P.coef]})
    dc = dP.coef[::-1].astype(float) if len(dP.coef) else np.zeros(1)
    return replace(f, kernel=(dc, np.zeros((0, 3))))


def harmonic1d(center: float = 0.0, stiffness: float = 1.0) -> ScalarField:
    k, c = float(stiffness), float(center)
    f = polynomial1d([0.5 * k * c * c, -k * c, 0.5 * k], name="harmonic1d")
    return replace(f, params={"center": c, "stiffness": k})


def doublewell1d(a: float = 0.5, barrier: float = 1.0 / 16.0, tilt: float = 0.0) -> ScalarField:
    """``barrier * ((x/a)^2 - 1)^2 + tilt * x``; the defaults give ``(x^2 - 1/4)^2``."""
    s = barrier / a**4
    # s (x^2 - a^2)^2 = s x^4 - 2 s a^2 x^2 + s a^4
    f = polynomial1d([s * a**4, tilt, -2 * s * a * a, 0.0, s], name="doublewell1d")
    return replace(f, params={"a": a, "barrier": barrier, "tilt": tilt})


def _poly_from_derivative_roots(roots, scale, tilt, name, params):
    """Polynomial whose derivative is ``scale * prod(x - r) + tilt``, with f(0) = 0."""
    dP = Polynomial.fromroots(roots) * scale + Polynomial([tilt])
    P = dP.integ()
    f = polynomial1d(P.coef, name=name)
    return replace(f, params=params)


def triplewell1d(scale: float = 60.0, tilt: float = 0.02, wells: float = 0.6,
                 saddles: float = 0.3) -> ScalarField:
    """Three wells at ``0, +-wells`` separated by saddles at ``+-saddles``.

    A small linear ``tilt`` separates the critical values.
    """
    roots = [-wells, -saddles, 0.0, saddles, wells]
    return _poly_from_derivative_roots(
        roots, scale, tilt, "triplewell1d",
        {"scale": scale, "tilt": tilt, "wells": wells, "saddles": saddles})


def fig_ok_1d() -> ScalarField:
    """Two wells in (-0.8, 0.8) separated by a low saddle; both wells sit far
    enough (in Agmon distance) below the boundary of the inner domain."""
    # f' = 10 (x + 0.45)(x + 0.05)(x - 0.4) + 0.15
    return _poly_from_derivative_roots([-0.45, -0.05, 0.4], 10.0, 0.15, "fig-ok-1d", {})


def fig_notok_1d() -> ScalarField:
    """Shallow left well next to the inner boundary, deep right well behind a
    high saddle: the Agmon condition fails while the other hypotheses hold."""
    # f' = 10 (x + 0.6)(x + 0.3)(x - 0.55)
    return _poly_from_derivative_roots([-0.6, -0.3, 0.55], 10.0, 0.0, "fig-notok-1d", {})


def _flat_wall(s, k, w):
    """``k s^2 exp(-w/s)`` for s > 0 and 0 otherwise, with two derivatives.

    All derivatives vanish as s -> 0+, so gluing to a flat piece is smooth.
    """
    s = np.asarray(s, dtype=float)
    pos = s > 0
    sp = np.where(pos, s, 1.0)
    e = np.where(pos, np.exp(-w / sp), 0.0)
    v = k * sp * sp * e
    d1 = k * e * (2 * sp + w)
    d2 = k * e * (2 + 2 * w / sp + w * w / (sp * sp))
    z = np.zeros_like(s)
    return np.where(pos, v, z), np.where(pos, d1, z), np.where(pos, d2, z)


def flatbottom1d(a1: float = -0.15, b1: float = 0.15, a_plus: float = -1.0,
                 b_plus: float = 1.0, stiffness: float = 2.0, width: float = 0.05) -> ScalarField:
    """Zero on ``[a1, b1]`` and smoothly increasing away from it.

    ``a_plus``/``b_plus`` are recorded as the default outer domain.
    """
    if not a_plus < a1 <= b1 < b_plus:
        raise ValueError("need a_plus < a1 <= b1 < b_plus")

    def parts(x):
        vr, dr, d2r = _flat_wall(x - b1, stiffness, width)
        vl, dl, d2l = _flat_wall(a1 - x, stiffness, width)
        return vr + vl, dr - dl, d2r + d2l

    return _from_1d(
        "flatbottom1d",
        lambda x: parts(x)[0], lambda x: parts(x)[1], lambda x: parts(x)[2],
        {"a1": a1, "b1": b1, "a+": a_plus, "b+": b_plus, "stiffness": stiffness, "width": width},
    )


def multiflat1d(intervals=((-1.5, -1.2), (-0.8, 0.8), (1.2, 1.5)),
                levels=(0.0, 0.25, 0.02), a_plus: float = -2.0, b_plus: float = 2.0,
                stiffness: float = 2.0, width: float = 0.05) -> ScalarField:
    """Piecewise flat potential with ``2N + 1`` critical intervals.

    Consecutive plateaus at heights ``levels`` are joined by smooth monotone
    transitions; outside the outer plateaus the potential rises like
    :func:`flatbottom1d`.  The default middle plateau is a wide maximum: its
    lowest flat mode (about h^2 pi^2 / 1.6^2) lies below h^(6/5) at h = 0.1
    while the next one does not.
    """
    iv = [(float(a), float(b)) for a, b in intervals]
    lv = [float(v) for v in levels]
    if len(iv) != len(lv) or len(iv) % 2 == 0:
        raise ValueError("need an odd number of intervals with one level each")

    def step(t):
        # smooth 0 -> 1 transition on (0, 1) with all derivatives vanishing at the ends
        t = np.asarray(t, dtype=float)
        inside = (t > 0) & (t < 1)
        tc = np.clip(t, 1e-12, 1 - 1e-12)
        a = np.where(inside, np.exp(-1.0 / tc), 0.0)
        b = np.where(inside, np.exp(-1.0 / (1 - tc)), 0.0)
        da = np.where(inside, a / tc**2, 0.0)
        db = np.where(inside, -b / (1 - tc) ** 2, 0.0)
        d2a = np.where(inside, a * (1 - 2 * tc) / tc**4, 0.0)
        d2b = np.where(inside, b * (1 - 2 * (1 - tc)) / (1 - tc) ** 4, 0.0)
        s = a + b
        ss = np.where(inside, s, 1.0)
        S = np.where(t >= 1, 1.0, np.where(inside, a / ss, 0.0))
        dS = np.where(inside, (da * b - a * db) / ss**2, 0.0)
        num = da * b - a * db
        dnum = d2a * b - a * d2b
        ds = da + db
        d2S = np.where(inside, (dnum * ss - 2 * num * ds) / ss**3, 0.0)
        return S, dS, d2S

    def parts(x):
        x = np.asarray(x, dtype=float)
        v = np.full_like(x, lv[0])
        d1 = np.zeros_like(x)
        d2 = np.zeros_like(x)
        for k in range(len(iv) - 1):
            lo, hi = iv[k][1], iv[k + 1][0]
            L = hi - lo
            S, dS, d2S = step((x - lo) / L)
            jump = lv[k + 1] - lv[k]
            v += jump * S
            d1 += jump * dS / L
            d2 += jump * d2S / (L * L)
        vr, dr, d2r = _flat_wall(x - iv[-1][1], stiffness, width)
        vl, dl, d2l = _flat_wall(iv[0][0] - x, stiffness, width)
        return v + vr + vl, d1 + dr - dl, d2 + d2r + d2l

    return _from_1d(
        "multiflat1d",
        lambda x: parts(x)[0], lambda x: parts(x)[1], lambda x: parts(x)[2],
        {"intervals": [list(t) for t in iv], "levels": lv, "a+": a_plus, "b+": b_plus,
         "stiffness": stiffness, "width": width},
    )


# ---------------------------------------------------------------------------
# 2D radial fields
#
# A radial profile p(r) gives grad = (p'(r)/r) x and
# Hess = p'' rr^T/r^2 + (p'/r)(I - rr^T/r^2).  Profiles supply p'/r directly
# so the origin needs no special casing.


def _radial_field(name, profile, params, note, center=(0.0, 0.0), scale=1.0):
    """Field ``x -> profile(|x - center| / scale)``."""
    c = np.asarray(center, dtype=float)
    s = float(scale)

    def unpack(p):
        y = (p - c) / s
        r = np.sqrt(np.sum(y * y, axis=1))
        v, dpr, d2p = profile(r)
        return y, r, v, dpr, d2p

    def value(p):
        return unpack(p)[2]

    def gradient(p):
        y, r, v, dpr, d2p = unpack(p)
        return dpr[:, None] * y / s

    def hessian(p):
        y, r, v, dpr, d2p = unpack(p)
        rr = np.where(r > 0, r, 1.0)
        u = y / rr[:, None]
        P = np.einsum("ni,nj->nij", u, u)
        P[r == 0] = 0.0
        eye = np.broadcast_to(np.eye(2), P.shape)
        d2p = np.where(r > 0, d2p, dpr)
        H = d2p[:, None, None] * P + dpr[:, None, None] * (eye - P)
        return H / (s * s)

    return ScalarField(name, 2, value, gradient, hessian, params, note)


def _phi_in(r):
    """``exp(-1/(r^2 - 1)^2)`` on r < 1, zero outside; returns (p, p'/r, p'')."""
    r = np.asarray(r, dtype=float)
    q = r * r - 1.0
    inside = q < -1e-3
    qs = np.where(inside, q, -1.0)
    p = np.where(inside, np.exp(-1.0 / (qs * qs)), 0.0)
    # p' = p * 4 r / q^3 ; p'' = p (4 r / q^3)^2 + p (4/q^3 - 24 r^2 / q^4)
    dpr = np.where(inside, p * 4.0 / qs**3, 0.0)
    d2p = np.where(inside, p * (16.0 * r * r / qs**6 + 4.0 / qs**3 - 24.0 * r * r / qs**4), 0.0)
    return p, dpr, d2p


def _phi_ext_half(r):
    """``(r/2 - 1)^4`` for r > 2, zero otherwise; returns (p, p'/r, p'')."""
    r = np.asarray(r, dtype=float)
    t = np.maximum(r / 2.0 - 1.0, 0.0)
    rr = np.where(r > 0, r, 1.0)
    p = t**4
    dpr = np.where(r > 0, 2.0 * t**3 / rr, 0.0)
    d2p = 3.0 * t**2
    return p, dpr, d2p


_EXT_NOTE = "C3 at |x| = 2 (exterior piece (|x|/2 - 1)^4)"


def radial2d(R: float = 4.0) -> ScalarField:
    """Bump of height e^-1 on the unit disc plus a convex exterior wall beyond |x| = 2.

    ``R`` only parametrises the default domain pair (discs centred at (-R, 0)).
    """
    inner = _radial_field("phi_in", _phi_in, {}, "C-infinity")
    outer = _radial_field("phi_ext", _phi_ext_half, {}, _EXT_NOTE)
    f = inner + outer
    return ScalarField("radial2d", 2, f.value_fn, f.gradient_fn, f.hessian_fn,
                       {"R": float(R)}, _EXT_NOTE)


def multiwell2d(centers=((0.0, 0.0),), radii=(1.0,), R: float = 4.0) -> ScalarField:
    """Exterior wall plus one bump ``phi_in((x - x_k)/r_k)`` per centre."""
    if len(centers) != len(radii):
        raise ValueError("centers and radii must have the same length")
    f = _radial_field("phi_ext", _phi_ext_half, {}, _EXT_NOTE)
    for c, r in zip(centers, radii):
        f = f + _radial_field("phi_in", _phi_in, {}, "C-infinity", center=c, scale=r)
    return ScalarField("multiwell2d", 2, f.value_fn, f.gradient_fn, f.hessian_fn,
                       {"centers": [list(map(float, c)) for c in centers],
                        "radii": [float(r) for r in radii], "R": float(R)}, _EXT_NOTE)


def radialspline2d(knots) -> ScalarField:
    """Radial profile given by a cubic spline through ``(r_i, value_i)`` knots.

    The spline is clamped with zero slope at the first knot, which must be r = 0.
    """
    from scipy.interpolate import CubicSpline

    k = np.asarray(knots, dtype=float)
    if k.ndim != 2 or k.shape[1] != 2 or k[0, 0] != 0.0:
        raise ValueError("knots must be (r, value) pairs starting at r = 0")
    S = CubicSpline(k[:, 0], k[:, 1], bc_type=((1, 0.0), "not-a-knot"))
    dS, d2S = S.derivative(1), S.derivative(2)

    def profile(r):
        rr = np.where(r > 0, r, 1.0)
        dpr = np.where(r > 0, dS(r) / rr, d2S(0.0))
        return S(r), dpr, d2S(r)

    return _radial_field("radialspline2d", profile, {"knots": k.tolist()}, "C2 (cubic spline)")


# ---------------------------------------------------------------------------
# perturbations


def bump(center, radius: float, amplitude: float, dim: int | None = None) -> ScalarField:
    """Smooth compactly supported bump ``A exp(1 - 1/(1 - s^2))``, s = |x - c|/radius.

    Its support is the closed ball of the given radius.
    """
    c = np.atleast_1d(np.asarray(center, dtype=float))
    d = c.shape[0] if dim is None else dim
    rad, A = float(radius), float(amplitude)

    def parts(p):
        y = (p - c) / rad
        s2 = np.sum(y * y, axis=1)
        inside = s2 < 1.0
        q = np.where(inside, 1.0 - s2, 1.0)
        e = np.where(inside, A * np.exp(1.0 - 1.0 / q), 0.0)
        # g(s2) = A exp(1 - 1/(1 - s2)); g' = -g/q^2 ; g'' = g (1/q^4 - 2/q^3)
        g1 = np.where(inside, -e / q**2, 0.0)
        g2 = np.where(inside, e * (1.0 / q**4 - 2.0 / q**3), 0.0)
        return y, e, g1, g2

    def value(p):
        return parts(p)[1]

    def gradient(p):
        y, e, g1, g2 = parts(p)
        return (2.0 * g1[:, None] * y) / rad

    def hessian(p):
        y, e, g1, g2 = parts(p)
        eye = np.broadcast_to(np.eye(d), (p.shape[0], d, d))
        H = 4.0 * g2[:, None, None] * np.einsum("ni,nj->nij", y, y) + 2.0 * g1[:, None, None] * eye
        return H / (rad * rad)

    kern = (np.zeros(1), np.array([[c[0], rad, A]])) if d == 1 else None
    return ScalarField("bump", d, value, gradient, hessian,
                       {"center": c.tolist(), "radius": rad, "amplitude": A}, kernel=kern)


def constant(value: float = 0.0, dim: int = 1) -> ScalarField:
    v = float(value)
    return ScalarField(
        "constant", dim,
        lambda p: np.full(p.shape[0], v),
        lambda p: np.zeros((p.shape[0], dim)),
        lambda p: np.zeros((p.shape[0], dim, dim)),
        {"value": v},
    )
