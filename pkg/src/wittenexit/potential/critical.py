"""Location and classification of interior and boundary critical points."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy import ndimage, optimize

from ..errors import FlatBoundaryWarning, NonConvergence
from .domains import Annulus, Disc
from .fields import ScalarField

__all__ = [
    "CriticalPoint",
    "default_tolerances",
    "find_critical_points",
    "boundary_critical_points",
    "seed_grid",
]


@dataclass
class CriticalPoint:
    """A critical point, a flat critical component, or a boundary critical point.

    ``kind`` is one of ``"interior"``, ``"component"`` (a connected set on
    which f is flat; ``extent`` holds its sample nodes), ``"boundary-dirichlet"``
    (critical point of f on the boundary with outward normal derivative > 0)
    or ``"boundary-neumann"`` (normal derivative < 0).  For boundary points
    ``index`` is the generalized index and ``boundary_index`` the index of the
    restriction of f to the boundary.
    """

    location: np.ndarray
    value: float
    index: int
    hessian_det: float
    kind: str = "interior"
    morse: bool = True
    eigenvalues: np.ndarray | None = None
    normal_derivative: float | None = None
    boundary_index: int | None = None
    param: float | None = None
    extent: np.ndarray | None = dc_field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {
            "location": np.atleast_1d(self.location).tolist(),
            "value": float(self.value),
            "index": int(self.index),
            "hessian_det": float(self.hessian_det),
            "kind": self.kind,
            "morse": bool(self.morse),
        }
        if self.normal_derivative is not None:
            d["normal_derivative"] = float(self.normal_derivative)
            d["boundary_index"] = int(self.boundary_index)
        if self.extent is not None:
            lo, hi = self.extent.min(axis=0), self.extent.max(axis=0)
            d["extent_bbox"] = [lo.tolist(), hi.tolist()]
        return d


def seed_grid(domain, spacing: float, closed: bool = False) -> np.ndarray:
    """Lattice points of the domain's bounding box that lie in the domain.

    With ``closed=True`` points within ``1e-12`` of the boundary are kept.
    """
    lo, hi = domain.bbox
    axes = [np.linspace(l, u, max(int(np.ceil((u - l) / spacing)), 1) + 1) for l, u in zip(lo, hi)]
    if domain.dim == 1:
        pts = axes[0][:, None]
        d = np.atleast_1d(domain.sdf(axes[0]))
    else:
        X, Y = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([X.ravel(), Y.ravel()], axis=1)
        d = np.atleast_1d(domain.sdf(pts))
    keep = d <= 1e-12 if closed else d < 0
    return pts[keep]


def default_tolerances(field: ScalarField, pts: np.ndarray) -> tuple[float, float]:
    """``(tol_grad, tol_eig)`` scaled by the field's gradient and Hessian size."""
    gs = float(np.max(np.linalg.norm(field.gradient_fn(pts), axis=1)))
    hs = float(np.max(np.abs(field.hessian_fn(pts))))
    return 1e-8 * max(gs, 1e-300) if gs > 0 else 1e-12, 1e-6 * hs if hs > 0 else 1e-12


def _classify(field, x, tol_eig, kind="interior") -> CriticalPoint:
    H = field.hessian(x)
    H = np.atleast_2d(H)
    ev = np.linalg.eigvalsh(H)
    return CriticalPoint(
        location=np.atleast_1d(np.asarray(x, dtype=float)).copy(),
        value=float(field.value(x)),
        index=int(np.sum(ev < -tol_eig)),
        hessian_det=float(np.prod(ev)),
        kind=kind,
        morse=bool(np.all(np.abs(ev) > tol_eig)),
        eigenvalues=ev,
    )


def _merge(points: list[CriticalPoint], radius: float, field) -> list[CriticalPoint]:
    kept: list[CriticalPoint] = []
    for cp in sorted(points, key=lambda c: field.grad_norm(c.location if field.dim > 1 else c.location[0])):
        if all(np.linalg.norm(cp.location - k.location) > radius for k in kept):
            kept.append(cp)
    return kept


def _components_1d(xs, mask):
    lab, n = ndimage.label(mask)
    return [xs[lab == k] for k in range(1, n + 1) if np.sum(lab == k) >= 2]


def _find_1d(field, interval, spacing, tol_grad, tol_eig):
    xs = seed_grid(interval, spacing)[:, 0]
    g = field.gradient_fn(xs[:, None])[:, 0]
    H = field.hessian_fn(xs[:, None])[:, 0, 0]
    flat = (np.abs(g) <= tol_grad) & (np.abs(H) <= tol_eig)
    comps = _components_1d(xs, flat)
    in_comp = np.zeros_like(flat)
    for c in comps:
        in_comp |= (xs >= c.min() - 2 * spacing) & (xs <= c.max() + 2 * spacing)

    dfun = lambda t: float(field.gradient_fn(np.array([[t]]))[0, 0])
    on_node = (np.abs(g) <= tol_grad) & ~in_comp
    found = list(xs[on_node])
    for i in np.nonzero(g[:-1] * g[1:] < 0)[0]:
        if in_comp[i] or in_comp[i + 1] or on_node[i] or on_node[i + 1]:
            continue
        try:
            r = optimize.brentq(dfun, xs[i], xs[i + 1], xtol=1e-15, maxiter=200)
        except (RuntimeError, ValueError) as exc:
            raise NonConvergence(f"root bracketing failed: {exc}", cell=(xs[i], xs[i + 1])) from exc
        found.append(r)
    # nodes where |f'| touches zero without changing sign
    ag = np.abs(g)
    for i in range(1, len(xs) - 1):
        if in_comp[i] or on_node[i] or not (ag[i] <= ag[i - 1] and ag[i] <= ag[i + 1]):
            continue
        if g[i - 1] * g[i + 1] <= 0:
            continue
        res = optimize.minimize_scalar(lambda t: dfun(t) ** 2, bounds=(xs[i - 1], xs[i + 1]),
                                       method="bounded", options={"xatol": 1e-14})
        if abs(dfun(res.x)) <= tol_grad:
            found.append(float(res.x))
    pts = [_classify(field, r, tol_eig) for r in found]
    for c in comps:
        mid = c[np.argmin(np.abs(c - c.mean()))]
        cp = _classify(field, mid, tol_eig, kind="component")
        cp.morse = False
        cp.extent = c[:, None]
        cp.location = np.array([0.5 * (c.min() + c.max())])
        ring = field.value_fn(np.array([[c.min() - 2 * spacing], [c.max() + 2 * spacing]]))
        cp.index = _component_index(cp.value, ring, 1)
        pts.append(cp)
    return pts


def _component_index(value, ring_values, dim):
    """0 for a flat minimum, ``dim`` for a flat maximum, 1 otherwise."""
    if np.all(ring_values > value):
        return 0
    if np.all(ring_values < value):
        return dim
    return 1


def _newton(field, x0, tol_grad, max_iter=60, max_dist=None):
    x = np.array(x0, dtype=float)
    for _ in range(max_iter):
        g = field.gradient(x)
        if np.linalg.norm(g) <= tol_grad:
            return x, True
        H = field.hessian(x)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return x, False
        x = x - step
        if max_dist is not None and np.linalg.norm(x - x0) > max_dist:
            return x, False
    return x, np.linalg.norm(field.gradient(x)) <= tol_grad


def _find_2d(field, domain, spacing, tol_grad, tol_eig):
    lo, hi = domain.bbox
    axes = [np.linspace(l, u, int(np.ceil((u - l) / spacing)) + 1) for l, u in zip(lo, hi)]
    X, Y = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    inside = (domain.sdf(pts) < 0).reshape(X.shape)
    G = field.gradient_fn(pts)
    g2 = np.sum(G * G, axis=1).reshape(X.shape)
    Hs = field.hessian_fn(pts)
    hnorm = np.max(np.abs(np.linalg.eigvalsh(Hs)), axis=1).reshape(X.shape)
    flat = inside & (np.sqrt(g2) <= tol_grad) & (hnorm <= tol_eig)
    lab, ncomp = ndimage.label(flat, structure=np.ones((3, 3)))
    near_flat = ndimage.binary_dilation(flat, structure=np.ones((3, 3)), iterations=2)

    g2m = np.where(inside, g2, np.inf)
    local_min = (g2m == ndimage.minimum_filter(g2m, size=3, mode="constant", cval=np.inf))
    seeds = np.argwhere(local_min & inside & ~near_flat)
    Gx = G[:, 0].reshape(X.shape)
    Gy = G[:, 1].reshape(X.shape)

    found = []
    for i, j in seeds:
        x0 = np.array([X[i, j], Y[i, j]])
        x, ok = _newton(field, x0, tol_grad, max_dist=3 * spacing)
        if ok and domain.sdf(x) < 0:
            found.append(_classify(field, x, tol_eig))
            continue
        blk = (slice(max(i - 1, 0), i + 2), slice(max(j - 1, 0), j + 2))
        sign_change = (Gx[blk].min() < 0 < Gx[blk].max()) and (Gy[blk].min() < 0 < Gy[blk].max())
        if sign_change and np.all(inside[blk]):
            raise NonConvergence("Newton iteration failed from a sign-change cell",
                                 cell=(X[blk].min(), X[blk].max(), Y[blk].min(), Y[blk].max()))
    found = [c for c in found if not _in_flat(c.location, axes, flat)]
    for k in range(1, ncomp + 1):
        ext = np.stack([X[lab == k], Y[lab == k]], axis=1)
        cen = ext.mean(axis=0)
        rep = ext[np.argmin(np.linalg.norm(ext - cen, axis=1))]
        cp = _classify(field, rep, tol_eig, kind="component")
        cp.morse = False
        cp.extent = ext
        ring = ndimage.binary_dilation(lab == k, structure=np.ones((3, 3)), iterations=2) & ~(lab == k)
        ring_pts = np.stack([X[ring], Y[ring]], axis=1)
        cp.index = _component_index(cp.value, field.value_fn(ring_pts), 2)
        found.append(cp)
    return found


def _in_flat(x, axes, flat):
    i = int(round((x[0] - axes[0][0]) / (axes[0][1] - axes[0][0])))
    j = int(round((x[1] - axes[1][0]) / (axes[1][1] - axes[1][0])))
    if 0 <= i < flat.shape[0] and 0 <= j < flat.shape[1]:
        return bool(flat[i, j])
    return False


def find_critical_points(field: ScalarField, domain, seed_grid_spacing: float,
                         tol_grad: float | None = None, tol_eig: float | None = None,
                         merge_radius: float | None = None) -> list[CriticalPoint]:
    """Critical points of ``field`` inside ``domain``, sorted by value.

    Seeds come from a lattice of the given spacing and are refined by
    bracketing (1D) or Newton iteration (2D).  Connected sets of lattice
    nodes where both the gradient and the Hessian vanish within tolerance are
    returned as single ``kind="component"`` records flagged non-Morse.
    """
    if field.dim != domain.dim:
        raise ValueError("field and domain dimensions differ")
    tg, te = default_tolerances(field, seed_grid(domain, seed_grid_spacing))
    tol_grad = tg if tol_grad is None else tol_grad
    tol_eig = te if tol_eig is None else tol_eig
    merge_radius = 2.0 * seed_grid_spacing if merge_radius is None else merge_radius
    if field.dim == 1:
        pts = []
        for comp in domain.components:
            pts += _find_1d(field, comp, seed_grid_spacing, tol_grad, tol_eig)
    else:
        pts = _find_2d(field, domain, seed_grid_spacing, tol_grad, tol_eig)
    comps = [c for c in pts if c.kind == "component"]
    pts = _merge([c for c in pts if c.kind != "component"], merge_radius, field) + comps
    return sorted(pts, key=lambda c: (c.value, tuple(np.atleast_1d(c.location))))


def _circle_critical(field, circle: Disc, orient: float, n: int, tol_grad, tol_eig):
    """Critical points of theta -> f(c + r e(theta)); ``orient`` is +1 for an
    outer boundary and -1 when the disc is a hole."""
    r = circle.radius
    th = 2 * np.pi * np.arange(n) / n

    def parts(t):
        p, nrm = circle.point_at(np.atleast_1d(t))
        tan = np.stack([-nrm[:, 1], nrm[:, 0]], axis=1)
        g = field.gradient_fn(p)
        H = field.hessian_fn(p)
        dth = r * np.sum(g * tan, axis=1)
        d2th = r * r * np.einsum("ni,nij,nj->n", tan, H, tan) - r * np.sum(g * nrm, axis=1)
        dn = orient * np.sum(g * nrm, axis=1)
        return p, dth, d2th, dn

    p, d1, d2, dn = parts(th)
    d1n = np.roll(d1, -1)
    flat = (np.abs(d1) <= tol_grad * r) & (np.abs(d2) <= tol_eig * r * r)
    if flat.sum() >= 2:
        warnings.warn(f"f restricted to the circle of radius {r} is flat on an arc "
                      f"({int(flat.sum())} of {n} samples)", FlatBoundaryWarning, stacklevel=3)
    on_node = (np.abs(d1) <= tol_grad * r) & ~flat
    roots = list(th[on_node])
    cells = (d1 * d1n < 0) & ~flat & ~np.roll(flat, -1) & ~on_node & ~np.roll(on_node, -1)
    for i in np.nonzero(cells)[0]:
        a, b = th[i], th[i] + 2 * np.pi / n
        roots.append(optimize.brentq(lambda s: float(parts(s)[1][0]), a, b, xtol=1e-14))
    out = []
    for t in roots:
        pt, _, dd2, ddn = parts(t)
        bidx = 0 if dd2[0] > 0 else 1
        dnv = float(ddn[0])
        out.append(_boundary_point(field, pt[0], t % (2 * np.pi), dnv, bidx, float(dd2[0]) / (r * r)))
    return out


def _boundary_point(field, x, param, dn, bidx, tangential_det):
    kind = "boundary-dirichlet" if dn > 0 else "boundary-neumann"
    index = bidx + 1 if dn > 0 else bidx
    return CriticalPoint(
        location=np.atleast_1d(np.asarray(x, dtype=float)),
        value=float(field.value(x)),
        index=index,
        hessian_det=float(tangential_det),
        kind=kind,
        morse=tangential_det != 0.0,
        normal_derivative=float(dn),
        boundary_index=bidx,
        param=float(param),
    )


def boundary_critical_points(field: ScalarField, domain, n_samples: int = 4096,
                             tol_grad: float | None = None,
                             tol_eig: float | None = None) -> list[CriticalPoint]:
    """Critical points of f restricted to the boundary of ``domain``.

    In 1D both endpoints of every component are returned; their boundary
    index is 0 and ``hessian_det`` is 1 (empty product).  In 2D the boundary
    circles are sampled in angle, sign changes of the angular derivative are
    refined by bracketing, and ``hessian_det`` holds the second derivative
    along arc length.
    """
    if field.dim == 1:
        bs = domain.boundary()
        out = []
        for x, nrm, par in zip(bs.points, bs.normals, bs.param):
            dn = float(field.gradient(x[0])[0] * nrm[0])
            out.append(_boundary_point(field, x[0], par, dn, 0, 1.0))
        return out
    pts = domain.boundary(n_samples).points
    tg, te = default_tolerances(field, pts)
    tol_grad = tg if tol_grad is None else tol_grad
    tol_eig = te if tol_eig is None else tol_eig
    if isinstance(domain, Disc):
        circles = [(domain, 1.0)]
    elif isinstance(domain, Annulus):
        circles = [(domain.outer, 1.0), (domain.inner, -1.0)]
    else:
        raise TypeError(f"unsupported 2D domain {type(domain).__name__}")
    out = []
    for c, o in circles:
        out += _circle_critical(field, c, o, n_samples, tol_grad, tol_eig)
    return sorted(out, key=lambda c: c.value)


def local_minima(points: list[CriticalPoint]) -> list[CriticalPoint]:
    return [c for c in points if c.kind in ("interior", "component") and c.index == 0]


def saddles(points: list[CriticalPoint]) -> list[CriticalPoint]:
    return [c for c in points if c.kind == "interior" and c.index == 1]
