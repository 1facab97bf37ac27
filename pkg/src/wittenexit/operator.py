"""Lattice grids and exponentially fitted Witten Laplacians.

The 0-form operator is assembled edge by edge.  An edge (i, j) of length L
contributes ``-h^2/L^2`` off the diagonal and ``h^2/L^2 exp((f_i - f_j)/h)``
to the diagonal of row i.  This is the symmetric form of the
Scharfetter-Gummel flux with stationary weights ``exp(-2 f/h)``, so the vector
``exp(-f/h)`` is annihilated exactly by the Neumann operator.  Dirichlet
conditions add ``h^2/(theta L^2) exp((f_i - f_b)/h)`` for every edge cut by
the boundary at fraction ``theta``, with ``f_b`` taken at the crossing point.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import ConsistencyWarning, DimensionError, HRangeError, Overflow, TooCoarse
from .potential.fields import ScalarField

__all__ = [
    "Grid",
    "DiscreteOperator",
    "build_grid",
    "grid_for",
    "default_spacing",
    "assemble_witten0",
    "assemble_witten1_1d",
    "export_matrix_market",
    "h_guard",
]

_EXP_MAX = 700.0


@dataclass(frozen=True)
class Grid:
    """Active lattice nodes of a domain.

    ``edges`` join active neighbours (axis directions only) and have lengths
    ``edge_len``.  Each entry of the ``cut_*`` arrays is a lattice edge from an
    active node to a node outside the domain, crossing the boundary at
    ``cut_points`` a fraction ``cut_theta`` of the way along.  ``block`` labels
    the connected component of the domain each node belongs to (1D unions).
    """

    dim: int
    spacing: float
    nodes: np.ndarray
    lattice: np.ndarray
    weights: np.ndarray
    edges: np.ndarray
    edge_len: np.ndarray
    cut_nodes: np.ndarray
    cut_points: np.ndarray
    cut_theta: np.ndarray
    cut_len: np.ndarray
    cut_normals: np.ndarray
    block: np.ndarray
    centering: str
    domain: object
    shape: tuple = ()
    origin: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    @property
    def classification(self) -> np.ndarray:
        """``"interior"`` or ``"boundary-adjacent"`` per node."""
        c = np.full(self.n, "interior", dtype=object)
        c[np.unique(self.cut_nodes)] = "boundary-adjacent"
        return c

    @property
    def boundary_points(self) -> np.ndarray:
        return np.unique(np.round(self.cut_points, 14), axis=0)

    def coords(self) -> np.ndarray:
        return self.nodes[:, 0] if self.dim == 1 else self.nodes


def _grid_1d(domain, spacing, centering, min_nodes):
    nodes, weights, edges, elen = [], [], [], []
    cuts = []  # (node, point, theta, length, normal)
    block = []
    off = 0
    for b, I in enumerate(domain.components):
        n = max(int(round((I.b - I.a) / spacing)), 1)
        dx = (I.b - I.a) / n
        if centering == "vertex":
            x = I.a + dx * np.arange(1, n)
            th = 1.0
        else:
            x = I.a + dx * (np.arange(n) + 0.5)
            th = 0.5
        if len(x) < min_nodes:
            raise TooCoarse(f"{len(x)} nodes across ({I.a}, {I.b}); need at least {min_nodes}")
        k = len(x)
        nodes.append(x)
        weights.append(np.full(k, dx))
        edges.append(np.stack([np.arange(k - 1), np.arange(1, k)], axis=1) + off)
        elen.append(np.full(k - 1, dx))
        cuts.append((off, I.a, th, dx, -1.0))
        cuts.append((off + k - 1, I.b, th, dx, 1.0))
        block.append(np.full(k, b))
        off += k
    x = np.concatenate(nodes)
    cn, cp, ct, cl, cnorm = (np.array(v) for v in zip(*cuts))
    return Grid(
        dim=1, spacing=float(spacing), nodes=x[:, None],
        lattice=np.arange(len(x))[:, None], weights=np.concatenate(weights),
        edges=np.concatenate(edges).astype(np.int64), edge_len=np.concatenate(elen),
        cut_nodes=cn.astype(np.int64), cut_points=cp[:, None].astype(float),
        cut_theta=ct.astype(float), cut_len=cl.astype(float), cut_normals=cnorm[:, None].astype(float),
        block=np.concatenate(block), centering=centering, domain=domain,
        shape=(len(x),), origin=np.array([x[0]]),
    )


def _bisect_cuts(domain, start, step):
    """Fraction t in (0, 1] where ``start + t step`` meets the boundary."""
    lo = np.zeros(len(start))
    hi = np.ones(len(start))
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        inside = domain.sdf(start + mid[:, None] * step) < 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return 0.5 * (lo + hi)


def _grid_2d(domain, spacing, centering, min_nodes):
    lo, hi = domain.bbox
    n = np.ceil((hi - lo) / spacing).astype(int) + 1
    shift = 0.0 if centering == "vertex" else 0.5
    axes = [lo[k] + spacing * (np.arange(n[k]) + shift) for k in range(2)]
    X, Y = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    active = (domain.sdf(pts) < 0).reshape(X.shape)
    if domain.diameter / spacing - 1 < min_nodes:
        raise TooCoarse(f"spacing {spacing} leaves fewer than {min_nodes} nodes across the domain")
    idx = -np.ones(X.shape, dtype=np.int64)
    idx[active] = np.arange(int(active.sum()))
    lat = np.argwhere(active)
    nodes = np.stack([X[active], Y[active]], axis=1)

    edges = []
    cut_i, cut_dir = [], []
    for d, (di, dj) in enumerate([(1, 0), (0, 1), (-1, 0), (0, -1)]):
        ii, jj = lat[:, 0] + di, lat[:, 1] + dj
        valid = (ii >= 0) & (ii < n[0]) & (jj >= 0) & (jj < n[1])
        nb = np.full(len(lat), -1, dtype=np.int64)
        nb[valid] = idx[ii[valid], jj[valid]]
        me = idx[lat[:, 0], lat[:, 1]]
        if d < 2:
            ok = nb >= 0
            edges.append(np.stack([me[ok], nb[ok]], axis=1))
        out = nb < 0
        cut_i.append(me[out])
        cut_dir.append(np.tile([di, dj], (int(out.sum()), 1)))
    edges = np.concatenate(edges)
    cut_nodes = np.concatenate(cut_i)
    dirs = np.concatenate(cut_dir).astype(float)
    start = nodes[cut_nodes]
    theta = _bisect_cuts(domain, start, dirs * spacing)
    cpts = start + theta[:, None] * dirs * spacing
    return Grid(
        dim=2, spacing=float(spacing), nodes=nodes, lattice=lat,
        weights=np.full(len(nodes), spacing * spacing),
        edges=edges.astype(np.int64), edge_len=np.full(len(edges), float(spacing)),
        cut_nodes=cut_nodes, cut_points=cpts, cut_theta=theta,
        cut_len=np.full(len(cut_nodes), float(spacing)), cut_normals=dirs,
        block=np.zeros(len(nodes), dtype=np.int64), centering=centering, domain=domain,
        shape=tuple(int(v) for v in n), origin=np.array([axes[0][0], axes[1][0]]),
    )


def build_grid(domain, spacing: float, centering: str = "vertex", min_nodes: int = 8) -> Grid:
    """Uniform lattice on ``domain``; nodes strictly inside are active.

    ``centering="vertex"`` puts lattice nodes on 1D endpoints (which become
    cut edges with fraction 1); ``"cell"`` uses cell centres, the natural
    choice for no-flux conditions.  Raises :class:`TooCoarse` when fewer than
    ``min_nodes`` nodes fit across the domain.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    if centering not in ("vertex", "cell"):
        raise ValueError("centering must be 'vertex' or 'cell'")
    if domain.dim == 1:
        return _grid_1d(domain, spacing, centering, min_nodes)
    return _grid_2d(domain, spacing, centering, min_nodes)


def grid_for(domain, spacing: float, bc: str, **kw) -> Grid:
    """Cell-centred grid for Neumann problems in 1D, vertex grid otherwise."""
    centering = "cell" if (bc == "neumann" and domain.dim == 1) else "vertex"
    return build_grid(domain, spacing, centering=centering, **kw)


def default_spacing(field: ScalarField, domain, h: float, max_nodes: int | None = None) -> float:
    """``h / (8 max|grad f|)``, coarsened if needed to respect ``max_nodes``.

    The default node budget is 10^4 in 1D and 300^2 in 2D.
    """
    from .potential.critical import seed_grid

    lo, hi = domain.bbox
    ext = float(np.max(hi - lo))
    pts = seed_grid(domain, ext / 400, closed=True)
    gmax = float(np.max(np.linalg.norm(field.gradient_fn(pts), axis=1)))
    dx = h / (8.0 * gmax) if gmax > 0 else ext / 100
    if max_nodes is None:
        max_nodes = 10_000 if domain.dim == 1 else 300 * 300
    per_axis = max_nodes if domain.dim == 1 else int(np.sqrt(max_nodes))
    return max(dx, ext / per_axis)


@dataclass(frozen=True)
class DiscreteOperator:
    """Sparse symmetric Witten Laplacian on a grid.

    ``fmin`` is the constant subtracted from f before any exponential is
    formed; ``field`` is the potential the 0-form operator was built from
    (for 1-forms, the negated potential is used internally).
    """

    matrix: sp.csr_matrix
    grid: Grid
    bc: str
    form_degree: int
    h: float
    field: ScalarField
    fmin: float
    fvals: np.ndarray

    @property
    def norm(self) -> float:
        """Maximum absolute row sum; bounds the spectral norm from above."""
        return float(np.max(np.abs(self.matrix).sum(axis=1)))

    def kernel_vector(self) -> np.ndarray:
        """``exp(-(f - min f)/h)`` at the nodes (of the potential actually used)."""
        return np.exp(-(self.fvals - self.fmin) / self.h)


def _check_mesh(field, grid, h):
    g = np.linalg.norm(field.gradient_fn(grid.nodes), axis=1)
    gmax = float(np.max(g)) if len(g) else 0.0
    if gmax > 0 and grid.spacing > h / (2.0 * gmax):
        warnings.warn(
            f"spacing {grid.spacing:.3g} exceeds h/(2 max|grad f|) = {h / (2 * gmax):.3g}",
            ConsistencyWarning, stacklevel=3)


def _bc(bc: str) -> str:
    b = bc.lower()
    if b not in ("dirichlet", "neumann"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    return b


def assemble_witten0(field: ScalarField, grid: Grid, bc: str, h: float,
                     check_mesh: bool = True) -> DiscreteOperator:
    """Witten Laplacian ``-h^2 Lap + |grad f|^2 - h Lap f`` on 0-forms."""
    bc = _bc(bc)
    if h <= 0:
        raise ValueError("h must be positive")
    if check_mesh:
        _check_mesh(field, grid, h)
    fv = field.value_fn(grid.nodes)
    i, j = grid.edges[:, 0], grid.edges[:, 1]
    c = h * h / grid.edge_len**2
    dij = (fv[i] - fv[j]) / h
    parts_r = [i, j, i, j]
    parts_c = [j, i, i, j]
    if np.any(np.abs(dij) > _EXP_MAX):
        raise Overflow("exp((f_i - f_j)/h) overflows; refine the grid or increase h")
    parts_v = [-c, -c, c * np.exp(dij), c * np.exp(-dij)]
    fmin = float(fv.min())
    if bc == "dirichlet" and len(grid.cut_nodes):
        fb = field.value_fn(grid.cut_points)
        k = grid.cut_nodes
        e = (fv[k] - fb) / h
        if np.any(e > _EXP_MAX):
            raise Overflow("boundary weight overflows; refine the grid or increase h")
        parts_r.append(k)
        parts_c.append(k)
        parts_v.append(h * h / (grid.cut_theta * grid.cut_len**2) * np.exp(e))
        fmin = min(fmin, float(fb.min()))
    A = sp.coo_matrix((np.concatenate(parts_v), (np.concatenate(parts_r), np.concatenate(parts_c))),
                      shape=(grid.n, grid.n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return DiscreteOperator(A, grid, bc, 0, float(h), field, fmin, fv)


def assemble_witten1_1d(field: ScalarField, grid: Grid, bc: str, h: float,
                        check_mesh: bool = True) -> DiscreteOperator:
    """1D Witten Laplacian on 1-forms through the duality f -> -f, D <-> N."""
    if field.dim != 1 or grid.dim != 1:
        raise DimensionError("1-form operators are only assembled in one dimension")
    bc = _bc(bc)
    dual = "neumann" if bc == "dirichlet" else "dirichlet"
    op = assemble_witten0(field.negated(), grid, dual, h, check_mesh=check_mesh)
    return replace(op, bc=bc, form_degree=1)


def h_guard(kappa_f: float, h: float, floor: float = 1e-12) -> None:
    """Refuse ``h`` for which ``exp(-2 kappa_f/h)`` falls below ``floor``.

    Below that scale the first Dirichlet eigenvalue is lost in double
    precision roundoff relative to the O(1) part of the spectrum.
    """
    if h <= 0:
        raise HRangeError("h must be positive")
    if -2.0 * kappa_f / h < np.log(floor):
        raise HRangeError(f"exp(-2 kappa_f/h) = exp({-2.0 * kappa_f / h:.1f}) < {floor:g} at h = {h:g}")


def export_matrix_market(op: DiscreteOperator, path) -> None:
    comment = f"Witten Laplacian form_degree={op.form_degree} bc={op.bc} h={op.h!r}"
    scipy.io.mmwrite(str(path), op.matrix, comment=comment, symmetry="symmetric", precision=17)
